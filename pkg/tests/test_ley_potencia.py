import logging

import numpy as np
import pytest

from analisis.ley_potencia import (
    PowerFit, candidatos_por_defecto, detect_break, fit_power_law, fit_power_law_log, r_squared
)

QUIEBRE = 2.2e15
E_BAJO = -0.0929
E_ALTO = -0.1412


def _centros(n_bins=32, lo=1e14, hi=1e17):
    bordes = np.geomspace(lo, hi, n_bins + 1)
    return np.sqrt(bordes[:-1] * bordes[1:])


def _ley(x, C, e, ruido=0.0, rng=None):
    y = C * np.power(x, e)
    if ruido:
        y = y * (1.0 + ruido * rng.standard_normal(x.size))
    return np.column_stack([x, y])


def _con_quiebre(ruido, seed):
    x = _centros()
    rng = np.random.default_rng(seed)
    C_bajo = 30.0
    # Continua en el quiebre salvo un salto de 5% hacia abajo
    C_alto = 0.95 * C_bajo * QUIEBRE ** (E_BAJO - E_ALTO)
    y = np.where(x < QUIEBRE, C_bajo * x ** E_BAJO, C_alto * x ** E_ALTO)
    y = y * (1.0 + ruido * rng.standard_normal(x.size))
    return np.column_stack([x, y])


def test_ajuste_exacto():
    ajuste = fit_power_law(_ley(_centros(20), 25.0, -0.1))
    assert ajuste.e == pytest.approx(-0.1, abs=1e-8)
    assert ajuste.C == pytest.approx(25.0, rel=1e-6)
    assert ajuste.r2 == pytest.approx(1.0)
    assert ajuste.converged
    assert ajuste.n == 20
    assert ajuste.domain == pytest.approx((_centros(20)[0], _centros(20)[-1]))


def test_raiz_inversa_exacta():
    ajuste = fit_power_law(_ley(np.arange(1.0, 21.0), 3.0, -0.5))
    assert ajuste.C == pytest.approx(3.0, abs=1e-6)
    assert ajuste.e == pytest.approx(-0.5, abs=1e-6)


def test_escalar_x_solo_cambia_c():
    puntos = _ley(np.arange(1.0, 21.0), 3.0, -0.5)
    escalados = puntos * np.array([10.0, 1.0])
    original, escalado = fit_power_law(puntos), fit_power_law(escalados)
    assert escalado.e == pytest.approx(original.e, abs=1e-6)
    assert escalado.C == pytest.approx(original.C * 10.0 ** 0.5, rel=1e-6)


def test_ajuste_con_ruido():
    rng = np.random.default_rng(0)
    x = np.geomspace(1.0, 1e3, 32)
    aciertos = 0
    for _ in range(50):
        ajuste = fit_power_law(_ley(x, 20.0, -0.1, ruido=0.01, rng=rng))
        if abs(ajuste.e + 0.1) <= 0.02 and abs(ajuste.C / 20.0 - 1) <= 0.05:
            aciertos += 1
    assert aciertos >= 48


def test_mejora_al_ajuste_logaritmico_en_espacio_crudo():
    puntos = _ley(_centros(), 20.0, -0.1, ruido=0.02, rng=np.random.default_rng(3))
    crudo = fit_power_law(puntos)
    logaritmico = fit_power_law_log(puntos)
    assert logaritmico.space == "log"
    sse = lambda ajuste: np.sum((puntos[:, 1] - ajuste.predecir(puntos[:, 0])) ** 2)
    assert sse(crudo) <= sse(logaritmico) + 1e-12


def test_sin_convergencia_devuelve_el_mejor_punto(caplog):
    puntos = _ley(_centros(), 20.0, -0.1, ruido=0.02, rng=np.random.default_rng(1))
    with caplog.at_level(logging.WARNING):
        ajuste = fit_power_law(puntos, max_iter=1)
    assert not ajuste.converged
    assert ajuste.iterations == 1
    assert "no convergió" in caplog.text


@pytest.mark.parametrize("puntos", [
    [[1.0, 2.0], [2.0, 1.0]],
    [[1.0, 2.0], [2.0, 1.0], [0.0, 1.0]],
    [[1.0, 2.0], [2.0, -1.0], [3.0, 1.0]],
    [[5.0, 2.0], [5.0, 1.0], [5.0, 3.0]],
])
def test_datos_invalidos(puntos):
    with pytest.raises(ValueError):
        fit_power_law(puntos)


def test_y_constante_da_exponente_cero():
    puntos = [[x, 2.0] for x in range(1, 6)]
    for ajuste in (fit_power_law(puntos), fit_power_law_log(puntos)):
        assert ajuste.C == 2.0
        assert ajuste.e == 0.0
        assert ajuste.r2 == 1.0
        assert ajuste.n == 5
    assert r_squared(puntos, fit_power_law(puntos)) == 1.0


def test_r_cuadrada():
    puntos = _ley(np.array([1.0, 2.0, 4.0]), 2.0, 1.0)
    assert r_squared(puntos, PowerFit(2.0, 1.0, 1.0, 3, (1.0, 4.0))) == pytest.approx(1.0)
    # La media como predicción da R² cero
    puntos = np.array([[1.0, 1.0], [2.0, 3.0]])
    assert r_squared(puntos, PowerFit(2.0, 0.0, 0.0, 2, (1.0, 2.0))) == pytest.approx(0.0)


def test_diccionario():
    ajuste = fit_power_law(_ley(_centros(10), 25.0, -0.1))
    assert PowerFit.from_dict(ajuste.to_dict()) == ajuste


def test_candidatos_por_defecto():
    assert candidatos_por_defecto(np.array([4.0, 1.0, 1.0, 16.0])).tolist() == [2.0, 8.0]


def test_quiebre_dentro_de_un_bin():
    ancho = 1e3 ** (1 / 32)
    aciertos = sum(
        1 / ancho <= detect_break(_con_quiebre(0.005, seed)).threshold / QUIEBRE <= ancho
        for seed in range(10)
    )
    assert aciertos >= 9


def test_detecta_el_quiebre():
    resultado = detect_break(_con_quiebre(0.005, 0))
    assert QUIEBRE / 1.25 <= resultado.threshold <= QUIEBRE * 1.25
    assert resultado.has_break
    assert resultado.fit_low.e == pytest.approx(E_BAJO, abs=0.01)
    assert resultado.fit_high.e == pytest.approx(E_ALTO, abs=0.01)
    assert resultado.r2_combinado > fit_power_law(_con_quiebre(0.005, 0)).r2


def test_sin_quiebre():
    resultado = detect_break(_ley(_centros(), 30.0, E_BAJO, ruido=0.001, rng=np.random.default_rng(4)))
    assert not resultado.has_break
    assert abs(resultado.delta_e) < 0.02


def test_candidatos_explicitos_y_paralelo():
    puntos = _con_quiebre(0.005, 2)
    bordes = np.geomspace(1e14, 1e17, 33)[1:-1]
    secuencial = detect_break(puntos, bordes)
    paralelo = detect_break(puntos, bordes, procesos=2)
    assert secuencial.to_dict() == paralelo.to_dict()
    assert secuencial.threshold in bordes


def test_puntos_insuficientes():
    with pytest.raises(ValueError):
        detect_break(_ley(_centros(5), 30.0, -0.1))
    with pytest.raises(ValueError):
        detect_break(_ley(_centros(8), 30.0, -0.1), candidate_thresholds=[1e10])


def test_quiebre_con_meseta_inicial():
    x = np.geomspace(1e14, 1e16, 12)
    y = np.where(x < 1e15, 3.0, 3.0 * (x / 1e15) ** -0.15)
    resultado = detect_break(np.column_stack([x, y]))
    assert resultado.threshold == pytest.approx(np.sqrt(x[5] * x[6]))
    assert resultado.fit_low.e == 0.0
    assert resultado.fit_high.e == pytest.approx(-0.15, abs=1e-6)
    assert resultado.has_break


def test_descarta_umbral_con_un_solo_valor_de_x():
    x = np.array([1.0, 1.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
    puntos = np.column_stack([x, 5.0 * x ** -0.3])
    resultado = detect_break(puntos, candidate_thresholds=[1.5, 3.0])
    assert resultado.threshold == 3.0
    assert resultado.fit_low.n == 4
