import itertools

import numpy as np
import pytest
from scipy import stats

from analisis.correlacion import spearman
from conftest import corpus_por_temas, tarea_temas
from entrenamiento.ajuste_fino import finetune
from entrenamiento.optimizador import OptimizerHyper
from entrenamiento.preentrenamiento import preentrenar
from modelo.checkpoint import cargar_checkpoint, ruta_checkpoint


def _p_por_fuerza_bruta(x, y):
    rx, ry = stats.rankdata(x), stats.rankdata(y)
    observado = abs(np.corrcoef(rx, ry)[0, 1])
    extremos = total = 0
    for permutacion in itertools.permutations(range(len(ry))):
        total += 1
        if abs(np.corrcoef(rx, ry[list(permutacion)])[0, 1]) >= observado - 1e-12:
            extremos += 1
    return extremos / total


def test_monotona_perfecta():
    resultado = spearman([1, 2, 3, 4, 5], [2, 4, 8, 16, 32])
    assert resultado.rho == pytest.approx(1.0)
    assert resultado.p_value == pytest.approx(2 / 120)
    assert resultado.metodo == "exacto"


def test_inversa():
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]).rho == pytest.approx(-1.0)


@pytest.mark.parametrize("x, y", [
    ([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [2.0, 1.0, 4.0, 3.0, 6.0, 5.0]),
    ([3.1, 1.2, 5.5, 2.0, 4.4, 0.3, 6.6], [1.0, 2.0, 2.0, 3.0, 5.0, 0.5, 4.0]),
    ([1.0, 1.0, 2.0, 3.0, 3.0, 4.0], [6.0, 5.0, 5.0, 2.0, 3.0, 1.0]),
])
def test_valor_p_exacto(x, y):
    resultado = spearman(x, y)
    assert resultado.rho == pytest.approx(stats.spearmanr(x, y)[0])
    assert resultado.p_value == pytest.approx(_p_por_fuerza_bruta(np.array(x), np.array(y)))


def test_aproximacion_t_para_muestras_grandes():
    rng = np.random.default_rng(0)
    x = rng.normal(size=40)
    y = x + rng.normal(size=40)
    y[:5] = y[5]  # empates
    resultado = spearman(x, y)
    esperado = stats.spearmanr(x, y)
    assert resultado.metodo == "t"
    assert resultado.n == 40
    assert resultado.rho == pytest.approx(esperado[0])
    assert resultado.p_value == pytest.approx(esperado[1], rel=1e-6)


@pytest.mark.parametrize("x, y", [
    ([1, 2], [1, 2]),
    ([1, 2, 3], [1, 2]),
    ([1, 1, 1, 1], [1, 2, 3, 4]),
])
def test_entradas_invalidas(x, y):
    with pytest.raises(ValueError):
        spearman(x, y)


def test_invariante_a_transformaciones_monotonas():
    x = [0.5, 2.0, 1.5, 3.0, 9.0, 4.0, 7.5]
    y = [3.0, 1.0, 2.0, 5.0, 4.0, 7.0, 6.0]
    base = spearman(x, y)
    transformada = spearman(np.exp(x), np.log(y))
    assert transformada.rho == pytest.approx(base.rho)
    assert transformada.p_value == pytest.approx(base.p_value)


@pytest.mark.slow
def test_pares_aleatorios_sin_correlacion():
    rng = np.random.default_rng(0)
    resultado = spearman(rng.random(10_000), rng.random(10_000))
    assert abs(resultado.rho) < 0.05


@pytest.mark.slow
def test_perplejidad_y_precision_de_checkpoints(tmp_path, config_chica, tokenizador_temas):
    hyper = OptimizerHyper(peak_lr=1e-3, total_steps=480, batch_size=8)
    entrenador = preentrenar(
        config_chica, corpus_por_temas(480 * 8, seed=1), tokenizador_temas, hyper, corpus_por_temas(64, seed=2),
        log_every=60, run_id="temas", directorio_checkpoints=tmp_path, checkpoint_every=60
    )
    registros = entrenador.log.records
    assert len(registros) >= 6

    tarea = tarea_temas(n=400, seed=0)
    perplejidades, precisiones = [], []
    for registro in registros:
        params, paso, _ = cargar_checkpoint(ruta_checkpoint(tmp_path, "temas", registro.step))
        assert paso == registro.step
        resultado = finetune(params, tarea, tokenizador_temas, epochs=6, batch=16, peak_lr=1e-3)
        perplejidades.append(registro.eval_ppl)
        precisiones.append(resultado.metrica_media)

    assert spearman(perplejidades, precisiones).rho < 0
