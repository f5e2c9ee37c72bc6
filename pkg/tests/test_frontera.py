import math

import numpy as np
import pytest

from analisis.frontera import (
    FrontierPoint, asignar_bins, bordes_log, cargar_frontera, compute_optimal_frontier, guardar_frontera,
    marcar_optimos, puntos_frontera
)
from costos.flops import count_params
from entrenamiento.optimizador import OptimizerHyper
from entrenamiento.registro import RegistroPaso, RunLog
from modelo.configuracion import ModelConfig

CHICA = ModelConfig(E=32, H=32, I=64, L=1, A=1, V=300)
GRANDE = ModelConfig(E=32, H=64, I=64, L=1, A=1, V=300)


def _run(run_id, config, registros):
    log = RunLog(config, OptimizerHyper(), run_id=run_id)
    for step, flops, loss in registros:
        log.records.append(RegistroPaso(step, step * 100, flops, loss, loss, math.exp(loss)))
    return log


@pytest.fixture
def corridas():
    return [
        _run("a", CHICA, [(1, 1, 5.0), (2, 20, 4.0), (3, 500, 3.0)]),
        _run("b", GRANDE, [(1, 2, 4.5), (2, 30, 4.0), (3, 1000, 2.5)]),
    ]


def test_minimo_por_bin(corridas):
    frontera = compute_optimal_frontier(corridas, n_bins=3)
    assert [p.source for p in frontera] == [("b", 1), ("a", 2), ("b", 3)]
    assert [p.loss for p in frontera] == [4.5, 4.0, 2.5]
    assert frontera[1].covariates == (count_params(CHICA), 200)
    assert frontera[0].flops_bin[0] == 1.0 and frontera[-1].flops_bin[1] == pytest.approx(1000.0)


def test_bins_vacios_se_omiten(corridas):
    frontera = compute_optimal_frontier(corridas, n_bins=6)
    assert len(frontera) == 3
    assert [p.flops for p in frontera] == sorted(p.flops for p in frontera)
    for p in frontera:
        assert p.flops_bin[0] <= p.flops <= p.flops_bin[1] * (1 + 1e-12)


def test_empate_prefiere_menos_flops():
    corridas = [_run("a", CHICA, [(1, 40, 3.0)]), _run("b", CHICA, [(1, 20, 3.0)]), _run("c", CHICA, [(1, 1, 9.0)])]
    frontera = compute_optimal_frontier(corridas, n_bins=2)
    assert frontera[-1].source == ("b", 1)


def test_un_solo_valor_de_flops():
    corridas = [_run("a", CHICA, [(1, 50, 3.0)]), _run("b", GRANDE, [(1, 50, 2.0)])]
    frontera = compute_optimal_frontier(corridas)
    assert len(frontera) == 1
    assert frontera[0].source == ("b", 1)


def test_sin_registros():
    with pytest.raises(ValueError):
        compute_optimal_frontier([_run("a", CHICA, [])])
    with pytest.raises(ValueError):
        compute_optimal_frontier([], n_bins=0)


def test_maximo_en_el_ultimo_bin():
    bordes = bordes_log(1.0, 100.0, 4)
    assert list(asignar_bins(np.array([1.0, 100.0]), bordes)) == [0, 3]


def test_bin_invalido():
    with pytest.raises(ValueError):
        FrontierPoint((2.0, 1.0), 1.5, 1.0, ("a", 1), (1, 1))


def test_guardar_y_cargar(tmp_path, corridas):
    frontera = compute_optimal_frontier(corridas, n_bins=3)
    ruta = tmp_path / "frontier.csv"
    guardar_frontera(frontera, ruta)
    assert cargar_frontera(ruta) == frontera


def test_columnas_faltantes(tmp_path):
    ruta = tmp_path / "mala.csv"
    ruta.write_text("flops,loss\n1,2\n")
    with pytest.raises(ValueError):
        cargar_frontera(ruta)


def test_puntos_por_eje(corridas):
    frontera = compute_optimal_frontier(corridas, n_bins=3)
    assert puntos_frontera(frontera, "flops")[:, 0].tolist() == [2.0, 20.0, 1000.0]
    assert puntos_frontera(frontera, "tokens")[:, 0].tolist() == [100.0, 200.0, 300.0]
    assert puntos_frontera(frontera, "params")[0, 0] == count_params(GRANDE)
    with pytest.raises(ValueError):
        puntos_frontera(frontera, "pasos")


def test_marcar_optimos(corridas):
    frontera = compute_optimal_frontier(corridas, n_bins=3)
    tabla = marcar_optimos(corridas, frontera)
    assert len(tabla) == 6
    assert tabla["optimal"].sum() == 3
    assert tabla[tabla["optimal"]]["loss"].tolist() == [4.0, 4.5, 2.5]
