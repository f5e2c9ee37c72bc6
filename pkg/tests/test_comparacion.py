import math

import pytest

from analisis.comparacion import comparar_configuraciones
from costos.flops import count_params
from entrenamiento.optimizador import OptimizerHyper
from entrenamiento.registro import RegistroPaso, RunLog
from modelo.configuracion import ANCLA


def _run(run_id, config, ppl, flops):
    log = RunLog(config, OptimizerHyper(), run_id=run_id)
    log.records.append(RegistroPaso(1, 10, flops, 0.0, math.log(ppl), ppl))
    return log


def test_vocabulario_completo_contra_restringido():
    completo = _run("completo", ANCLA.con(V=30522), 12.0, 2e15)
    restringido = _run("restringido", ANCLA, 9.0, 1e15)
    datos = comparar_configuraciones(completo, restringido).to_dict()

    assert datos["reference"] == "completo"
    assert datos["params"]["delta"] == count_params(ANCLA) - count_params(ANCLA.con(V=30522))
    assert datos["params"]["delta"] < 0
    assert datos["flops"]["pct"] == pytest.approx(-50.0)
    assert datos["perplexity"]["delta"] == pytest.approx(-3.0)


def test_sin_registros():
    vacio = RunLog(ANCLA, OptimizerHyper(), run_id="vacio")
    with pytest.raises(ValueError):
        comparar_configuraciones(vacio, _run("b", ANCLA, 9.0, 1e15))
