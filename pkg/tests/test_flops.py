import json

import pytest

from costos.flops import CostBreakdown, count_params, flops_entrenamiento, flops_per_sequence, total_flops
from modelo.configuracion import ANCLA, ModelConfig

PASOS = 35_000
LOTE = 256


def test_ancla_por_secuencia():
    desglose = flops_per_sequence(ANCLA)
    assert desglose.c_emb == 1_261_961_216
    assert desglose.c_att == 84_279_296
    assert desglose.c_int == 134_217_728
    assert desglose.c_lmh == 1_245_184_000
    assert desglose.c_forward == 4_255_121_408
    assert desglose.c_backward == 2 * desglose.c_forward
    assert desglose.c_seq == 12_765_364_224


@pytest.mark.parametrize("config, esperado", [
    (ANCLA, 1.143777e17),
    (ANCLA.con(H=32), 4.207952e16),
    (ModelConfig(E=32, H=32, I=128, L=2, A=2), 8.661825e15),
    (ANCLA.con(L=1), 7.326526e16),
])
def test_costo_de_entrenamiento(config, esperado):
    assert flops_entrenamiento(config, PASOS, LOTE) == pytest.approx(esperado, rel=1e-5)


def test_ancla_cerca_del_costo_publicado():
    assert flops_entrenamiento(ANCLA, PASOS, LOTE) == pytest.approx(110e15, rel=0.05)
    assert flops_entrenamiento(ModelConfig(E=32, H=32, I=128, L=2, A=2), PASOS, LOTE) == pytest.approx(8.57e15, rel=0.05)


def test_embeddings_minimos():
    config = ModelConfig(E=3, H=4, I=8, L=1, A=2, V=2, S=1)
    assert flops_per_sequence(config).c_emb == 36


def test_modo_literal_sin_factor_de_secuencia():
    corregido = flops_per_sequence(ANCLA, "s_corrected")
    literal = flops_per_sequence(ANCLA, "verbatim")
    assert corregido.c_int == ANCLA.S * literal.c_int
    assert literal.c_forward == 3_189_768_192
    assert literal.mode == "verbatim"


def test_modo_desconocido():
    with pytest.raises(ValueError):
        flops_per_sequence(ANCLA, "aproximado")


def test_desglose_inconsistente():
    with pytest.raises(ValueError):
        CostBreakdown(1, 1, 1, 1, c_forward=10, c_backward=10, c_seq=20, mode="s_corrected")


def test_total_flops():
    assert total_flops(10, 3, 2) == 60
    assert total_flops(10, 0, 2) == 0
    with pytest.raises(ValueError):
        total_flops(-1, 3, 2)


def test_monotono_en_cada_eje():
    for eje in ("E", "H", "I", "L"):
        chico = ANCLA.con(**{eje: getattr(ANCLA, eje) // 2})
        assert flops_per_sequence(chico).c_seq < flops_per_sequence(ANCLA).c_seq
        assert count_params(chico) < count_params(ANCLA)


def test_a_json():
    datos = json.loads(flops_per_sequence(ANCLA).to_json())
    assert datos["c_seq"] == 12_765_364_224
    assert datos["mode"] == "s_corrected"
