import numpy as np
import pytest

from modelo.capas import IGNORAR
from modelo.enmascarado import (
    apply_masking, armar_lote_clasificacion, enmascarar_lote, numero_a_enmascarar, secuencia_clasificacion,
    secuencia_mlm
)


def _frecuencias_de_seleccion(tokens, draws, seed=0):
    rng = np.random.default_rng(seed)
    cuentas = np.zeros(len(tokens))
    for _ in range(draws):
        lote = apply_masking(tokens, 0.15, rng)
        cuentas += (lote.labels[0] != IGNORAR)
    return cuentas / draws


def test_cien_tokens_quince_mascaras():
    tokens = np.arange(10, 110)
    lote = apply_masking(tokens, 0.15, np.random.default_rng(0))
    enmascarados = lote.labels[0] != IGNORAR
    assert enmascarados.sum() == 15
    assert np.all(lote.input_ids[0][enmascarados] == 4)
    assert np.array_equal(lote.labels[0][enmascarados], tokens[enmascarados])
    assert np.array_equal(lote.input_ids[0][~enmascarados], tokens[~enmascarados])


def test_frecuencia_por_posicion():
    frecuencias = _frecuencias_de_seleccion(np.arange(10, 30), 100_000)
    assert np.all(np.abs(frecuencias - 0.15) < 0.01)


def test_un_solo_token_se_enmascara():
    lote = apply_masking([0, 57, 2], 0.15, np.random.default_rng(0))
    assert lote.input_ids.tolist() == [[0, 4, 2]]
    assert lote.labels.tolist() == [[IGNORAR, 57, IGNORAR]]


def test_solo_especiales_sin_etiquetas():
    lote = apply_masking([0, 2, 1, 1], 0.15, np.random.default_rng(0))
    assert lote.num_etiquetas == 0
    assert lote.attention_mask.tolist() == [[1, 1, 0, 0]]


def test_especiales_nunca_se_enmascaran():
    rng = np.random.default_rng(1)
    secuencia = secuencia_mlm(list(range(10, 30)), 32)
    for _ in range(50):
        lote = apply_masking(secuencia, 0.5, rng)
        etiquetadas = lote.labels[0] != IGNORAR
        assert not np.isin(secuencia[etiquetadas], [0, 1, 2, 3, 4]).any()


def test_numero_a_enmascarar_usa_techo():
    assert numero_a_enmascarar(0.15, 100) == 15
    assert numero_a_enmascarar(0.15, 7) == 2
    assert numero_a_enmascarar(0.15, 1) == 1


def test_tasa_invalida():
    with pytest.raises(ValueError):
        apply_masking([10, 11], 0.0, 0)
    with pytest.raises(ValueError):
        apply_masking([], 0.15, 0)


def test_enmascarado_requiere_semilla():
    with pytest.raises(ValueError, match="semilla"):
        apply_masking(np.arange(10, 30), 0.15, None)
    a = apply_masking(np.arange(10, 30), 0.15, 5)
    b = apply_masking(np.arange(10, 30), 0.15, np.random.default_rng(5))
    assert np.array_equal(a.labels, b.labels)


def test_enmascarar_lote_determinista():
    secuencias = np.stack([secuencia_mlm(list(range(10, 20)), 16) for _ in range(4)])
    a = enmascarar_lote(secuencias, np.random.default_rng(3))
    b = enmascarar_lote(secuencias, np.random.default_rng(3))
    assert np.array_equal(a.input_ids, b.input_ids)
    assert a.input_ids.shape == (4, 16)


def test_secuencia_de_pares():
    ids, atencion = secuencia_clasificacion([10, 11, 12], [20, 21], 8)
    assert ids.tolist() == [0, 10, 11, 12, 2, 20, 21, 2]
    assert atencion.tolist() == [1] * 8

    ids, atencion = secuencia_clasificacion([10, 11, 12, 13], [20], 6)
    assert ids.tolist() == [0, 10, 11, 2, 20, 2]


def test_lote_de_clasificacion():
    lote = armar_lote_clasificacion([([10], None, 0), ([11, 12], [13], 1)], 6)
    assert lote.input_ids.tolist() == [[0, 10, 2, 1, 1, 1], [0, 11, 12, 2, 13, 2]]
    assert lote.labels.tolist() == [0, 1]
