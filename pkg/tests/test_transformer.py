import math

import numpy as np
import pytest
from scipy.special import erf

from costos.flops import count_params
from modelo.capas import IGNORAR, softmax
from modelo.checkpoint import cargar_checkpoint, guardar_checkpoint, ruta_checkpoint
from modelo.configuracion import ModelConfig
from modelo.enmascarado import LabeledBatch, MaskedBatch
from modelo.transformer import (
    forward_classifier, forward_mlm, init_cabeza_clasificacion, init_model, perplexity, precision
)


def _lote(config, B=2, seed=0, n_pad=0):
    rng = np.random.default_rng(seed)
    ids = rng.integers(5, config.V, size=(B, config.S))
    atencion = np.ones_like(ids)
    if n_pad:
        ids[:, -n_pad:] = 1
        atencion[:, -n_pad:] = 0
    etiquetas = np.full_like(ids, IGNORAR)
    etiquetas[:, 1] = rng.integers(5, config.V, size=B)
    ids[:, 1] = 4
    return MaskedBatch(ids, etiquetas, atencion)


def _ln(x, g, b):
    mu = sum(x) / len(x)
    var = sum((v - mu) ** 2 for v in x) / len(x)
    return [(v - mu) / math.sqrt(var + 1e-5) * gi + bi for v, gi, bi in zip(x, g, b)]


def _mat(x, w, b):
    return [sum(x[i] * w[i][j] for i in range(len(x))) + b[j] for j in range(len(b))]


def _gelu(v):
    return 0.5 * v * (1.0 + erf(v / math.sqrt(2.0)))


def _forward_a_mano(params, ids):
    """Recalcula los logits posición por posición con listas de Python (una capa, una cabeza)."""
    P = {k: v.tolist() for k, v in params.items()}
    S = len(ids)
    x = []
    for s, t in enumerate(ids):
        e = [a + b for a, b in zip(P["emb.tok"][t], P["emb.pos"][s])]
        e = _ln(e, P["emb.ln.g"], P["emb.ln.b"])
        x.append(_ln(_mat(e, P["proj.w"], P["proj.b"]), P["proj.ln.g"], P["proj.ln.b"]))
    H = len(x[0])
    q = [_mat(v, P["capa0.q.w"], P["capa0.q.b"]) for v in x]
    k = [_mat(v, P["capa0.k.w"], P["capa0.k.b"]) for v in x]
    v_ = [_mat(v, P["capa0.v.w"], P["capa0.v.b"]) for v in x]
    salida = []
    for s in range(S):
        puntajes = [sum(q[s][h] * k[t][h] for h in range(H)) / math.sqrt(H) for t in range(S)]
        m = max(puntajes)
        pesos = [math.exp(p - m) for p in puntajes]
        z = sum(pesos)
        contexto = [sum(pesos[t] / z * v_[t][h] for t in range(S)) for h in range(H)]
        atn = _mat(contexto, P["capa0.o.w"], P["capa0.o.b"])
        y1 = _ln([a + b for a, b in zip(x[s], atn)], P["capa0.ln1.g"], P["capa0.ln1.b"])
        f = [_gelu(a) for a in _mat(y1, P["capa0.ffn1.w"], P["capa0.ffn1.b"])]
        f = _mat(f, P["capa0.ffn2.w"], P["capa0.ffn2.b"])
        h = _ln([a + b for a, b in zip(y1, f)], P["capa0.ln2.g"], P["capa0.ln2.b"])
        d = [_gelu(a) for a in _mat(h, P["mlm.dense.w"], P["mlm.dense.b"])]
        d = _ln(d, P["mlm.ln.g"], P["mlm.ln.b"])
        salida.append(_mat(d, P["mlm.dec.w"], P["mlm.dec.b"]))
    return np.array(salida)


def _perturbar(params, seed):
    """Sesgos y ganancias no triviales para que el oráculo los ejercite."""
    rng = np.random.default_rng(seed)
    for nombre, tensor in params.items():
        params[nombre] = tensor + rng.normal(0.0, 0.3, tensor.shape)
    return params


@pytest.mark.parametrize("forma, esperado, reportado", [
    ((256, 256, 1024, 8, 8), 16_329_272, 16.24e6),
    ((32, 32, 128, 1, 1), 1_266_392, 1.25e6),
    ((32, 32, 128, 2, 2), 1_279_096, 1.27e6),
])
def test_numero_de_parametros(forma, esperado, reportado):
    config = ModelConfig(*forma, V=19000)
    assert count_params(config) == esperado
    assert abs(esperado / reportado - 1) < 0.02


def test_parametros_del_modelo_coinciden_con_el_conteo():
    config = ModelConfig(E=8, H=12, I=20, L=2, A=3, V=50, S=8)
    assert init_model(config).numero_parametros() == count_params(config)


def test_inicializacion_determinista():
    config = ModelConfig(E=8, H=8, I=16, L=1, A=2, V=40, S=8)
    a, b = init_model(config, seed=0), init_model(config, seed=0)
    assert all(np.array_equal(a[n], b[n]) for n in a)
    assert not np.array_equal(a["emb.tok"], init_model(config, seed=1)["emb.tok"])


def test_inicializacion_valores():
    params = init_model(ModelConfig(E=8, H=8, I=16, L=1, A=2, V=40, S=8))
    assert np.all(params["capa0.ln1.g"] == 1.0)
    assert np.all(params["capa0.q.b"] == 0.0)
    assert np.abs(params["emb.tok"]).max() <= 0.04


def test_h_no_divisible_entre_a():
    with pytest.raises(ValueError):
        ModelConfig(E=8, H=10, I=16, L=1, A=4)


def test_logits_uniformes_dan_ln_v():
    config = ModelConfig(E=4, H=4, I=4, L=1, A=1, V=19000, S=8, max_positions=8)
    params = init_model(config)
    params["mlm.dec.w"] = np.zeros_like(params["mlm.dec.w"])
    _, perdida = forward_mlm(params, _lote(config))
    assert perdida == pytest.approx(9.8522, abs=1e-4)


def test_confianza_degenerada():
    config = ModelConfig(E=4, H=4, I=4, L=1, A=1, V=30, S=6, max_positions=6)
    params = init_model(config)
    lote = _lote(config, B=1)
    objetivo = int(lote.labels[0, 1])
    params["mlm.dec.b"][objetivo] = 1e3
    _, perdida = forward_mlm(params, lote)
    assert perdida < 1e-6


def test_sin_etiquetas_es_error():
    config = ModelConfig(E=4, H=4, I=4, L=1, A=1, V=30, S=6, max_positions=6)
    lote = _lote(config)
    lote.labels[:] = IGNORAR
    with pytest.raises(ValueError):
        forward_mlm(init_model(config), lote)


def test_forward_contra_recalculo_a_mano():
    config = ModelConfig(E=3, H=2, I=4, L=1, A=1, V=2, S=3, max_positions=3)
    params = _perturbar(init_model(config, seed=2), seed=2)
    ids = [1, 0, 1]
    lote = MaskedBatch([ids], [[IGNORAR, 0, IGNORAR]], [[1, 1, 1]])
    logits, _ = forward_mlm(params, lote)
    np.testing.assert_allclose(logits[0], _forward_a_mano(params, ids), atol=1e-6)


def test_perdida_inicial_cerca_de_uniforme(config_micro):
    params = init_model(config_micro)
    _, perdida = forward_mlm(params, _lote(config_micro, B=4))
    ln_v = math.log(config_micro.V)
    assert 0.95 * ln_v <= perdida <= 1.1 * ln_v


def test_filas_de_softmax_suman_uno(config_micro):
    logits, _ = forward_mlm(init_model(config_micro), _lote(config_micro))
    np.testing.assert_allclose(softmax(logits).sum(axis=-1), 1.0, atol=1e-6)


def test_equivariancia_sin_posiciones(config_micro):
    params = init_model(config_micro, seed=4)
    params["emb.pos"] = np.zeros_like(params["emb.pos"])
    lote = _lote(config_micro, B=1, seed=4)
    permutacion = np.random.default_rng(0).permutation(config_micro.S)
    permutado = MaskedBatch(lote.input_ids[:, permutacion], lote.labels[:, permutacion],
                            lote.attention_mask[:, permutacion])
    logits, _ = forward_mlm(params, lote)
    logits_p, _ = forward_mlm(params, permutado)
    np.testing.assert_allclose(logits_p, logits[:, permutacion], atol=1e-10)


def test_determinismo_en_ambos_modos(config_micro):
    params = init_model(config_micro)
    lote = _lote(config_micro)
    assert np.array_equal(forward_mlm(params, lote)[0], forward_mlm(params, lote)[0])
    a, _ = forward_mlm(params, lote, train_mode=True, rng=np.random.default_rng(9))
    b, _ = forward_mlm(params, lote, train_mode=True, rng=np.random.default_rng(9))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        forward_mlm(params, lote, train_mode=True)


def test_relleno_no_afecta_posiciones_reales(config_micro):
    params = init_model(config_micro)
    lote = _lote(config_micro, B=1, n_pad=4)
    otro = MaskedBatch(lote.input_ids.copy(), lote.labels, lote.attention_mask)
    otro.input_ids[:, -4:] = 7
    reales = slice(0, config_micro.S - 4)
    np.testing.assert_allclose(forward_mlm(params, lote)[0][:, reales], forward_mlm(params, otro)[0][:, reales], atol=1e-9)


def test_perplexity():
    assert perplexity(0.0) == 1.0
    assert perplexity(math.log(19000)) == pytest.approx(19000)
    assert perplexity(1.5686) == pytest.approx(4.80, abs=0.005)
    with pytest.raises(ValueError):
        perplexity(float("nan"))


def test_clasificador_al_azar(config_micro):
    params = init_model(config_micro)
    cabeza = init_cabeza_clasificacion(config_micro.H, 2)
    rng = np.random.default_rng(0)
    ids = rng.integers(5, config_micro.V, size=(256, config_micro.S))
    ids[:, 0] = 0
    lote = LabeledBatch(ids, np.ones_like(ids), np.arange(256) % 2)
    _, perdida = forward_classifier(params, cabeza, lote, 2)
    assert abs(perdida - math.log(2)) < 0.05


def test_clasificador_etiqueta_fuera_de_rango(config_micro):
    params = init_model(config_micro)
    lote = LabeledBatch(np.full((1, config_micro.S), 5), np.ones((1, config_micro.S)), [2])
    with pytest.raises(ValueError):
        forward_classifier(params, init_cabeza_clasificacion(config_micro.H, 2), lote, 2)


def test_precision():
    assert precision(np.array([[0.1, 0.9], [2.0, -1.0]]), [1, 0]) == 1.0
    assert precision(np.array([[0.1, 0.9], [2.0, -1.0]]), [0, 0]) == 0.5


def test_checkpoint(tmp_path, config_micro):
    params = init_model(config_micro, seed=3)
    ruta = ruta_checkpoint(tmp_path, "corrida", 20)
    assert ruta == tmp_path / "corrida" / "step_20.ckpt"
    guardar_checkpoint(ruta, params, 20, 5120)
    cargados, paso, tokens = cargar_checkpoint(ruta)
    assert (paso, tokens) == (20, 5120)
    assert cargados.config == config_micro
    assert all(np.array_equal(cargados[n], params[n]) for n in params)


def test_checkpoint_sin_metadatos(tmp_path):
    ruta = tmp_path / "malo.ckpt"
    with open(ruta, "wb") as f:
        np.savez(f, x=np.zeros(3))
    with pytest.raises(ValueError):
        cargar_checkpoint(ruta)
