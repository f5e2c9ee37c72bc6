import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from modelo.capas import (
    dropout, dropout_atras, entropia_cruzada, gelu, gelu_atras,
    layer_norm, layer_norm_atras, lineal, lineal_atras, normal_truncada,
    softmax, softmax_atras
)
from modelo.configuracion import ModelConfig
from modelo.enmascarado import LabeledBatch, MaskedBatch

logger = logging.getLogger(__name__)

SESGO_MASCARA = -1e9


def formas_parametros(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Nombre y forma de cada tensor, en orden canónico."""
    E, H, I, V = config.E, config.H, config.I, config.V
    formas: Dict[str, Tuple[int, ...]] = {
        "emb.tok": (V, E),
        "emb.pos": (config.max_positions, E),
        "emb.ln.g": (E,),
        "emb.ln.b": (E,),
        "proj.w": (E, H),
        "proj.b": (H,),
        "proj.ln.g": (H,),
        "proj.ln.b": (H,),
    }
    for l in range(config.L):
        p = f"capa{l}."
        for nombre in ("q", "k", "v", "o"):
            formas[p + nombre + ".w"] = (H, H)
            formas[p + nombre + ".b"] = (H,)
        formas[p + "ln1.g"] = (H,)
        formas[p + "ln1.b"] = (H,)
        formas[p + "ffn1.w"] = (H, I)
        formas[p + "ffn1.b"] = (I,)
        formas[p + "ffn2.w"] = (I, H)
        formas[p + "ffn2.b"] = (H,)
        formas[p + "ln2.g"] = (H,)
        formas[p + "ln2.b"] = (H,)
    formas.update({
        "mlm.dense.w": (H, H),
        "mlm.dense.b": (H,),
        "mlm.ln.g": (H,),
        "mlm.ln.b": (H,),
        "mlm.dec.w": (H, V),
        "mlm.dec.b": (V,),
    })
    return formas


def sin_decaimiento(nombre: str) -> bool:
    """Ganancias y sesgos de LayerNorm y embeddings no llevan weight decay."""
    return nombre.startswith("emb.tok") or nombre.startswith("emb.pos") or ".ln" in nombre


@dataclass
class ModelParams:
    """Tensores del modelo indexados por nombre, junto con su configuración."""
    config: ModelConfig
    tensores: Dict[str, np.ndarray]

    def __post_init__(self):
        formas = formas_parametros(self.config)
        if set(formas) != set(self.tensores):
            raise ValueError("Los tensores no corresponden a la configuración")
        for nombre, forma in formas.items():
            if self.tensores[nombre].shape != forma:
                raise ValueError(f"Forma inválida para {nombre}: {self.tensores[nombre].shape} != {forma}")

    def __getitem__(self, nombre: str) -> np.ndarray:
        return self.tensores[nombre]

    def __setitem__(self, nombre: str, valor: np.ndarray) -> None:
        self.tensores[nombre] = valor

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensores)

    def items(self):
        return self.tensores.items()

    def numero_parametros(self) -> int:
        return int(sum(t.size for t in self.tensores.values()))

    def copia(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensores.items()})


def init_model(config: ModelConfig, seed: int = 0) -> ModelParams:
    """
    Inicializa el modelo de forma determinista.

    Pesos: normal truncada con sigma 0.02; sesgos en cero; ganancias de
    LayerNorm en uno. El decodificador MLM no comparte pesos con los
    embeddings.

    Args:
        config: Forma del modelo
        seed: Semilla

    Returns:
        ModelParams
    """
    rng = np.random.default_rng(seed)
    tensores = {}
    for nombre, forma in formas_parametros(config).items():
        if nombre.endswith(".g"):
            tensores[nombre] = np.ones(forma)
        elif nombre.endswith(".b"):
            tensores[nombre] = np.zeros(forma)
        else:
            tensores[nombre] = normal_truncada(rng, forma)
    params = ModelParams(config, tensores)
    logger.debug("Modelo %s inicializado con %d parámetros", config.etiqueta(), params.numero_parametros())
    return params


def perplexity(loss: float) -> float:
    if not np.isfinite(loss):
        raise ValueError(f"Pérdida no finita: {loss}")
    return float(np.exp(loss))


def _separar_cabezas(x: np.ndarray, A: int) -> np.ndarray:
    B, S, H = x.shape
    return x.reshape(B, S, A, H // A).transpose(0, 2, 1, 3)


def _unir_cabezas(x: np.ndarray) -> np.ndarray:
    B, A, S, K = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, S, A * K)


def _atencion(params: ModelParams, p: str, x: np.ndarray, sesgo: np.ndarray, A: int, tasa: float, rng):
    K = x.shape[-1] // A
    q = _separar_cabezas(lineal(x, params[p + "q.w"], params[p + "q.b"]), A)
    k = _separar_cabezas(lineal(x, params[p + "k.w"], params[p + "k.b"]), A)
    v = _separar_cabezas(lineal(x, params[p + "v.w"], params[p + "v.b"]), A)

    puntajes = q @ k.transpose(0, 1, 3, 2) / np.sqrt(K) + sesgo
    probs = softmax(puntajes)
    probs_d, m_probs = dropout(probs, tasa, rng)
    contexto = _unir_cabezas(probs_d @ v)
    salida = lineal(contexto, params[p + "o.w"], params[p + "o.b"])
    cache = {"q": q, "k": k, "v": v, "probs": probs, "probs_d": probs_d, "m_probs": m_probs, "contexto": contexto}
    return salida, cache


def _atencion_atras(dsalida: np.ndarray, x: np.ndarray, params: ModelParams, p: str, c: dict, A: int, grads: dict):
    K = x.shape[-1] // A
    dcontexto, grads[p + "o.w"], grads[p + "o.b"] = lineal_atras(dsalida, c["contexto"], params[p + "o.w"])
    dcontexto = _separar_cabezas(dcontexto, A)

    dprobs_d = dcontexto @ c["v"].transpose(0, 1, 3, 2)
    dv = c["probs_d"].transpose(0, 1, 3, 2) @ dcontexto
    dpuntajes = softmax_atras(dropout_atras(dprobs_d, c["m_probs"]), c["probs"]) / np.sqrt(K)
    dq = dpuntajes @ c["k"]
    dk = dpuntajes.transpose(0, 1, 3, 2) @ c["q"]

    dx = np.zeros_like(x)
    for nombre, d in (("q", dq), ("k", dk), ("v", dv)):
        dxi, grads[p + nombre + ".w"], grads[p + nombre + ".b"] = lineal_atras(_unir_cabezas(d), x, params[p + nombre + ".w"])
        dx += dxi
    return dx


def codificar(
        params: ModelParams,
        input_ids: np.ndarray,
        attention_mask: np.ndarray,
        rng: Optional[np.random.Generator] = None
) -> Tuple[np.ndarray, dict]:
    """
    Pasa un lote por embeddings, proyección y las L capas del codificador.

    Con `rng` aplica dropout (modo entrenamiento); sin él es determinista.

    Returns:
        Tupla (estados ocultos (B, S, H), caché para el paso hacia atrás)
    """
    cfg = params.config
    ids = np.atleast_2d(input_ids)
    if ids.max() >= cfg.V or ids.min() < 0:
        raise ValueError(f"Ids fuera del vocabulario (V={cfg.V})")
    B, S = ids.shape
    if S > cfg.max_positions:
        raise ValueError(f"Secuencia de longitud {S} excede max_positions ({cfg.max_positions})")
    tasa = cfg.dropout

    sesgo = ((1 - np.atleast_2d(attention_mask)) * SESGO_MASCARA)[:, None, None, :]
    emb = params["emb.tok"][ids] + params["emb.pos"][:S]
    emb_n, c_emb_ln = layer_norm(emb, params["emb.ln.g"], params["emb.ln.b"])
    emb_d, m_emb = dropout(emb_n, tasa, rng)
    proy = lineal(emb_d, params["proj.w"], params["proj.b"])
    x, c_proj_ln = layer_norm(proy, params["proj.ln.g"], params["proj.ln.b"])

    capas: List[dict] = []
    for l in range(cfg.L):
        p = f"capa{l}."
        c = {"x": x}
        atn, c["atencion"] = _atencion(params, p, x, sesgo, cfg.A, tasa, rng)
        atn_d, c["m_atn"] = dropout(atn, tasa, rng)
        y1, c["ln1"] = layer_norm(x + atn_d, params[p + "ln1.g"], params[p + "ln1.b"])
        f1 = lineal(y1, params[p + "ffn1.w"], params[p + "ffn1.b"])
        g = gelu(f1)
        f2 = lineal(g, params[p + "ffn2.w"], params[p + "ffn2.b"])
        f2_d, c["m_ffn"] = dropout(f2, tasa, rng)
        x, c["ln2"] = layer_norm(y1 + f2_d, params[p + "ln2.g"], params[p + "ln2.b"])
        c.update({"y1": y1, "f1": f1, "g": g})
        capas.append(c)

    cache = {
        "ids": ids, "emb_ln": c_emb_ln, "m_emb": m_emb, "emb_d": emb_d,
        "proj_ln": c_proj_ln, "capas": capas
    }
    return x, cache


def codificar_atras(dx: np.ndarray, params: ModelParams, cache: dict, grads: Dict[str, np.ndarray]) -> None:
    """Acumula en `grads` los gradientes del codificador dado dL/dh."""
    cfg = params.config
    for l in reversed(range(cfg.L)):
        p = f"capa{l}."
        c = cache["capas"][l]
        dr2, grads[p + "ln2.g"], grads[p + "ln2.b"] = layer_norm_atras(dx, c["ln2"])
        df2 = dropout_atras(dr2, c["m_ffn"])
        dg, grads[p + "ffn2.w"], grads[p + "ffn2.b"] = lineal_atras(df2, c["g"], params[p + "ffn2.w"])
        df1 = gelu_atras(dg, c["f1"])
        dy1, grads[p + "ffn1.w"], grads[p + "ffn1.b"] = lineal_atras(df1, c["y1"], params[p + "ffn1.w"])
        dy1 = dy1 + dr2

        dr1, grads[p + "ln1.g"], grads[p + "ln1.b"] = layer_norm_atras(dy1, c["ln1"])
        datn = dropout_atras(dr1, c["m_atn"])
        dx = dr1 + _atencion_atras(datn, c["x"], params, p, c["atencion"], cfg.A, grads)

    dproy, grads["proj.ln.g"], grads["proj.ln.b"] = layer_norm_atras(dx, cache["proj_ln"])
    demb_d, grads["proj.w"], grads["proj.b"] = lineal_atras(dproy, cache["emb_d"], params["proj.w"])
    demb_n = dropout_atras(demb_d, cache["m_emb"])
    demb, grads["emb.ln.g"], grads["emb.ln.b"] = layer_norm_atras(demb_n, cache["emb_ln"])

    ids = cache["ids"]
    S = ids.shape[1]
    dtok = np.zeros_like(params["emb.tok"])
    np.add.at(dtok, ids, demb)
    dpos = np.zeros_like(params["emb.pos"])
    dpos[:S] = demb.sum(axis=0)
    grads["emb.tok"] = dtok
    grads["emb.pos"] = dpos


def _cabeza_mlm(params: ModelParams, h: np.ndarray):
    d = lineal(h, params["mlm.dense.w"], params["mlm.dense.b"])
    g = gelu(d)
    n, c_ln = layer_norm(g, params["mlm.ln.g"], params["mlm.ln.b"])
    logits = lineal(n, params["mlm.dec.w"], params["mlm.dec.b"])
    return logits, {"h": h, "d": d, "n": n, "ln": c_ln}


def _validar_rng(train_mode: bool, rng: Optional[np.random.Generator]) -> Optional[np.random.Generator]:
    if train_mode and rng is None:
        raise ValueError("El modo entrenamiento requiere un generador aleatorio para el dropout")
    return rng if train_mode else None


def forward_mlm(
        params: ModelParams,
        batch: MaskedBatch,
        train_mode: bool = False,
        rng: Optional[np.random.Generator] = None
) -> Tuple[np.ndarray, float]:
    """
    Paso hacia adelante con la cabeza MLM.

    Args:
        params: Parámetros del modelo
        batch: Lote enmascarado
        train_mode: Activa dropout (requiere `rng`)
        rng: Generador para el dropout

    Returns:
        Tupla (logits (B, S, V), pérdida media sobre posiciones etiquetadas)
    """
    h, _ = codificar(params, batch.input_ids, batch.attention_mask, _validar_rng(train_mode, rng))
    logits, _ = _cabeza_mlm(params, h)
    perdida, _ = entropia_cruzada(logits, batch.labels)
    return logits, perdida


def perdida_y_gradientes_mlm(
        params: ModelParams,
        batch: MaskedBatch,
        rng: Optional[np.random.Generator] = None,
        loss_scale: float = 1.0
) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Pérdida MLM y sus gradientes analíticos respecto de cada tensor.

    Sin `rng` el dropout queda desactivado (usado para verificar gradientes).

    Returns:
        Tupla (pérdida, gradientes de loss_scale·pérdida)
    """
    h, cache = codificar(params, batch.input_ids, batch.attention_mask, rng)
    logits, c_cab = _cabeza_mlm(params, h)
    perdida, dlogits = entropia_cruzada(logits, batch.labels)
    dlogits = dlogits * loss_scale

    grads: Dict[str, np.ndarray] = {}
    dn, grads["mlm.dec.w"], grads["mlm.dec.b"] = lineal_atras(dlogits, c_cab["n"], params["mlm.dec.w"])
    dg, grads["mlm.ln.g"], grads["mlm.ln.b"] = layer_norm_atras(dn, c_cab["ln"])
    dd = gelu_atras(dg, c_cab["d"])
    dh, grads["mlm.dense.w"], grads["mlm.dense.b"] = lineal_atras(dd, c_cab["h"], params["mlm.dense.w"])
    codificar_atras(dh, params, cache, grads)
    return perdida, grads


def grad_mlm(
        params: ModelParams,
        batch: MaskedBatch,
        rng: Optional[np.random.Generator] = None,
        loss_scale: float = 1.0
) -> Dict[str, np.ndarray]:
    return perdida_y_gradientes_mlm(params, batch, rng, loss_scale)[1]


def init_cabeza_clasificacion(H: int, num_classes: int, seed: int = 0) -> Dict[str, np.ndarray]:
    if num_classes < 2:
        raise ValueError("num_classes debe ser al menos 2")
    rng = np.random.default_rng(seed)
    return {"cls.w": normal_truncada(rng, (H, num_classes)), "cls.b": np.zeros(num_classes)}


def _validar_etiquetas(etiquetas: np.ndarray, num_classes: int) -> None:
    if num_classes < 2:
        raise ValueError("num_classes debe ser al menos 2")
    if etiquetas.size and (etiquetas.max() >= num_classes or etiquetas.min() < 0):
        raise ValueError(f"Etiqueta fuera de rango para {num_classes} clases")


def _clasificador(params, head, batch: LabeledBatch, num_classes: int, rng):
    _validar_etiquetas(batch.labels, num_classes)
    if head["cls.w"].shape != (params.config.H, num_classes):
        raise ValueError("La cabeza de clasificación no coincide con H y num_classes")
    h, cache = codificar(params, batch.input_ids, batch.attention_mask, rng)
    agrupado = h[:, 0, :]
    agrupado_d, m = dropout(agrupado, params.config.dropout, rng)
    logits = lineal(agrupado_d, head["cls.w"], head["cls.b"])
    return logits, (h, cache, agrupado_d, m)


def forward_classifier(
        params: ModelParams,
        head: Dict[str, np.ndarray],
        batch: LabeledBatch,
        num_classes: int,
        train_mode: bool = False,
        rng: Optional[np.random.Generator] = None
) -> Tuple[np.ndarray, float]:
    """
    Clasificación a partir del estado de la primera posición (<s>).

    Returns:
        Tupla (logits (B, C), entropía cruzada media)
    """
    logits, _ = _clasificador(params, head, batch, num_classes, _validar_rng(train_mode, rng))
    perdida, _ = entropia_cruzada(logits, batch.labels)
    return logits, perdida


def grad_classifier(
        params: ModelParams,
        head: Dict[str, np.ndarray],
        batch: LabeledBatch,
        num_classes: int,
        rng: Optional[np.random.Generator] = None
) -> Tuple[float, Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    """
    Returns:
        Tupla (pérdida, gradientes del codificador, gradientes de la cabeza)
    """
    logits, (h, cache, agrupado_d, m) = _clasificador(params, head, batch, num_classes, rng)
    perdida, dlogits = entropia_cruzada(logits, batch.labels)

    grads_cabeza: Dict[str, np.ndarray] = {}
    dagrupado, grads_cabeza["cls.w"], grads_cabeza["cls.b"] = lineal_atras(dlogits, agrupado_d, head["cls.w"])
    dh = np.zeros_like(h)
    dh[:, 0, :] = dropout_atras(dagrupado, m)

    grads: Dict[str, np.ndarray] = {}
    codificar_atras(dh, params, cache, grads)
    # La cabeza MLM no participa en la clasificación
    for nombre in ("mlm.dense.w", "mlm.dense.b", "mlm.ln.g", "mlm.ln.b", "mlm.dec.w", "mlm.dec.b"):
        grads[nombre] = np.zeros_like(params[nombre])
    return perdida, grads, grads_cabeza


def precision(logits: np.ndarray, etiquetas: np.ndarray) -> float:
    return float((np.argmax(logits, axis=-1) == np.asarray(etiquetas)).mean())


def evaluar_mlm(params: ModelParams, lotes: List[MaskedBatch]) -> float:
    """Pérdida media ponderada por número de etiquetas sobre varios lotes."""
    total, n = 0.0, 0
    for lote in lotes:
        k = lote.num_etiquetas
        if k == 0:
            continue
        _, perdida = forward_mlm(params, lote)
        total += perdida * k
        n += k
    if n == 0:
        raise ValueError("El conjunto de evaluación no tiene posiciones etiquetadas")
    return total / n
