"""
Capas del codificador en numpy, cada una con su paso hacia adelante (que
devuelve una caché) y su paso hacia atrás analítico.
"""
from typing import Optional, Tuple

import numpy as np
from scipy.special import erf

EPS_LN = 1e-5
IGNORAR = -100


def lineal(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def lineal_atras(dy: np.ndarray, x: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Returns:
        Tupla (dx, dw, db)
    """
    entrada = x.reshape(-1, x.shape[-1])
    salida = dy.reshape(-1, dy.shape[-1])
    return dy @ w.T, entrada.T @ salida, salida.sum(axis=0)


def layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float = EPS_LN):
    media = x.mean(axis=-1, keepdims=True)
    centrado = x - media
    inv = 1.0 / np.sqrt((centrado ** 2).mean(axis=-1, keepdims=True) + eps)
    normalizado = centrado * inv
    return normalizado * g + b, (normalizado, inv, g)


def layer_norm_atras(dy: np.ndarray, cache) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    normalizado, inv, g = cache
    ejes = tuple(range(dy.ndim - 1))
    dg = (dy * normalizado).sum(axis=ejes)
    db = dy.sum(axis=ejes)
    dnorm = dy * g
    dx = inv * (
        dnorm
        - dnorm.mean(axis=-1, keepdims=True)
        - normalizado * (dnorm * normalizado).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def gelu(x: np.ndarray) -> np.ndarray:
    """GELU exacta: x·Φ(x)."""
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_atras(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x ** 2) / np.sqrt(2.0 * np.pi)
    return dy * (cdf + x * pdf)


def softmax(x: np.ndarray) -> np.ndarray:
    desplazado = x - x.max(axis=-1, keepdims=True)
    e = np.exp(desplazado)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_atras(dp: np.ndarray, p: np.ndarray) -> np.ndarray:
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


def dropout(x: np.ndarray, tasa: float, rng: Optional[np.random.Generator]):
    """
    Dropout invertido. Sin generador o con tasa 0 es la identidad.

    Returns:
        Tupla (salida, máscara escalada o None)
    """
    if rng is None or tasa <= 0.0:
        return x, None
    mascara = (rng.random(x.shape) >= tasa) / (1.0 - tasa)
    return x * mascara, mascara


def dropout_atras(dy: np.ndarray, mascara: Optional[np.ndarray]) -> np.ndarray:
    return dy if mascara is None else dy * mascara


def log_softmax(x: np.ndarray) -> np.ndarray:
    desplazado = x - x.max(axis=-1, keepdims=True)
    return desplazado - np.log(np.exp(desplazado).sum(axis=-1, keepdims=True))


def entropia_cruzada(logits: np.ndarray, etiquetas: np.ndarray, ignorar: int = IGNORAR):
    """
    Entropía cruzada media sobre las posiciones con etiqueta distinta de
    `ignorar`.

    Returns:
        Tupla (pérdida, dlogits)
    """
    validas = etiquetas != ignorar
    n = int(validas.sum())
    if n == 0:
        raise ValueError("No hay posiciones etiquetadas: la pérdida no está definida")

    logp = log_softmax(logits[validas])
    objetivo = etiquetas[validas]
    perdida = -logp[np.arange(n), objetivo].mean()

    dvalidas = np.exp(logp)
    dvalidas[np.arange(n), objetivo] -= 1.0
    dlogits = np.zeros_like(logits)
    dlogits[validas] = dvalidas / n
    return float(perdida), dlogits


def normal_truncada(rng: np.random.Generator, forma, sigma: float = 0.02, limite: float = 2.0) -> np.ndarray:
    """Normal truncada en ±limite·sigma por re-muestreo."""
    z = rng.standard_normal(forma)
    fuera = np.abs(z) > limite
    while fuera.any():
        z[fuera] = rng.standard_normal(int(fuera.sum()))
        fuera = np.abs(z) > limite
    return z * sigma
