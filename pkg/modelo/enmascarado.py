import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from modelo.capas import IGNORAR

logger = logging.getLogger(__name__)

TASA_ENMASCARADO = 0.15


@dataclass
class MaskedBatch:
    """
    Lote para MLM.

    Args:
        input_ids: (B, S) ids de entrada con las posiciones enmascaradas
        labels: (B, S) id original en posiciones enmascaradas, IGNORAR en el resto
        attention_mask: (B, S) 1 para tokens reales, 0 para relleno
    """
    input_ids: np.ndarray
    labels: np.ndarray
    attention_mask: np.ndarray

    def __post_init__(self):
        self.input_ids = np.atleast_2d(np.asarray(self.input_ids, dtype=np.int64))
        self.labels = np.atleast_2d(np.asarray(self.labels, dtype=np.int64))
        self.attention_mask = np.atleast_2d(np.asarray(self.attention_mask, dtype=np.int64))
        if not (self.input_ids.shape == self.labels.shape == self.attention_mask.shape):
            raise ValueError("input_ids, labels y attention_mask deben tener la misma forma")

    @property
    def num_etiquetas(self) -> int:
        return int((self.labels != IGNORAR).sum())

    @classmethod
    def apilar(cls, lotes: Sequence["MaskedBatch"]) -> "MaskedBatch":
        return cls(
            np.concatenate([l.input_ids for l in lotes]),
            np.concatenate([l.labels for l in lotes]),
            np.concatenate([l.attention_mask for l in lotes])
        )


@dataclass
class LabeledBatch:
    """
    Lote de clasificación: secuencias (B, S) con una etiqueta por secuencia.
    """
    input_ids: np.ndarray
    attention_mask: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.input_ids = np.atleast_2d(np.asarray(self.input_ids, dtype=np.int64))
        self.attention_mask = np.atleast_2d(np.asarray(self.attention_mask, dtype=np.int64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.input_ids.shape != self.attention_mask.shape:
            raise ValueError("input_ids y attention_mask deben tener la misma forma")
        if self.labels.shape[0] != self.input_ids.shape[0]:
            raise ValueError("Se requiere una etiqueta por secuencia")


def numero_a_enmascarar(tasa: float, n: int) -> int:
    # Tolerancia para productos como 0.15 * 100 = 15.000000000000002
    return min(n, int(math.ceil(tasa * n - 1e-9)))


def apply_masking(
        tokens: Sequence[int],
        rate: float,
        rng: Union[np.random.Generator, int],
        mask_id: int = 4,
        especiales: Iterable[int] = (0, 1, 2, 3, 4),
        pad_id: int = 1
) -> MaskedBatch:
    """
    Enmascara ⌈rate·n⌉ posiciones no especiales elegidas sin reemplazo.

    Todas las posiciones elegidas se sustituyen por el token de máscara
    (sin reemplazo aleatorio ni conservación del token).

    Args:
        tokens: Secuencia de ids (puede incluir especiales y relleno)
        rate: Fracción de tokens a enmascarar
        rng: Generador o semilla entera
        mask_id: Id del token de máscara
        especiales: Ids que nunca se enmascaran
        pad_id: Id de relleno (fuera de la atención)

    Returns:
        MaskedBatch de una sola secuencia
    """
    if not (0.0 < rate < 1.0):
        raise ValueError(f"rate debe estar en (0, 1): {rate}")
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("Se requiere una secuencia no vacía")
    if rng is None:
        raise ValueError("Se requiere un generador o una semilla para enmascarar")
    rng = np.random.default_rng(rng)

    especiales = np.fromiter(especiales, dtype=np.int64)
    candidatos = np.flatnonzero(~np.isin(ids, especiales))
    etiquetas = np.full(ids.shape, IGNORAR, dtype=np.int64)
    entrada = ids.copy()

    k = numero_a_enmascarar(rate, candidatos.size)
    if k > 0:
        elegidos = rng.choice(candidatos, size=k, replace=False)
        etiquetas[elegidos] = ids[elegidos]
        entrada[elegidos] = mask_id

    atencion = (ids != pad_id).astype(np.int64)
    return MaskedBatch(entrada, etiquetas, atencion)


def rellenar(ids: Sequence[int], longitud: int, pad_id: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Trunca o rellena una secuencia a `longitud`.

    Returns:
        Tupla (ids, máscara de atención)
    """
    recortados = list(ids)[:longitud]
    n = len(recortados)
    salida = np.full(longitud, pad_id, dtype=np.int64)
    salida[:n] = recortados
    atencion = np.zeros(longitud, dtype=np.int64)
    atencion[:n] = 1
    return salida, atencion


def secuencia_mlm(ids: Sequence[int], longitud: int, bos_id: int = 0, eos_id: int = 2, pad_id: int = 1) -> np.ndarray:
    """Envuelve ids en <s> ... </s> y ajusta a `longitud`."""
    contenido = list(ids)[:max(0, longitud - 2)]
    secuencia, _ = rellenar([bos_id] + contenido + [eos_id], longitud, pad_id)
    return secuencia


def enmascarar_lote(
        secuencias: np.ndarray,
        rng: np.random.Generator,
        rate: float = TASA_ENMASCARADO,
        mask_id: int = 4,
        especiales: Iterable[int] = (0, 1, 2, 3, 4)
) -> MaskedBatch:
    """Aplica el enmascarado fila por fila a un arreglo (B, S)."""
    especiales = tuple(especiales)
    filas = [apply_masking(fila, rate, rng, mask_id, especiales) for fila in np.atleast_2d(secuencias)]
    return MaskedBatch.apilar(filas)


def secuencia_clasificacion(
        a: Sequence[int],
        b: Optional[Sequence[int]],
        longitud: int,
        bos_id: int = 0,
        eos_id: int = 2,
        pad_id: int = 1
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Arma `<s> a </s>` o, para pares, `<s> a </s> b </s>` (el separador es
    </s>). Trunca primero el segmento más largo.
    """
    a, b = list(a), (list(b) if b is not None else None)
    if b is None:
        ids = [bos_id] + a[:max(0, longitud - 2)] + [eos_id]
    else:
        espacio = max(0, longitud - 3)
        while len(a) + len(b) > espacio:
            if len(a) >= len(b):
                a.pop()
            else:
                b.pop()
        ids = [bos_id] + a + [eos_id] + b + [eos_id]
    return rellenar(ids, longitud, pad_id)


def armar_lote_clasificacion(
        ejemplos: Sequence[Tuple[Sequence[int], Optional[Sequence[int]], int]],
        longitud: int,
        pad_id: int = 1
) -> LabeledBatch:
    filas, atenciones, etiquetas = [], [], []
    for a, b, etiqueta in ejemplos:
        ids, atencion = secuencia_clasificacion(a, b, longitud, pad_id=pad_id)
        filas.append(ids)
        atenciones.append(atencion)
        etiquetas.append(etiqueta)
    return LabeledBatch(np.stack(filas), np.stack(atenciones), np.asarray(etiquetas))
