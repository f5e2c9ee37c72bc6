import json
import logging
import math
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Callable, Dict, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

PROGRAMAS = ("inverse_sqrt", "linear")


class GradienteNoFinitoError(RuntimeError):
    """Gradiente con NaN o infinito; la corrida se aborta."""

    def __init__(self, nombre: str, paso: int):
        super().__init__(f"Gradiente no finito en '{nombre}' (paso {paso})")
        self.nombre = nombre
        self.paso = paso


@dataclass(frozen=True)
class OptimizerHyper:
    """
    Hiperparámetros de AdamW y del programa de tasa de aprendizaje.

    Args:
        peak_lr: Tasa de aprendizaje máxima
        beta1: Decaimiento del primer momento
        beta2: Decaimiento del segundo momento
        eps: Término de estabilidad
        weight_decay: Decaimiento de pesos desacoplado
        schedule: "inverse_sqrt" o "linear"
        warmup_fraction: Fracción de pasos de calentamiento
        total_steps: Número total de actualizaciones
        batch_size: Secuencias por actualización
        clip_norm: Norma global máxima del gradiente (None desactiva)
    """
    peak_lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.01
    schedule: str = "inverse_sqrt"
    warmup_fraction: float = 0.05
    total_steps: int = 35000
    batch_size: int = 256
    clip_norm: Optional[float] = 1.0

    def __post_init__(self):
        if not self.peak_lr > 0:
            raise ValueError("peak_lr debe ser positivo")
        if not (0.0 < self.warmup_fraction < 1.0):
            raise ValueError("warmup_fraction debe estar en (0, 1)")
        if self.schedule not in PROGRAMAS:
            raise ValueError(f"Programa de lr desconocido: {self.schedule}")
        if self.total_steps < 1 or self.batch_size < 1:
            raise ValueError("total_steps y batch_size deben ser positivos")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm debe ser positivo")

    @property
    def warmup_steps(self) -> int:
        # Tolerancia para productos como 0.05 * 100 = 5.000000000000001
        return max(1, int(math.ceil(self.warmup_fraction * self.total_steps - 1e-9)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, datos: dict) -> "OptimizerHyper":
        return cls(**{k: datos[k] for k in cls.__dataclass_fields__ if k in datos})

    @classmethod
    def cargar(cls, ruta: Union[str, Path]) -> "OptimizerHyper":
        with open(ruta, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def lr_at(hyper: OptimizerHyper, step: int) -> float:
    """
    Tasa de aprendizaje en el paso `step`.

    Ambos programas suben linealmente de 0 al máximo en W pasos. Después,
    inverse_sqrt decae como peak·sqrt(W/step) y linear baja hasta 0 en
    total_steps.
    """
    if step < 0:
        raise ValueError("El paso no puede ser negativo")
    total = hyper.total_steps
    if step > total:
        logger.warning("Paso %d mayor que total_steps (%d); se recorta", step, total)
        step = total

    W = hyper.warmup_steps
    if step <= W:
        return hyper.peak_lr * step / W
    if hyper.schedule == "inverse_sqrt":
        return hyper.peak_lr * math.sqrt(W / step)
    return hyper.peak_lr * (total - step) / (total - W)


@dataclass
class EstadoAdamW:
    """Momentos de AdamW por tensor y contador de pasos."""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    paso: int = 0

    @classmethod
    def para(cls, params) -> "EstadoAdamW":
        return cls(
            m={k: np.zeros_like(t) for k, t in params.items()},
            v={k: np.zeros_like(t) for k, t in params.items()},
        )


def norma_global(grads: Dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def recortar_gradientes(grads: Dict[str, np.ndarray], norma_maxima: Optional[float]) -> float:
    """Escala los gradientes en el lugar si su norma global excede el máximo."""
    norma = norma_global(grads)
    if norma_maxima is not None and norma > norma_maxima:
        factor = norma_maxima / (norma + 1e-12)
        for g in grads.values():
            g *= factor
    return norma


def adamw_step(
        params,
        grads: Dict[str, np.ndarray],
        estado: EstadoAdamW,
        hyper: OptimizerHyper,
        step: int,
        lr: Optional[float] = None,
        sin_decaimiento: Callable[[str], bool] = lambda nombre: False
) -> EstadoAdamW:
    """
    Un paso de AdamW con decaimiento de pesos desacoplado y corrección de
    sesgo. Modifica `params` y `estado` en el lugar.

    Args:
        params: Mapeo nombre -> tensor (ModelParams o dict)
        grads: Gradientes por nombre
        estado: Momentos acumulados
        hyper: Hiperparámetros
        step: Paso de la actualización (desde 1), usado para el programa de lr
        lr: Tasa a usar en lugar de lr_at(hyper, step)
        sin_decaimiento: Indica qué tensores no llevan weight decay

    Returns:
        El estado actualizado
    """
    for nombre, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise GradienteNoFinitoError(nombre, step)

    tasa = lr_at(hyper, step) if lr is None else lr
    estado.paso += 1
    t = estado.paso
    correccion1 = 1.0 - hyper.beta1 ** t
    correccion2 = 1.0 - hyper.beta2 ** t

    for nombre, g in grads.items():
        p = params[nombre]
        if p.shape != g.shape:
            raise ValueError(f"Forma del gradiente de '{nombre}' no coincide: {g.shape} != {p.shape}")
        m = estado.m.setdefault(nombre, np.zeros_like(p))
        v = estado.v.setdefault(nombre, np.zeros_like(p))
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * g * g

        if hyper.weight_decay and not sin_decaimiento(nombre):
            p *= 1.0 - tasa * hyper.weight_decay
        p -= tasa * (m / correccion1) / (np.sqrt(v / correccion2) + hyper.eps)

    return estado
