import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from entrenamiento.optimizador import EstadoAdamW, OptimizerHyper, adamw_step, lr_at, recortar_gradientes
from entrenamiento.tareas import TareaClasificacion, codificar_ejemplos
from modelo.capas import log_softmax
from modelo.enmascarado import LabeledBatch
from modelo.transformer import (
    ModelParams, forward_classifier, grad_classifier, init_cabeza_clasificacion, precision, sin_decaimiento
)
from tokenizador.bpe import TokenizerModel

logger = logging.getLogger(__name__)

RANGO_LR = (2e-5, 2e-4)
SEMILLAS = (0, 1, 2)


@dataclass
class ResultadoSemilla:
    seed: int
    mejor_precision: float
    mejor_epoca: int
    perdida_val: float
    precision_por_epoca: List[float] = field(default_factory=list)


@dataclass
class ResultadoAjuste:
    """Métrica media sobre semillas y el detalle por semilla."""
    tarea: str
    metrica_media: float
    por_semilla: List[ResultadoSemilla]

    @property
    def metricas(self) -> List[float]:
        return [r.mejor_precision for r in self.por_semilla]

    def to_dict(self) -> dict:
        return {
            "task": self.tarea,
            "mean_accuracy": self.metrica_media,
            "per_seed": [
                {"seed": r.seed, "best_accuracy": r.mejor_precision, "best_epoch": r.mejor_epoca,
                 "val_loss": r.perdida_val, "accuracy_per_epoch": r.precision_por_epoca}
                for r in self.por_semilla
            ],
        }


def _sublote(lote: LabeledBatch, indices: np.ndarray) -> LabeledBatch:
    return LabeledBatch(lote.input_ids[indices], lote.attention_mask[indices], lote.labels[indices])


def _evaluar(params: ModelParams, cabeza: Dict[str, np.ndarray], lote: LabeledBatch, num_classes: int, tam: int = 128):
    logits = []
    for inicio in range(0, lote.input_ids.shape[0], tam):
        parte = _sublote(lote, np.arange(inicio, min(inicio + tam, lote.input_ids.shape[0])))
        logits.append(forward_classifier(params, cabeza, parte, num_classes)[0])
    todos = np.concatenate(logits)
    logp = log_softmax(todos)
    perdida = float(-logp[np.arange(len(lote.labels)), lote.labels].mean())
    return precision(todos, lote.labels), perdida


def ajustar_semilla(
        params: ModelParams,
        entrenamiento: LabeledBatch,
        validacion: LabeledBatch,
        num_classes: int,
        seed: int,
        epochs: int,
        batch: int,
        peak_lr: float
) -> ResultadoSemilla:
    """Ajusta una copia de `params` con una semilla y conserva la mejor época."""
    n = entrenamiento.input_ids.shape[0]
    pasos_por_epoca = math.ceil(n / batch)
    hyper = OptimizerHyper(
        peak_lr=peak_lr, schedule="linear", total_steps=epochs * pasos_por_epoca, batch_size=batch
    )
    rng = np.random.default_rng(seed)
    modelo = params.copia()
    cabeza = init_cabeza_clasificacion(params.config.H, num_classes, seed)
    estado_modelo = EstadoAdamW()
    estado_cabeza = EstadoAdamW()
    dropout_rng = rng if params.config.dropout > 0 else None

    resultado = ResultadoSemilla(seed=seed, mejor_precision=-1.0, mejor_epoca=0, perdida_val=float("nan"))
    paso = 0
    for epoca in range(1, epochs + 1):
        orden = rng.permutation(n)
        for inicio in range(0, n, batch):
            lote = _sublote(entrenamiento, orden[inicio:inicio + batch])
            _, grads, grads_cabeza = grad_classifier(modelo, cabeza, lote, num_classes, rng=dropout_rng)
            # Sólo el codificador y la cabeza nueva se actualizan
            grads = {k: g for k, g in grads.items() if not k.startswith("mlm.")}
            todos = {**grads, **grads_cabeza}
            recortar_gradientes(todos, hyper.clip_norm)

            paso += 1
            tasa = lr_at(hyper, paso)
            adamw_step(modelo, grads, estado_modelo, hyper, paso, lr=tasa, sin_decaimiento=sin_decaimiento)
            adamw_step(cabeza, grads_cabeza, estado_cabeza, hyper, paso, lr=tasa)

        acc, perdida_val = _evaluar(modelo, cabeza, validacion, num_classes)
        resultado.precision_por_epoca.append(acc)
        if acc > resultado.mejor_precision:
            resultado.mejor_precision = acc
            resultado.mejor_epoca = epoca
            resultado.perdida_val = perdida_val
        logger.debug("Semilla %d, época %d: precisión %.4f, pérdida %.4f", seed, epoca, acc, perdida_val)

    return resultado


def finetune(
        params: ModelParams,
        task: TareaClasificacion,
        tokenizer: TokenizerModel,
        epochs: int = 5,
        batch: int = 32,
        peak_lr: float = 1e-4,
        seeds: Sequence[int] = SEMILLAS,
        longitud: Optional[int] = None
) -> ResultadoAjuste:
    """
    Ajuste fino con programa lineal y 5% de calentamiento.

    Para cada semilla se ajusta una copia de los parámetros con una cabeza
    nueva; se reporta la mejor precisión de validación por semilla y su
    promedio.

    Args:
        params: Parámetros preentrenados (no se modifican)
        task: Tarea con particiones train/val
        tokenizer: Tokenizador usado en el preentrenamiento
        epochs: Épocas por semilla
        batch: Tamaño de lote
        peak_lr: Tasa máxima (se recomienda [2e-5, 2e-4])
        seeds: Semillas a promediar
        longitud: Longitud de secuencia (por defecto config.S)

    Returns:
        ResultadoAjuste
    """
    if not task.val:
        raise ValueError("La partición de validación está vacía")
    if not task.train:
        raise ValueError("La partición de entrenamiento está vacía")
    if not seeds:
        raise ValueError("Se requiere al menos una semilla")
    if not (RANGO_LR[0] <= peak_lr <= RANGO_LR[1]):
        logger.warning("peak_lr %.2e fuera del rango habitual [%.0e, %.0e]", peak_lr, *RANGO_LR)

    longitud = longitud or params.config.S
    entrenamiento = codificar_ejemplos(task.train, tokenizer, longitud)
    validacion = codificar_ejemplos(task.val, tokenizer, longitud)

    por_semilla = [
        ajustar_semilla(params, entrenamiento, validacion, task.num_classes, s, epochs, batch, peak_lr)
        for s in seeds
    ]
    media = float(np.mean([r.mejor_precision for r in por_semilla]))
    logger.info("Tarea %s: precisión media %.4f sobre %d semillas", task.nombre, media, len(por_semilla))
    return ResultadoAjuste(task.nombre, media, por_semilla)
