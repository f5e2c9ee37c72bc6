import logging
from collections import Counter
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from corpus.filtrado import TextSpan
from entrenamiento.optimizador import EstadoAdamW, OptimizerHyper, adamw_step, lr_at, recortar_gradientes
from entrenamiento.registro import RunLog
from modelo.checkpoint import guardar_checkpoint, ruta_checkpoint
from modelo.configuracion import ModelConfig
from modelo.enmascarado import MaskedBatch, enmascarar_lote, secuencia_mlm
from modelo.transformer import evaluar_mlm, init_model, perdida_y_gradientes_mlm, sin_decaimiento
from tokenizador.bpe import N_ESPECIALES, TokenizerModel

logger = logging.getLogger(__name__)

SEMILLA_EVALUACION = 12345


def tokenizar_spans(
        spans: Iterable[Union[TextSpan, str]],
        tokenizer: TokenizerModel,
        longitud: int
) -> Iterator[np.ndarray]:
    """Convierte cada span en una secuencia <s> ... </s> de longitud fija."""
    for span in spans:
        texto = span.text if isinstance(span, TextSpan) else span
        yield secuencia_mlm(tokenizer.encode(texto), longitud)


def lotes_de_secuencias(secuencias: Iterable[np.ndarray], batch_size: int) -> Iterator[np.ndarray]:
    """Agrupa secuencias en lotes completos; el resto final se descarta."""
    actual: List[np.ndarray] = []
    for secuencia in secuencias:
        actual.append(secuencia)
        if len(actual) == batch_size:
            yield np.stack(actual)
            actual = []


def lotes_de_evaluacion(
        secuencias: Sequence[np.ndarray],
        batch_size: int = 64,
        seed: int = SEMILLA_EVALUACION
) -> List[MaskedBatch]:
    """Enmascara el conjunto de evaluación una sola vez con semilla fija."""
    rng = np.random.default_rng(seed)
    lotes = []
    for inicio in range(0, len(secuencias), batch_size):
        lotes.append(enmascarar_lote(np.stack(secuencias[inicio:inicio + batch_size]), rng))
    return lotes


def perplejidad_unigrama(secuencias: Sequence[np.ndarray]) -> float:
    """
    Perplejidad de un modelo unigrama estimado con las frecuencias del
    propio conjunto (tokens no especiales).
    """
    conteos: Counter = Counter()
    for secuencia in secuencias:
        conteos.update(int(t) for t in secuencia if t >= N_ESPECIALES)
    total = sum(conteos.values())
    if total == 0:
        raise ValueError("El conjunto no tiene tokens para el modelo unigrama")
    frecuencias = np.array(list(conteos.values()), dtype=np.float64)
    probabilidades = frecuencias / total
    entropia = -np.sum(frecuencias * np.log(probabilidades)) / total
    return float(np.exp(entropia))


class Preentrenador:
    def __init__(
            self,
            config: ModelConfig,
            hyper: OptimizerHyper,
            seed: int = 0,
            log_every: int = 100,
            run_id: str = "",
            directorio_checkpoints: Optional[Union[str, Path]] = None,
            checkpoint_every: Optional[int] = None,
            modo_flops: str = "s_corrected",
            mostrar_progreso: bool = False
    ):
        """
        Inicializa el preentrenamiento MLM.

        Args:
            config: Forma del modelo
            hyper: Hiperparámetros del optimizador
            seed: Semilla de inicialización, enmascarado y dropout
            log_every: Pasos entre registros de evaluación
            run_id: Identificador de la corrida
            directorio_checkpoints: Dónde guardar run_id/step_N.ckpt (None = no guardar)
            checkpoint_every: Pasos entre checkpoints (None = sólo el último)
            modo_flops: Modo del modelo de costo para los FLOPs acumulados
            mostrar_progreso: Muestra barra de progreso
        """
        if log_every < 1:
            raise ValueError("log_every debe ser positivo")
        self.config = config
        self.hyper = hyper
        self.seed = seed
        self.log_every = log_every
        self.directorio_checkpoints = directorio_checkpoints
        self.checkpoint_every = checkpoint_every
        self.mostrar_progreso = mostrar_progreso

        self.params = init_model(config, seed)
        self.estado = EstadoAdamW.para(self.params)
        self.rng = np.random.default_rng(seed)
        self.paso_actual = 0

        self.log = RunLog(config=config, hyper=hyper, seed=seed, run_id=run_id or config.etiqueta(), modo_flops=modo_flops)

        # Historial para graficar
        self.perdida_historica: List[float] = []
        self.lr_historica: List[float] = []
        self._pendientes: List[float] = []

    def paso_entrenamiento(self, secuencias: np.ndarray) -> float:
        """
        Ejecuta una actualización: enmascarar, propagar, retropropagar y
        aplicar AdamW.

        Returns:
            Pérdida de entrenamiento del lote
        """
        lote = enmascarar_lote(secuencias, self.rng)
        if lote.num_etiquetas == 0:
            raise ValueError("Lote sin posiciones enmascaradas")
        perdida, grads = perdida_y_gradientes_mlm(self.params, lote, rng=self.rng if self.config.dropout > 0 else None)
        recortar_gradientes(grads, self.hyper.clip_norm)

        paso = self.paso_actual + 1
        tasa = lr_at(self.hyper, paso)
        adamw_step(self.params, grads, self.estado, self.hyper, paso, lr=tasa, sin_decaimiento=sin_decaimiento)
        self.paso_actual = paso

        self.perdida_historica.append(perdida)
        self.lr_historica.append(tasa)
        self._pendientes.append(perdida)
        return perdida

    def evaluar(self, lotes_eval: Sequence[MaskedBatch]) -> float:
        return evaluar_mlm(self.params, list(lotes_eval))

    def _registrar(self, lotes_eval: Sequence[MaskedBatch]) -> None:
        perdida_eval = self.evaluar(lotes_eval)
        perdida_train = float(np.mean(self._pendientes))
        self._pendientes = []
        registro = self.log.agregar(self.paso_actual, perdida_train, perdida_eval)
        logger.info(
            "[%s] paso %d: train %.4f, eval %.4f (ppl %.2f)",
            self.log.run_id, registro.step, registro.train_loss, registro.eval_loss, registro.eval_ppl
        )

    def _guardar(self) -> None:
        if self.directorio_checkpoints is None:
            return
        ruta = ruta_checkpoint(self.directorio_checkpoints, self.log.run_id, self.paso_actual)
        guardar_checkpoint(ruta, self.params, self.paso_actual, self.paso_actual * self.hyper.batch_size * self.config.S)

    def entrenar(self, lotes: Iterable[np.ndarray], lotes_eval: Sequence[MaskedBatch]) -> RunLog:
        """
        Recorre los lotes una sola vez hasta total_steps. Si los datos se
        agotan antes, se detiene y registra los pasos realizados.

        Args:
            lotes: Lotes (batch_size, S) de ids
            lotes_eval: Conjunto de evaluación ya enmascarado

        Returns:
            RunLog de la corrida
        """
        total = self.hyper.total_steps
        progreso = tqdm(total=total, desc=self.log.run_id, unit="paso", disable=not self.mostrar_progreso)

        for secuencias in lotes:
            if self.paso_actual >= total:
                break
            self.paso_entrenamiento(secuencias)
            progreso.update(1)

            if self.paso_actual % self.log_every == 0:
                self._registrar(lotes_eval)
            if self.checkpoint_every and self.paso_actual % self.checkpoint_every == 0:
                self._guardar()
        progreso.close()

        if self.paso_actual < total:
            logger.warning("Datos agotados en el paso %d de %d", self.paso_actual, total)
        if self._pendientes:
            self._registrar(lotes_eval)
        if not (self.checkpoint_every and self.paso_actual % self.checkpoint_every == 0):
            self._guardar()

        self.log.pasos_completados = self.paso_actual
        return self.log

    def obtener_estadisticas(self) -> dict:
        """
        Obtiene estadísticas del entrenamiento.

        Returns:
            Diccionario con estadísticas
        """
        return {
            'perdida_historica': self.perdida_historica,
            'lr_historica': self.lr_historica,
            'paso_actual': self.paso_actual,
            'registros': len(self.log.records),
            'ultima_eval': self.log.records[-1].eval_loss if self.log.records else None,
        }


def pretrain(
        config: ModelConfig,
        data: Iterable[Union[TextSpan, str]],
        tokenizer: TokenizerModel,
        hyper: OptimizerHyper,
        eval_set: Sequence[Union[TextSpan, str]],
        log_every: int = 100,
        seed: int = 0,
        run_id: str = "",
        directorio_checkpoints: Optional[Union[str, Path]] = None,
        checkpoint_every: Optional[int] = None,
        mostrar_progreso: bool = False
) -> RunLog:
    """
    Preentrena un codificador MLM en una sola pasada sobre `data`.

    Args:
        config: Forma del modelo (V debe cubrir el vocabulario del tokenizador)
        data: Flujo de spans de entrenamiento
        tokenizer: Tokenizador
        hyper: Hiperparámetros
        eval_set: Spans de evaluación
        log_every: Pasos entre registros
        seed: Semilla
        run_id: Identificador de la corrida
        directorio_checkpoints: Directorio base de checkpoints
        checkpoint_every: Pasos entre checkpoints
        mostrar_progreso: Muestra barra de progreso

    Returns:
        RunLog con registros de pérdida y FLOPs
    """
    return preentrenar(
        config, data, tokenizer, hyper, eval_set, log_every, seed, run_id,
        directorio_checkpoints, checkpoint_every, mostrar_progreso
    ).log


def preentrenar(
        config: ModelConfig,
        data: Iterable[Union[TextSpan, str]],
        tokenizer: TokenizerModel,
        hyper: OptimizerHyper,
        eval_set: Sequence[Union[TextSpan, str]],
        log_every: int = 100,
        seed: int = 0,
        run_id: str = "",
        directorio_checkpoints: Optional[Union[str, Path]] = None,
        checkpoint_every: Optional[int] = None,
        mostrar_progreso: bool = False
) -> Preentrenador:
    """Como `pretrain`, pero devuelve el entrenador con los parámetros finales."""
    if tokenizer.vocab_size > config.V:
        raise ValueError(f"El tokenizador ({tokenizer.vocab_size}) excede V={config.V}")
    if not eval_set:
        raise ValueError("El conjunto de evaluación está vacío")

    secuencias_eval = list(tokenizar_spans(eval_set, tokenizer, config.S))
    lotes_eval = lotes_de_evaluacion(secuencias_eval)

    entrenador = Preentrenador(
        config, hyper, seed=seed, log_every=log_every, run_id=run_id,
        directorio_checkpoints=directorio_checkpoints, checkpoint_every=checkpoint_every,
        mostrar_progreso=mostrar_progreso
    )
    entrenador.log.unigram_ppl = perplejidad_unigrama(secuencias_eval)
    lotes = lotes_de_secuencias(tokenizar_spans(data, tokenizer, config.S), hyper.batch_size)
    entrenador.entrenar(lotes, lotes_eval)
    return entrenador
