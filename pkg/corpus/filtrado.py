import json
import logging
import multiprocessing as mp
import re
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from corpus.vocabulario import VocabularySpec, normalizar_palabra

logger = logging.getLogger(__name__)

FIN_DE_ORACION = r"(?<=[.?!])\s+"


@dataclass(frozen=True)
class FilterConfig:
    """
    Parámetros del filtrado por vocabulario.

    Args:
        mode: "span" (ventana deslizante) o "sentence" (oraciones concatenadas)
        span_size: Tamaño de la ventana en palabras
        stride: Desplazamiento de la ventana en palabras
        target_span_words: Palabras objetivo al concatenar oraciones
        sentence_pattern: Expresión regular para segmentar oraciones
    """
    mode: str = "span"
    span_size: int = 110
    stride: int = 30
    target_span_words: int = 110
    sentence_pattern: str = FIN_DE_ORACION

    def __post_init__(self):
        if self.mode not in ("span", "sentence"):
            raise ValueError(f"Modo de filtrado desconocido: {self.mode}")
        if not (0 < self.stride <= self.span_size):
            raise ValueError("Se requiere 0 < stride <= span_size")
        if self.target_span_words <= 0:
            raise ValueError("target_span_words debe ser positivo")


@dataclass(frozen=True)
class TextSpan:
    text: str
    word_count: int
    origin: Tuple[str, str, int]

    def to_dict(self) -> dict:
        return {"text": self.text, "word_count": self.word_count, "origin": list(self.origin)}

    @classmethod
    def from_dict(cls, datos: dict) -> "TextSpan":
        corpus_id, doc_id, offset = datos["origin"]
        return cls(datos["text"], int(datos["word_count"]), (str(corpus_id), str(doc_id), int(offset)))

    @classmethod
    def desde_texto(cls, texto: str, origin: Tuple[str, str, int] = ("", "", 0)) -> "TextSpan":
        return cls(texto, len(texto.split()), origin)


@dataclass
class EstadisticasFiltrado:
    """Contadores del filtrado de un corpus."""
    corpus_id: str = ""
    documentos: int = 0
    documentos_ilegibles: int = 0
    oraciones_admitidas: int = 0
    spans: int = 0
    palabras: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def palabra_admisible(token: str, vocab: VocabularySpec) -> bool:
    palabra = normalizar_palabra(token)
    return not palabra or palabra in vocab.words


def sentence_admissible(sentence: str, vocab: VocabularySpec) -> bool:
    """
    Indica si todas las palabras de una oración están en el vocabulario,
    ignorando dígitos y puntuación en los extremos.
    """
    return all(palabra_admisible(token, vocab) for token in sentence.split())


def segmentar_oraciones(texto: str, patron: str = FIN_DE_ORACION) -> List[str]:
    """Divide un texto en oraciones con espacios normalizados."""
    oraciones = []
    for oracion in re.split(patron, texto.strip()):
        oracion = " ".join(oracion.split())
        if oracion:
            oraciones.append(oracion)
    return oraciones


def _spans_por_ventana(
        corpus_id: str,
        doc_id: str,
        texto: str,
        vocab: VocabularySpec,
        cfg: FilterConfig
) -> List[TextSpan]:
    palabras = texto.split()
    n = len(palabras)
    if n < cfg.span_size:
        return []

    # Suma acumulada de palabras fuera de vocabulario
    malas = np.fromiter((not palabra_admisible(p, vocab) for p in palabras), dtype=np.int64, count=n)
    acumulado = np.concatenate([[0], np.cumsum(malas)])

    spans = []
    for inicio in range(0, n - cfg.span_size + 1, cfg.stride):
        fin = inicio + cfg.span_size
        if acumulado[fin] - acumulado[inicio] == 0:
            spans.append(TextSpan(" ".join(palabras[inicio:fin]), cfg.span_size, (corpus_id, doc_id, inicio)))
    return spans


def _spans_por_oracion(
        corpus_id: str,
        doc_id: str,
        texto: str,
        vocab: VocabularySpec,
        cfg: FilterConfig
) -> Tuple[List[TextSpan], int]:
    spans = []
    actual: List[str] = []
    palabras_actual = 0
    offset_actual = 0
    offset = 0
    admitidas = 0

    def cerrar():
        if actual:
            texto_span = " ".join(actual)
            spans.append(TextSpan(texto_span, palabras_actual, (corpus_id, doc_id, offset_actual)))

    for oracion in segmentar_oraciones(texto, cfg.sentence_pattern):
        n = len(oracion.split())
        if not sentence_admissible(oracion, vocab):
            # Una oración no admitida rompe la continuidad
            cerrar()
            actual, palabras_actual = [], 0
        else:
            admitidas += 1
            if actual and palabras_actual + n > cfg.target_span_words:
                cerrar()
                actual, palabras_actual = [], 0
            if not actual:
                offset_actual = offset
            actual.append(oracion)
            palabras_actual += n
        offset += n

    cerrar()
    return spans, admitidas


def filtrar_documento(
        corpus_id: str,
        doc_id: str,
        texto: str,
        vocab: VocabularySpec,
        cfg: FilterConfig
) -> Tuple[List[TextSpan], int]:
    """
    Filtra un documento.

    Returns:
        Tupla con los spans emitidos y el número de oraciones admitidas
    """
    if cfg.mode == "span":
        return _spans_por_ventana(corpus_id, doc_id, texto, vocab, cfg), 0
    return _spans_por_oracion(corpus_id, doc_id, texto, vocab, cfg)


# Estado de los procesos trabajadores
_VOCAB_TRABAJADOR: Optional[VocabularySpec] = None
_CFG_TRABAJADOR: Optional[FilterConfig] = None


def _inicializar_trabajador(vocab: VocabularySpec, cfg: FilterConfig) -> None:
    global _VOCAB_TRABAJADOR, _CFG_TRABAJADOR
    _VOCAB_TRABAJADOR = vocab
    _CFG_TRABAJADOR = cfg


def _filtrar_en_trabajador(tarea: Tuple[str, str, str]) -> Tuple[List[TextSpan], int]:
    corpus_id, doc_id, texto = tarea
    return filtrar_documento(corpus_id, doc_id, texto, _VOCAB_TRABAJADOR, _CFG_TRABAJADOR)


def filter_corpus(
        documents: Iterable[Tuple[str, str]],
        vocab: VocabularySpec,
        cfg: FilterConfig,
        corpus_id: str = "corpus",
        procesos: int = 1,
        estadisticas: Optional[EstadisticasFiltrado] = None,
        mostrar_progreso: bool = False
) -> Iterator[TextSpan]:
    """
    Filtra un flujo de documentos y produce spans cerrados en vocabulario.

    La salida conserva el orden de entrada, tanto en modo secuencial como
    con varios procesos.

    Args:
        documents: Pares (id, texto)
        vocab: Vocabulario permitido
        cfg: Configuración del filtrado
        corpus_id: Identificador del corpus para el origen de cada span
        procesos: Número de procesos trabajadores
        estadisticas: Contadores a actualizar (opcional)
        mostrar_progreso: Muestra barra de progreso

    Yields:
        TextSpan en orden determinista
    """
    if estadisticas is None:
        estadisticas = EstadisticasFiltrado(corpus_id=corpus_id)
    tareas = ((corpus_id, str(doc_id), texto) for doc_id, texto in documents)

    if procesos <= 1:
        resultados = (_procesar_secuencial(t, vocab, cfg) for t in tareas)
        yield from _acumular(resultados, estadisticas, mostrar_progreso)
        return

    with mp.Pool(procesos, initializer=_inicializar_trabajador, initargs=(vocab, cfg)) as pool:
        resultados = pool.imap(_filtrar_en_trabajador, tareas, chunksize=16)
        yield from _acumular(resultados, estadisticas, mostrar_progreso)


def _procesar_secuencial(tarea, vocab, cfg):
    corpus_id, doc_id, texto = tarea
    return filtrar_documento(corpus_id, doc_id, texto, vocab, cfg)


def _acumular(resultados, estadisticas: EstadisticasFiltrado, mostrar_progreso: bool) -> Iterator[TextSpan]:
    for spans, admitidas in tqdm(resultados, desc="Filtrando", unit="doc", disable=not mostrar_progreso):
        estadisticas.documentos += 1
        estadisticas.oraciones_admitidas += admitidas
        for span in spans:
            estadisticas.spans += 1
            estadisticas.palabras += span.word_count
            yield span


def leer_documentos_jsonl(
        ruta: Union[str, Path],
        estadisticas: Optional[EstadisticasFiltrado] = None
) -> Iterator[Tuple[str, str]]:
    """
    Lee documentos JSONL con campo "text" (y "id" opcional). Las líneas
    ilegibles se saltan y se cuentan.
    """
    with open(ruta, "rb") as f:
        for numero, linea in enumerate(f):
            if not linea.strip():
                continue
            try:
                registro = json.loads(linea.decode("utf-8"))
                texto = registro["text"]
                if not isinstance(texto, str):
                    raise TypeError("el campo text no es una cadena")
            except (UnicodeDecodeError, ValueError, KeyError, TypeError) as e:
                if estadisticas is not None:
                    estadisticas.documentos_ilegibles += 1
                logger.debug("Documento %d ilegible en %s: %s", numero, ruta, e)
                continue
            yield str(registro.get("id", numero)), texto


def escribir_spans_jsonl(spans: Iterable[TextSpan], ruta: Union[str, Path]) -> int:
    total = 0
    with open(ruta, "w", encoding="utf-8") as f:
        for span in spans:
            f.write(json.dumps(span.to_dict(), ensure_ascii=False) + "\n")
            total += 1
    return total


def leer_spans_jsonl(ruta: Union[str, Path]) -> List[TextSpan]:
    spans = []
    with open(ruta, encoding="utf-8") as f:
        for linea in f:
            if linea.strip():
                spans.append(TextSpan.from_dict(json.loads(linea)))
    return spans
