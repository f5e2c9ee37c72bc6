import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from corpus.filtrado import TextSpan
from tokenizador.bpe import TokenizerModel

logger = logging.getLogger(__name__)

RUTA_REFERENCIA_ESMS = Path(__file__).parent / "datos" / "esms_referencia.tsv"
MARCA_EXTENSION = "#@ extension"
MAX_SPANS_RATIO = 5000


@dataclass(frozen=True)
class EsmsReference:
    """
    Lista de palabras con su segmentación morfológica de referencia.

    `canonica[i]` indica si la entrada i pertenece a la lista publicada;
    las demás son una extensión curada localmente.
    """
    entries: Tuple[Tuple[str, Tuple[str, ...]], ...]
    canonica: Tuple[bool, ...] = ()

    def __post_init__(self):
        if not self.canonica:
            object.__setattr__(self, "canonica", tuple(True for _ in self.entries))
        if len(self.canonica) != len(self.entries):
            raise ValueError("canonica debe tener una marca por entrada")
        for palabra, piezas in self.entries:
            if len(piezas) < 2:
                raise ValueError(f"La entrada '{palabra}' necesita al menos 2 sub-tokens")
            if "".join(piezas) != palabra:
                raise ValueError(f"Los sub-tokens de '{palabra}' no reconstruyen la palabra")

    def __len__(self) -> int:
        return len(self.entries)

    def solo_canonicas(self) -> "EsmsReference":
        elegidas = [e for e, c in zip(self.entries, self.canonica) if c]
        return EsmsReference(tuple(elegidas))

    @classmethod
    def desde_pares(cls, pares: Sequence[Tuple[str, Sequence[str]]]) -> "EsmsReference":
        return cls(tuple((p, tuple(s)) for p, s in pares))


def cargar_referencia_esms(ruta: Optional[Union[str, Path]] = None) -> EsmsReference:
    """
    Lee un TSV `palabra<TAB>sub1,sub2,...`. Las líneas que empiezan con '#'
    son comentarios; después de la marca de extensión las entradas se
    consideran no canónicas.
    """
    ruta = Path(ruta) if ruta is not None else RUTA_REFERENCIA_ESMS
    entradas = []
    canonica = []
    en_extension = False
    with open(ruta, encoding="utf-8") as f:
        for numero, linea in enumerate(f, start=1):
            linea = linea.rstrip("\n")
            if linea.startswith(MARCA_EXTENSION):
                en_extension = True
                continue
            if not linea.strip() or linea.startswith("#"):
                continue
            campos = linea.split("\t")
            if len(campos) != 2:
                raise ValueError(f"{ruta}:{numero}: se esperaban 2 columnas separadas por tabulador")
            palabra, piezas = campos[0].strip(), tuple(p.strip() for p in campos[1].split(","))
            entradas.append((palabra, piezas))
            canonica.append(not en_extension)
    return EsmsReference(tuple(entradas), tuple(canonica))


def _muestrear_spans(sample: Sequence[Union[TextSpan, str]], seed: int, max_spans: int) -> List[str]:
    textos = [s.text if isinstance(s, TextSpan) else s for s in sample]
    if len(textos) > max_spans:
        rng = np.random.default_rng(seed)
        indices = np.sort(rng.choice(len(textos), size=max_spans, replace=False))
        textos = [textos[i] for i in indices]
    return textos


def word_split_ratio(
        model: TokenizerModel,
        sample: Sequence[Union[TextSpan, str]],
        seed: int = 0,
        max_spans: int = MAX_SPANS_RATIO
) -> float:
    """
    Número medio de tokens por palabra (separada por espacios).

    Cada palabra se codifica aislada con el espacio de prefijo. Si la muestra
    excede `max_spans`, se toman `max_spans` spans sin reemplazo.

    Args:
        model: Tokenizador
        sample: Spans de muestra
        seed: Semilla del submuestreo
        max_spans: Máximo de spans a considerar

    Returns:
        Razón de división (>= 1)
    """
    if len(sample) == 0:
        raise ValueError("La muestra para word_split_ratio está vacía")

    total_tokens = 0
    total_palabras = 0
    for texto in _muestrear_spans(sample, seed, max_spans):
        for palabra in texto.split():
            total_tokens += model.contar_tokens(palabra)
            total_palabras += 1

    if total_palabras == 0:
        raise ValueError("La muestra para word_split_ratio no contiene palabras")
    return total_tokens / total_palabras


def detalle_esms(model: TokenizerModel, reference: EsmsReference) -> List[Tuple[str, Tuple[str, ...], List[str], bool]]:
    """Por palabra: (palabra, referencia, segmentación obtenida, coincide)."""
    detalle = []
    for palabra, piezas in reference.entries:
        obtenidas = model.segmentar(palabra)
        detalle.append((palabra, piezas, obtenidas, tuple(obtenidas) == piezas))
    return detalle


def esms(model: TokenizerModel, reference: EsmsReference) -> float:
    """
    Fracción de palabras de referencia segmentadas exactamente como su
    lista de sub-tokens.
    """
    if len(reference) == 0:
        raise ValueError("La referencia ESMS está vacía")
    aciertos = sum(1 for *_, coincide in detalle_esms(model, reference) if coincide)
    return aciertos / len(reference)


@dataclass
class CandidatoTokenizador:
    """
    Candidato para la selección de tokenizador.

    Los candidatos de familias sin entrenador propio (WordPiece,
    SentencePiece) pueden traer `ratio` y `esms` precalculados y `modelo=None`.
    """
    modelo: Optional[TokenizerModel]
    familia: str
    vocab_size: int
    ratio: Optional[float] = None
    esms: Optional[float] = None

    def evaluar(
            self,
            sample: Optional[Sequence[Union[TextSpan, str]]],
            esms_ref: EsmsReference,
            seed: int = 0
    ) -> None:
        if self.ratio is None:
            if self.modelo is None or sample is None:
                raise ValueError(f"El candidato {self.familia}/{self.vocab_size} no tiene ratio ni modelo para calcularlo")
            self.ratio = word_split_ratio(self.modelo, sample, seed=seed)
        if self.esms is None:
            if self.modelo is None:
                raise ValueError(f"El candidato {self.familia}/{self.vocab_size} no tiene ESMS ni modelo para calcularlo")
            self.esms = esms(self.modelo, esms_ref)

    def to_dict(self) -> dict:
        return {"family": self.familia, "vocab_size": self.vocab_size,
                "word_split_ratio": self.ratio, "esms": self.esms}


def select_tokenizer(
        candidates: Sequence[Union[CandidatoTokenizador, Tuple[TokenizerModel, str, int]]],
        references: Mapping[str, float],
        esms_ref: EsmsReference,
        sample: Optional[Sequence[Union[TextSpan, str]]] = None,
        seed: int = 0
) -> CandidatoTokenizador:
    """
    Selecciona un tokenizador en dos etapas.

    Por familia se conserva el candidato con menor |ratio - referencia|
    (empate: vocabulario menor). Entre los ganadores de cada familia gana el
    de mayor ESMS (empate: vocabulario menor).

    Args:
        candidates: Candidatos o tuplas (modelo, familia, vocab_size)
        references: Razón de división de referencia por familia
        esms_ref: Lista de referencia ESMS
        sample: Spans para calcular la razón de división cuando falta
        seed: Semilla del submuestreo

    Returns:
        Candidato ganador, con ratio y ESMS calculados
    """
    if not candidates:
        raise ValueError("No hay candidatos de tokenizador")

    candidatos = [c if isinstance(c, CandidatoTokenizador) else CandidatoTokenizador(*c) for c in candidates]
    por_familia: Dict[str, List[CandidatoTokenizador]] = {}
    for c in candidatos:
        if c.familia not in references:
            raise ValueError(f"Falta la razón de referencia para la familia '{c.familia}'")
        c.evaluar(sample, esms_ref, seed=seed)
        por_familia.setdefault(c.familia, []).append(c)

    ganadores = []
    for familia, grupo in sorted(por_familia.items()):
        referencia = references[familia]
        mejor = min(grupo, key=lambda c: (abs(c.ratio - referencia), c.vocab_size))
        logger.info("Familia %s: vocab %d (ratio %.4f, ref %.2f)", familia, mejor.vocab_size, mejor.ratio, referencia)
        ganadores.append(mejor)

    elegido = min(ganadores, key=lambda c: (-c.esms, c.vocab_size))
    logger.info("Tokenizador elegido: %s/%d con ESMS %.4f", elegido.familia, elegido.vocab_size, elegido.esms)
    return elegido
