import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Union

logger = logging.getLogger(__name__)

# Caracteres permitidos en una palabra del vocabulario
CARACTERES_PERMITIDOS = re.compile(r"[^a-z'\-]")
PALABRA_VALIDA = re.compile(r"^[a-z'\-]+$")
DIGITOS = re.compile(r"[0-9]")


@dataclass(frozen=True)
class VocabularySpec:
    """
    Conjunto cerrado de palabras permitidas (minúsculas).

    Inmutable después de construirse; se puede compartir entre procesos.
    """
    words: FrozenSet[str]
    stoplist: FrozenSet[str] = frozenset()
    source_label: str = ""
    lineas_rechazadas: int = 0

    def __post_init__(self):
        invalidas = [p for p in self.words if not PALABRA_VALIDA.match(p)]
        if invalidas:
            raise ValueError(f"Palabras inválidas en el vocabulario: {sorted(invalidas)[:5]}")
        if self.words & self.stoplist:
            raise ValueError("El vocabulario y la stoplist no pueden compartir palabras")

    def __contains__(self, palabra: str) -> bool:
        return palabra in self.words

    def __len__(self) -> int:
        return len(self.words)


def limpiar_palabra_vocabulario(token: str) -> str:
    """
    Normaliza un token de transcripción: minúsculas, sin caracteres especiales
    y sin apóstrofos o guiones en los extremos.

    Args:
        token: Token separado por espacios

    Returns:
        Palabra limpia (puede ser vacía)
    """
    palabra = CARACTERES_PERMITIDOS.sub("", token.lower())
    return palabra.strip("'-")


def normalizar_palabra(token: str) -> str:
    """
    Normaliza un token de texto para revisar admisibilidad: minúsculas,
    sin dígitos y sin puntuación en los extremos. Apóstrofos y guiones
    internos se conservan.
    """
    palabra = DIGITOS.sub("", token.lower())
    inicio, fin = 0, len(palabra)
    while inicio < fin and not palabra[inicio].isalnum():
        inicio += 1
    while fin > inicio and not palabra[fin - 1].isalnum():
        fin -= 1
    return palabra[inicio:fin]


def build_vocabulary(
        transcript_lines: Iterable[Union[str, bytes]],
        stoplist: Iterable[str] = (),
        source_label: str = ""
) -> VocabularySpec:
    """
    Construye el vocabulario reducido a partir de transcripciones.

    Args:
        transcript_lines: Líneas de texto (str o bytes UTF-8)
        stoplist: Palabras a excluir (galimatías)
        source_label: Descripción libre del origen

    Returns:
        VocabularySpec deduplicado y sin miembros de la stoplist
    """
    excluidas = frozenset(limpiar_palabra_vocabulario(p) for p in stoplist) - {""}
    palabras = set()
    rechazadas = 0

    for linea in transcript_lines:
        if isinstance(linea, bytes):
            try:
                linea = linea.decode("utf-8")
            except UnicodeDecodeError:
                rechazadas += 1
                continue
        else:
            # Sustitutos sueltos (p. ej. surrogateescape) no son UTF-8 válido
            try:
                linea.encode("utf-8")
            except UnicodeEncodeError:
                rechazadas += 1
                continue

        for token in linea.split():
            palabra = limpiar_palabra_vocabulario(token)
            if palabra and palabra not in excluidas:
                palabras.add(palabra)

    if rechazadas:
        logger.warning("Se rechazaron %d líneas con UTF-8 mal formado", rechazadas)

    return VocabularySpec(
        words=frozenset(palabras),
        stoplist=excluidas,
        source_label=source_label,
        lineas_rechazadas=rechazadas
    )


def marcar_galimatias(palabras: Iterable[str], repeticiones: int = 3) -> List[str]:
    """
    Marca palabras con algún bigrama de caracteres repetido al menos
    `repeticiones` veces (p. ej. "bababa"). Sólo marca, nunca elimina.

    Returns:
        Lista ordenada de palabras sospechosas
    """
    marcadas = []
    for palabra in palabras:
        bigramas = Counter(palabra[i:i + 2] for i in range(len(palabra) - 1))
        if bigramas and max(bigramas.values()) >= repeticiones:
            marcadas.append(palabra)
    return sorted(marcadas)


def cargar_lista_palabras(ruta: Union[str, Path]) -> List[str]:
    """Lee un archivo de texto con una palabra por línea (ignora vacías y '#')."""
    palabras = []
    with open(ruta, encoding="utf-8") as f:
        for linea in f:
            linea = linea.strip()
            if linea and not linea.startswith("#"):
                palabras.append(linea)
    return palabras


def cargar_vocabulario(ruta: Union[str, Path], stoplist: Optional[Iterable[str]] = None) -> VocabularySpec:
    palabras = {limpiar_palabra_vocabulario(p) for p in cargar_lista_palabras(ruta)} - {""}
    excluidas = frozenset(stoplist or ())
    return VocabularySpec(
        words=frozenset(palabras - excluidas),
        stoplist=excluidas,
        source_label=str(ruta)
    )


def guardar_vocabulario(vocabulario: VocabularySpec, ruta: Union[str, Path]) -> None:
    with open(ruta, "w", encoding="utf-8") as f:
        for palabra in sorted(vocabulario.words):
            f.write(palabra + "\n")


def cargar_stoplist(ruta: Union[str, Path]) -> FrozenSet[str]:
    return frozenset(limpiar_palabra_vocabulario(p) for p in cargar_lista_palabras(ruta)) - {""}
