import heapq
import logging
import multiprocessing as mp
import re
from collections import Counter, defaultdict
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from corpus.filtrado import TextSpan

logger = logging.getLogger(__name__)

# Tokens especiales, en el orden de sus ids
ESPECIALES = (("bos", "<s>"), ("pad", "<pad>"), ("eos", "</s>"), ("unk", "<unk>"), ("mask", "<mask>"))
N_ESPECIALES = len(ESPECIALES)
N_BASE = N_ESPECIALES + 256

# Pre-tokenización con espacio como prefijo; cubre todos los caracteres,
# por lo que la concatenación de fragmentos reproduce el texto original.
PATRON_FRAGMENTOS = re.compile(r"""'(?:[sdmt]|ll|ve|re)| ?[^\W\d_]+| ?\d+| ?[^\s\w]+|_+|\s+(?!\S)|\s+""")

Par = Tuple[int, int]


@lru_cache(maxsize=1)
def bytes_a_unicode() -> Dict[int, str]:
    """
    Mapeo reversible de bytes a caracteres imprimibles (convención de nivel
    byte). El espacio se representa como 'Ġ'.
    """
    imprimibles = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) \
        + list(range(ord("®"), ord("ÿ") + 1))
    caracteres = imprimibles[:]
    n = 0
    for b in range(256):
        if b not in imprimibles:
            imprimibles.append(b)
            caracteres.append(256 + n)
            n += 1
    return {b: chr(c) for b, c in zip(imprimibles, caracteres)}


@lru_cache(maxsize=1)
def unicode_a_bytes() -> Dict[str, int]:
    return {c: b for b, c in bytes_a_unicode().items()}


def bytes_a_texto_token(secuencia: bytes) -> str:
    mapa = bytes_a_unicode()
    return "".join(mapa[b] for b in secuencia)


def texto_token_a_bytes(token: str) -> bytes:
    mapa = unicode_a_bytes()
    return bytes(mapa[c] for c in token)


def pretokenizar(texto: str) -> List[str]:
    return PATRON_FRAGMENTOS.findall(texto)


def _fusionar(simbolos: List[int], par: Par, nuevo: int) -> List[int]:
    """Reemplaza todas las apariciones de `par` por `nuevo`."""
    resultado = []
    i = 0
    n = len(simbolos)
    while i < n:
        if i < n - 1 and simbolos[i] == par[0] and simbolos[i + 1] == par[1]:
            resultado.append(nuevo)
            i += 2
        else:
            resultado.append(simbolos[i])
            i += 1
    return resultado


class TokenizerModel:
    """
    Tokenizador BPE de nivel byte.

    Ids: primero los especiales, luego los 256 bytes y después un token por
    merge, en orden de entrenamiento. El modelo no cambia tras construirse.
    """

    def __init__(self, merges: Sequence[Tuple[bytes, bytes]], family: str = "bpe"):
        self.family = family
        self.specials: Dict[str, int] = {nombre: i for i, (nombre, _) in enumerate(ESPECIALES)}
        self.id_a_bytes: List[bytes] = [b""] * N_ESPECIALES + [bytes([b]) for b in range(256)]

        bytes_a_id: Dict[bytes, int] = {}
        for i in range(N_ESPECIALES, N_BASE):
            bytes_a_id[self.id_a_bytes[i]] = i

        self.merges: List[Par] = []
        self.fusiones: Dict[Par, int] = {}
        for izquierda, derecha in merges:
            if izquierda not in bytes_a_id or derecha not in bytes_a_id:
                raise ValueError(f"Merge con tokens desconocidos: {izquierda!r} {derecha!r}")
            par = (bytes_a_id[izquierda], bytes_a_id[derecha])
            nuevo = len(self.id_a_bytes)
            self.id_a_bytes.append(izquierda + derecha)
            bytes_a_id.setdefault(izquierda + derecha, nuevo)
            self.merges.append(par)
            self.fusiones[par] = nuevo

        self.token_vocab: Dict[str, int] = {}
        for i, (_, texto) in enumerate(ESPECIALES):
            self.token_vocab[texto] = i
        for i in range(N_ESPECIALES, len(self.id_a_bytes)):
            self.token_vocab.setdefault(bytes_a_texto_token(self.id_a_bytes[i]), i)

        self._cache: Dict[str, Tuple[int, ...]] = {}

    @classmethod
    def desde_merges(cls, merges: Sequence[Tuple[str, str]], family: str = "bpe") -> "TokenizerModel":
        """Reconstruye el modelo a partir de merges en texto plano, p. ej. ("c", "o")."""
        return cls([(a.encode("utf-8"), b.encode("utf-8")) for a, b in merges], family=family)

    @property
    def vocab_size(self) -> int:
        return len(self.id_a_bytes)

    @property
    def merges_bytes(self) -> List[Tuple[bytes, bytes]]:
        return [(self.id_a_bytes[a], self.id_a_bytes[b]) for a, b in self.merges]

    @property
    def mask_id(self) -> int:
        return self.specials["mask"]

    @property
    def pad_id(self) -> int:
        return self.specials["pad"]

    @property
    def ids_especiales(self) -> Tuple[int, ...]:
        return tuple(range(N_ESPECIALES))

    def _codificar_fragmento(self, fragmento: str) -> Tuple[int, ...]:
        guardado = self._cache.get(fragmento)
        if guardado is not None:
            return guardado

        simbolos = [N_ESPECIALES + b for b in fragmento.encode("utf-8")]
        while len(simbolos) >= 2:
            # El par de menor rango (merge más antiguo) se aplica primero
            par = min(zip(simbolos, simbolos[1:]), key=lambda p: self.fusiones.get(p, np.inf))
            if par not in self.fusiones:
                break
            simbolos = _fusionar(simbolos, par, self.fusiones[par])

        resultado = tuple(simbolos)
        if len(self._cache) < 200_000:
            self._cache[fragmento] = resultado
        return resultado

    def encode(self, texto: str) -> List[int]:
        ids: List[int] = []
        for fragmento in pretokenizar(texto):
            ids.extend(self._codificar_fragmento(fragmento))
        return ids

    def decode(self, ids: Iterable[int], omitir_especiales: bool = False) -> str:
        partes = []
        for i in ids:
            if i < N_ESPECIALES:
                if not omitir_especiales:
                    partes.append(ESPECIALES[i][1].encode("utf-8"))
            else:
                partes.append(self.id_a_bytes[i])
        return b"".join(partes).decode("utf-8", errors="replace")

    def segmentar(self, palabra: str) -> List[str]:
        """
        Sub-tokens de una palabra aislada (con espacio como prefijo), sin el
        marcador de inicio de palabra.
        """
        piezas = []
        for i in self.encode(" " + palabra):
            pieza = self.id_a_bytes[i].decode("utf-8", errors="replace").strip()
            if pieza:
                piezas.append(pieza)
        return piezas

    def contar_tokens(self, palabra: str) -> int:
        return len(self.encode(" " + palabra))

    def guardar(self, ruta: Union[str, Path]) -> None:
        """
        Escribe el modelo: cabecera (familia, tamaño), merges uno por línea y
        luego líneas token<TAB>id.
        """
        with open(ruta, "w", encoding="utf-8") as f:
            f.write(f"#tokenizer family={self.family} vocab_size={self.vocab_size}\n")
            f.write("#merges\n")
            for izquierda, derecha in self.merges_bytes:
                f.write(f"{bytes_a_texto_token(izquierda)} {bytes_a_texto_token(derecha)}\n")
            f.write("#vocab\n")
            for token, i in sorted(self.token_vocab.items(), key=lambda t: t[1]):
                f.write(f"{token}\t{i}\n")

    @classmethod
    def cargar(cls, ruta: Union[str, Path]) -> "TokenizerModel":
        with open(ruta, encoding="utf-8") as f:
            lineas = f.read().split("\n")

        cabecera = lineas[0].split()
        if not cabecera or cabecera[0] != "#tokenizer":
            raise ValueError(f"Archivo de tokenizador inválido: {ruta}")
        campos = dict(c.split("=", 1) for c in cabecera[1:])

        try:
            inicio = lineas.index("#merges") + 1
            fin = lineas.index("#vocab")
        except ValueError:
            raise ValueError(f"Faltan secciones en el archivo de tokenizador: {ruta}")

        merges = []
        for linea in lineas[inicio:fin]:
            if not linea:
                continue
            izquierda, derecha = linea.split(" ")
            merges.append((texto_token_a_bytes(izquierda), texto_token_a_bytes(derecha)))

        modelo = cls(merges, family=campos.get("family", "bpe"))
        esperado = int(campos.get("vocab_size", modelo.vocab_size))
        if esperado != modelo.vocab_size:
            raise ValueError(f"vocab_size declarado ({esperado}) no coincide con los merges ({modelo.vocab_size})")
        return modelo


def _textos(corpus: Iterable[Union[TextSpan, str]]) -> List[str]:
    return [s.text if isinstance(s, TextSpan) else s for s in corpus]


def contar_fragmentos(textos: Iterable[str]) -> Counter:
    frecuencias: Counter = Counter()
    for texto in textos:
        frecuencias.update(pretokenizar(texto))
    return frecuencias


def train_bpe(
        corpus: Iterable[Union[TextSpan, str]],
        vocab_size: int,
        seed: int = 0,
        family: str = "bpe",
        max_spans: Optional[int] = None,
        mostrar_progreso: bool = False
) -> TokenizerModel:
    """
    Entrena un tokenizador BPE de nivel byte.

    En cada paso fusiona el par adyacente más frecuente; los empates se
    resuelven por orden lexicográfico de los bytes del par.

    Args:
        corpus: Spans (o cadenas) de entrenamiento
        vocab_size: Tamaño final del vocabulario (incluye especiales y bytes)
        seed: Semilla para submuestrear el corpus cuando excede max_spans
        family: Nombre de la familia del tokenizador
        max_spans: Máximo de spans a usar (None = todos)
        mostrar_progreso: Muestra barra de progreso

    Returns:
        TokenizerModel entrenado
    """
    if vocab_size <= N_BASE:
        raise ValueError(f"vocab_size debe ser mayor que {N_BASE} (256 bytes + {N_ESPECIALES} especiales)")

    textos = _textos(corpus)
    if max_spans is not None and len(textos) > max_spans:
        rng = np.random.default_rng(seed)
        elegidos = np.sort(rng.choice(len(textos), size=max_spans, replace=False))
        textos = [textos[i] for i in elegidos]

    # Palabras únicas ordenadas para que el entrenamiento sea determinista
    frecuencias = contar_fragmentos(textos)
    fragmentos = sorted(frecuencias)
    palabras = [[N_ESPECIALES + b for b in f.encode("utf-8")] for f in fragmentos]
    cuentas = [frecuencias[f] for f in fragmentos]

    id_a_bytes: List[bytes] = [b""] * N_ESPECIALES + [bytes([b]) for b in range(256)]
    conteo: Dict[Par, int] = defaultdict(int)
    ubicaciones: Dict[Par, set] = defaultdict(set)
    for idx, simbolos in enumerate(palabras):
        for par in zip(simbolos, simbolos[1:]):
            conteo[par] += cuentas[idx]
            ubicaciones[par].add(idx)

    def entrada(par: Par):
        return (-conteo[par], id_a_bytes[par[0]], id_a_bytes[par[1]], par)

    monticulo = [entrada(par) for par in conteo]
    heapq.heapify(monticulo)

    merges: List[Tuple[bytes, bytes]] = []
    objetivo = vocab_size - N_BASE
    progreso = tqdm(total=objetivo, desc="BPE", unit="merge", disable=not mostrar_progreso)

    while len(merges) < objetivo:
        mejor = None
        while monticulo:
            negativo, _, _, par = heapq.heappop(monticulo)
            if -negativo > 0 and conteo.get(par, 0) == -negativo:
                mejor = par
                break
        if mejor is None:
            logger.warning(
                "Corpus insuficiente: se detuvo en %d tokens (se pidieron %d)",
                N_BASE + len(merges), vocab_size
            )
            break

        nuevo = len(id_a_bytes)
        id_a_bytes.append(id_a_bytes[mejor[0]] + id_a_bytes[mejor[1]])
        merges.append((id_a_bytes[mejor[0]], id_a_bytes[mejor[1]]))

        cambiados = set()
        for idx in sorted(ubicaciones.pop(mejor, ())):
            simbolos = palabras[idx]
            f = cuentas[idx]
            for par in zip(simbolos, simbolos[1:]):
                conteo[par] -= f
                cambiados.add(par)
            nuevos = _fusionar(simbolos, mejor, nuevo)
            palabras[idx] = nuevos
            for par in zip(nuevos, nuevos[1:]):
                conteo[par] += f
                ubicaciones[par].add(idx)
                cambiados.add(par)

        conteo.pop(mejor, None)
        cambiados.discard(mejor)
        for par in cambiados:
            if conteo.get(par, 0) > 0:
                heapq.heappush(monticulo, entrada(par))
            else:
                conteo.pop(par, None)
        progreso.update(1)

    progreso.close()
    logger.info("Tokenizador %s entrenado: %d merges, vocabulario %d", family, len(merges), N_BASE + len(merges))
    return TokenizerModel(merges, family=family)


def encode(model: TokenizerModel, text: str) -> List[int]:
    """Codifica un texto aplicando los merges en orden de rango."""
    return model.encode(text)


def decode(model: TokenizerModel, ids: Iterable[int]) -> str:
    return model.decode(ids)


def longitud_media_codificada(model: TokenizerModel, spans: Sequence[Union[TextSpan, str]]) -> float:
    """Número medio de tokens por span codificado."""
    textos = _textos(spans)
    if not textos:
        raise ValueError("Se requiere al menos un span")
    return float(np.mean([len(model.encode(t)) for t in textos]))


def _entrenar_candidato(argumentos) -> TokenizerModel:
    textos, vocab_size, seed, family = argumentos
    return train_bpe(textos, vocab_size, seed=seed, family=family)


def entrenar_candidatos(
        corpus: Iterable[Union[TextSpan, str]],
        vocab_sizes: Sequence[int],
        seed: int = 0,
        procesos: int = 1
) -> List[TokenizerModel]:
    """
    Entrena un candidato BPE por tamaño de vocabulario. Cada candidato se
    entrena en un solo proceso; los candidatos corren en paralelo.
    """
    textos = _textos(corpus)
    tareas = [(textos, v, seed, "bpe") for v in vocab_sizes]
    if procesos <= 1 or len(tareas) <= 1:
        return [_entrenar_candidato(t) for t in tareas]
    with mp.Pool(min(procesos, len(tareas))) as pool:
        return pool.map(_entrenar_candidato, tareas)
