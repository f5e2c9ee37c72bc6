"""
Tareas de clasificación sintéticas cuyo texto usa sólo palabras de un
vocabulario cerrado.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from modelo.enmascarado import LabeledBatch, armar_lote_clasificacion
from tokenizador.bpe import TokenizerModel

logger = logging.getLogger(__name__)

Ejemplo = Tuple[str, Optional[str], int]


@dataclass
class TareaClasificacion:
    nombre: str
    num_classes: int
    train: List[Ejemplo] = field(default_factory=list)
    val: List[Ejemplo] = field(default_factory=list)

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes debe ser al menos 2")
        for _, _, etiqueta in self.train + self.val:
            if not (0 <= etiqueta < self.num_classes):
                raise ValueError(f"Etiqueta {etiqueta} fuera de rango en la tarea '{self.nombre}'")

    @property
    def es_de_pares(self) -> bool:
        return any(b is not None for _, b, _ in self.train)

    def guardar(self, ruta: Union[str, Path]) -> None:
        with open(ruta, "w", encoding="utf-8") as f:
            json.dump({"nombre": self.nombre, "num_classes": self.num_classes,
                       "train": self.train, "val": self.val}, f, ensure_ascii=False)

    @classmethod
    def cargar(cls, ruta: Union[str, Path]) -> "TareaClasificacion":
        with open(ruta, encoding="utf-8") as f:
            datos = json.load(f)
        return cls(
            datos["nombre"], int(datos["num_classes"]),
            [tuple(e) for e in datos["train"]], [tuple(e) for e in datos["val"]]
        )


def dividir(ejemplos: Sequence[Ejemplo], fraccion_val: float, seed: int = 0) -> Tuple[List[Ejemplo], List[Ejemplo]]:
    rng = np.random.default_rng(seed)
    orden = rng.permutation(len(ejemplos))
    n_val = int(round(fraccion_val * len(ejemplos)))
    val = [ejemplos[i] for i in orden[:n_val]]
    train = [ejemplos[i] for i in orden[n_val:]]
    return train, val


def tarea_familia_palabras(
        palabras: Sequence[str],
        familia: Sequence[str],
        n: int = 400,
        longitud: int = 8,
        fraccion_val: float = 0.25,
        seed: int = 0
) -> TareaClasificacion:
    """
    Oraciones de palabras aleatorias; la etiqueta es 1 si contiene alguna
    palabra de `familia` (p. ej. "play", "played", "player").

    Args:
        palabras: Vocabulario cerrado
        familia: Palabras de la familia a detectar
        n: Número de ejemplos (mitad positivos)
        longitud: Palabras por oración
        fraccion_val: Fracción de validación
        seed: Semilla

    Returns:
        TareaClasificacion binaria
    """
    excluidas = set(familia)
    relleno = sorted(set(palabras) - excluidas)
    if not relleno or not familia:
        raise ValueError("Se requieren palabras de relleno y una familia no vacía")

    rng = np.random.default_rng(seed)
    ejemplos: List[Ejemplo] = []
    for i in range(n):
        oracion = list(rng.choice(relleno, size=longitud))
        etiqueta = i % 2
        if etiqueta:
            oracion[int(rng.integers(longitud))] = str(rng.choice(list(familia)))
        ejemplos.append((" ".join(oracion), None, etiqueta))

    train, val = dividir(ejemplos, fraccion_val, seed)
    return TareaClasificacion("familia_palabras", 2, train, val)


def tarea_solapamiento(
        palabras: Sequence[str],
        n: int = 400,
        longitud: int = 6,
        fraccion_val: float = 0.25,
        seed: int = 0
) -> TareaClasificacion:
    """
    Pares de oraciones; la etiqueta es 1 si la segunda reordena las
    palabras de la primera y 0 si no comparte ninguna.
    """
    vocab = sorted(set(palabras))
    if len(vocab) < 2 * longitud:
        raise ValueError("Vocabulario demasiado pequeño para la tarea de solapamiento")

    rng = np.random.default_rng(seed)
    ejemplos: List[Ejemplo] = []
    for i in range(n):
        elegidas = rng.choice(len(vocab), size=2 * longitud, replace=False)
        a = [vocab[j] for j in elegidas[:longitud]]
        etiqueta = i % 2
        if etiqueta:
            b = [a[j] for j in rng.permutation(longitud)]
        else:
            b = [vocab[j] for j in elegidas[longitud:]]
        ejemplos.append((" ".join(a), " ".join(b), etiqueta))

    train, val = dividir(ejemplos, fraccion_val, seed)
    return TareaClasificacion("solapamiento_lexico", 2, train, val)


def codificar_ejemplos(ejemplos: Sequence[Ejemplo], tokenizer: TokenizerModel, longitud: int) -> LabeledBatch:
    """Tokeniza ejemplos (a, b, etiqueta) en un único LabeledBatch."""
    if not ejemplos:
        raise ValueError("No hay ejemplos que codificar")
    tokenizados = [
        (tokenizer.encode(a), tokenizer.encode(b) if b is not None else None, etiqueta)
        for a, b, etiqueta in ejemplos
    ]
    return armar_lote_clasificacion(tokenizados, longitud, pad_id=tokenizer.pad_id)
