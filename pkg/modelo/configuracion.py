import json
from dataclasses import dataclass, asdict, replace
from pathlib import Path
from typing import Tuple, Union

MAX_POSICIONES = 512
LONGITUD_SECUENCIA = 128
EJES = ("E", "H", "I", "L", "A")


@dataclass(frozen=True)
class ModelConfig:
    """
    Forma de un codificador transformer.

    Args:
        E: Tamaño de embedding
        H: Tamaño oculto
        I: Tamaño intermedio (FFN)
        L: Número de capas
        A: Número de cabezas de atención
        V: Tamaño del vocabulario
        S: Longitud de secuencia de entrenamiento
        dropout: Tasa de dropout
        max_positions: Posiciones aprendidas disponibles
    """
    E: int = 256
    H: int = 256
    I: int = 1024
    L: int = 8
    A: int = 8
    V: int = 19000
    S: int = LONGITUD_SECUENCIA
    dropout: float = 0.1
    max_positions: int = MAX_POSICIONES

    def __post_init__(self):
        for nombre in ("E", "H", "I", "L", "A", "V", "S", "max_positions"):
            valor = getattr(self, nombre)
            if not isinstance(valor, int) or valor < 1:
                raise ValueError(f"Parámetro inválido: {nombre}={valor!r} (se requiere entero >= 1)")
        if self.H % self.A != 0:
            raise ValueError(f"H ({self.H}) debe ser divisible entre A ({self.A})")
        if self.S > self.max_positions:
            raise ValueError(f"S ({self.S}) excede max_positions ({self.max_positions})")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout fuera de rango: {self.dropout}")

    @property
    def K(self) -> int:
        return self.H // self.A

    @property
    def forma(self) -> Tuple[int, int, int, int, int]:
        return (self.E, self.H, self.I, self.L, self.A)

    def con(self, **cambios) -> "ModelConfig":
        return replace(self, **cambios)

    def etiqueta(self) -> str:
        return "E{}_H{}_I{}_L{}_A{}".format(*self.forma)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, datos: dict) -> "ModelConfig":
        campos = {k: datos[k] for k in cls.__dataclass_fields__ if k in datos}
        return cls(**campos)

    def guardar(self, ruta: Union[str, Path]) -> None:
        with open(ruta, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def cargar(cls, ruta: Union[str, Path]) -> "ModelConfig":
        with open(ruta, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


# Configuración de referencia del barrido (ancla)
ANCLA = ModelConfig(E=256, H=256, I=1024, L=8, A=8)
