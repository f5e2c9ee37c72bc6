import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from modelo.configuracion import ANCLA, EJES, ModelConfig

logger = logging.getLogger(__name__)

# Variantes por eje respecto al ancla (conjunto unidireccional)
VARIANTES = {
    "E": [32, 64, 128],
    "H": [32, 64, 128],
    "I": [128, 256, 512],
    "L": [1, 2, 4],
    "A": [1, 2, 4],
}

# Retícula de potencias de dos acotada por el ancla
RETICULA = {
    "E": [32, 64, 128, 256],
    "H": [32, 64, 128, 256],
    "I": [64, 128, 256, 512, 1024],
    "L": [1, 2, 4, 8],
    "A": [1, 2, 4, 8],
}

MODOS = ("unidirectional", "random_sample")


@dataclass(frozen=True)
class GridSpec:
    """
    Especificación de un barrido de configuraciones.

    Args:
        anchor: Configuración ancla
        axes: Valores alternativos por eje (modo unidireccional)
        mode: "unidirectional" o "random_sample"
        sample_count: Configuraciones a muestrear en modo aleatorio
        seed: Semilla del muestreo
        lattice: Valores posibles por eje (modo aleatorio)
    """
    anchor: ModelConfig = ANCLA
    axes: Dict[str, List[int]] = field(default_factory=lambda: {k: list(v) for k, v in VARIANTES.items()})
    mode: str = "unidirectional"
    sample_count: int = 16
    seed: int = 0
    lattice: Dict[str, List[int]] = field(default_factory=lambda: {k: list(v) for k, v in RETICULA.items()})

    def __post_init__(self):
        if self.mode not in MODOS:
            raise ValueError(f"Modo de rejilla desconocido: {self.mode}")
        if self.sample_count < 0:
            raise ValueError("sample_count no puede ser negativo")
        for nombre in list(self.axes) + list(self.lattice):
            if nombre not in EJES:
                raise ValueError(f"Eje desconocido: {nombre}")

    def to_dict(self) -> dict:
        return {
            "anchor": self.anchor.to_dict(), "axes": self.axes, "mode": self.mode,
            "sample_count": self.sample_count, "seed": self.seed, "lattice": self.lattice,
        }

    @classmethod
    def from_dict(cls, datos: dict) -> "GridSpec":
        campos = dict(datos)
        if "anchor" in campos:
            campos["anchor"] = ModelConfig.from_dict(campos["anchor"])
        return cls(**{k: campos[k] for k in cls.__dataclass_fields__ if k in campos})

    @classmethod
    def cargar(cls, ruta: Union[str, Path]) -> "GridSpec":
        with open(ruta, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _valida(forma: Tuple[int, ...]) -> bool:
    H, A = forma[1], forma[4]
    return H % A == 0


def _unidireccional(spec: GridSpec) -> List[ModelConfig]:
    configs = [spec.anchor]
    vistas = {spec.anchor.forma}
    for eje in EJES:
        for valor in spec.axes.get(eje, []):
            candidata = spec.anchor.forma[:EJES.index(eje)] + (valor,) + spec.anchor.forma[EJES.index(eje) + 1:]
            if candidata in vistas:
                continue
            if not _valida(candidata):
                logger.warning("Se omite %s=%d: H no es divisible entre A", eje, valor)
                continue
            vistas.add(candidata)
            configs.append(spec.anchor.con(**{eje: valor}))
    return configs


def generate_grid(spec: GridSpec) -> List[ModelConfig]:
    """
    Genera las configuraciones de un barrido.

    En modo unidireccional devuelve el ancla seguida de una variante por
    cada valor alternativo de cada eje. En modo aleatorio muestrea con
    semilla de la retícula, excluyendo las configuraciones unidireccionales.

    Args:
        spec: Especificación del barrido

    Returns:
        Lista de ModelConfig sin duplicados
    """
    if spec.mode == "unidirectional":
        return _unidireccional(spec)

    if spec.sample_count == 0:
        return []
    excluidas = {c.forma for c in _unidireccional(spec)}
    valores = [sorted(spec.lattice.get(eje, [getattr(spec.anchor, eje)])) for eje in EJES]
    disponibles = [f for f in itertools.product(*valores) if _valida(f) and f not in excluidas]
    if spec.sample_count > len(disponibles):
        raise ValueError(
            f"sample_count ({spec.sample_count}) excede las configuraciones disponibles ({len(disponibles)})"
        )

    rng = np.random.default_rng(spec.seed)
    elegidas = rng.choice(len(disponibles), size=spec.sample_count, replace=False)
    return [spec.anchor.con(**dict(zip(EJES, disponibles[i]))) for i in elegidas]
