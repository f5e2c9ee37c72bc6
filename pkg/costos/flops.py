"""
Conteo de parámetros y de operaciones de punto flotante por secuencia.
"""
import json
from dataclasses import dataclass, asdict
from typing import Dict

from modelo.configuracion import MAX_POSICIONES, ModelConfig

MODOS = ("s_corrected", "verbatim")


@dataclass(frozen=True)
class CostBreakdown:
    """
    Desglose de FLOPs para una secuencia. `c_att` y `c_int` son por capa.
    """
    c_emb: int
    c_att: int
    c_int: int
    c_lmh: int
    c_forward: int
    c_backward: int
    c_seq: int
    mode: str

    def __post_init__(self):
        if self.mode not in MODOS:
            raise ValueError(f"Modo de FLOPs desconocido: {self.mode}")
        if self.c_backward != 2 * self.c_forward or self.c_seq != self.c_forward + self.c_backward:
            raise ValueError("Desglose de FLOPs inconsistente")

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def count_params(config: ModelConfig, posiciones: int = MAX_POSICIONES) -> int:
    """
    Número total de parámetros, incluidos los embeddings.

    Args:
        config: Forma del modelo
        posiciones: Embeddings de posición contabilizados

    Returns:
        Conteo entero de parámetros
    """
    E, H, I, L, V = config.E, config.H, config.I, config.L, config.V

    # Embeddings de token y posición más su LayerNorm
    embeddings = V * E + posiciones * E + 2 * E
    # Proyección a tamaño oculto más LayerNorm
    proyeccion = E * H + H + 2 * H
    atencion = 4 * (H * H + H)
    ffn = H * I + I + I * H + H
    capa = atencion + ffn + 2 * (2 * H)
    # Transformación de la cabeza MLM y decodificador no compartido
    cabeza = H * H + H + 2 * H + H * V + V

    return embeddings + proyeccion + L * capa + cabeza


def flops_per_sequence(config: ModelConfig, mode: str = "s_corrected") -> CostBreakdown:
    """
    FLOPs de una secuencia de longitud S (adelante más atrás).

    En modo "verbatim" el término FFN no se multiplica por S; en modo
    "s_corrected" sí.
    """
    if mode not in MODOS:
        raise ValueError(f"Modo de FLOPs desconocido: {mode}")
    S, V, E, H, I, L, A, K = config.S, config.V, config.E, config.H, config.I, config.L, config.A, config.K

    c_emb = 2 * S * (V * E + E * H)
    c_att = (
        2 * 3 * S * H * K * A   # proyecciones Q, K, V
        + 2 * S * S * K * A     # QK^T
        + 3 * S * S * A         # softmax
        + 2 * S * S * K * A     # probabilidades por V
        + 2 * S * H * K * A     # proyección de salida
    )
    c_int = 2 * (H * I + I * H)
    if mode == "s_corrected":
        c_int *= S
    c_lmh = 2 * S * H * V

    c_forward = c_emb + c_lmh + L * (c_att + c_int)
    c_backward = 2 * c_forward
    return CostBreakdown(
        c_emb=c_emb, c_att=c_att, c_int=c_int, c_lmh=c_lmh,
        c_forward=c_forward, c_backward=c_backward, c_seq=c_forward + c_backward,
        mode=mode
    )


def total_flops(c_seq: int, updates: int, batch: int) -> int:
    if c_seq < 0 or updates < 0 or batch < 0:
        raise ValueError("Los conteos de FLOPs no pueden ser negativos")
    return updates * batch * c_seq


def flops_entrenamiento(config: ModelConfig, pasos: int, batch: int, mode: str = "s_corrected") -> int:
    return total_flops(flops_per_sequence(config, mode).c_seq, pasos, batch)
