import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import pandas as pd

from entrenamiento.registro import RunLog
from modelo.configuracion import EJES, ModelConfig

logger = logging.getLogger(__name__)

UNIDAD_FLOPS = 1e15


@dataclass(frozen=True)
class IcerEntry:
    """
    Razón costo-efectividad incremental entre dos peldaños consecutivos.

    `icer` está en perplejidad por FLOP; `icer_per_1e15` en perplejidad por
    10^15 FLOPs.
    """
    from_config: ModelConfig
    to_config: ModelConfig
    delta_perplexity: float
    delta_flops: float
    icer: float
    icer_per_1e15: float

    def to_dict(self) -> dict:
        return {
            "from": self.from_config.etiqueta(),
            "to": self.to_config.etiqueta(),
            "delta_perplexity": self.delta_perplexity,
            "delta_flops": self.delta_flops,
            "icer": self.icer,
            "icer_per_1e15": self.icer_per_1e15,
        }


def ejes_diferentes(a: ModelConfig, b: ModelConfig) -> List[str]:
    return [eje for eje in EJES if getattr(a, eje) != getattr(b, eje)]


def icer(ladder: Sequence[Tuple[ModelConfig, float, float]], verificar_ejes: bool = True) -> List[IcerEntry]:
    """
    ICER = Δperplejidad / ΔFLOPs entre cada peldaño y el anterior (más barato).

    Args:
        ladder: (config, perplejidad, flops) ordenados por FLOPs crecientes
        verificar_ejes: Exige que peldaños consecutivos difieran en un solo eje

    Returns:
        Una entrada por peldaño a partir del segundo
    """
    entradas = []
    for (cfg_a, ppl_a, flops_a), (cfg_b, ppl_b, flops_b) in zip(ladder, ladder[1:]):
        delta_flops = float(flops_b) - float(flops_a)
        if delta_flops <= 0:
            raise ValueError("La escalera no tiene costo estrictamente creciente")
        if verificar_ejes and len(ejes_diferentes(cfg_a, cfg_b)) != 1:
            raise ValueError(
                f"{cfg_a.etiqueta()} y {cfg_b.etiqueta()} deben diferir en exactamente un hiperparámetro"
            )
        delta_ppl = float(ppl_a) - float(ppl_b)
        razon = delta_ppl / delta_flops
        entradas.append(IcerEntry(cfg_a, cfg_b, delta_ppl, delta_flops, razon, razon * UNIDAD_FLOPS))
    return entradas


def escalera_desde_runs(runs: Sequence[RunLog], eje: str) -> List[Tuple[ModelConfig, float, float]]:
    """
    Escalera de un eje a partir del último registro de cada corrida, ordenada
    por FLOPs. Sólo entran las corridas que coinciden con la primera en todos
    los demás ejes.
    """
    if eje not in EJES:
        raise ValueError(f"Eje desconocido: {eje}")
    corridas = [r for r in runs if r.records]
    if not corridas:
        return []
    base = corridas[0].config
    peldanos = []
    for run in corridas:
        if any(e != eje for e in ejes_diferentes(base, run.config)):
            continue
        final = run.records[-1]
        peldanos.append((run.config, final.eval_ppl, float(final.flops)))
    peldanos.sort(key=lambda p: p[2])
    return peldanos


def tabla_icer(entradas: Sequence[IcerEntry]) -> pd.DataFrame:
    return pd.DataFrame([e.to_dict() for e in entradas],
                        columns=["from", "to", "delta_perplexity", "delta_flops", "icer", "icer_per_1e15"])


def guardar_icer(entradas: Sequence[IcerEntry], ruta: Union[str, Path]) -> None:
    tabla_icer(entradas).to_csv(ruta, index=False)
