import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from costos.flops import count_params
from entrenamiento.registro import RunLog

logger = logging.getLogger(__name__)

N_BINS = 32
COLUMNAS_FRONTERA = ["bin_lo", "bin_hi", "flops", "loss", "run_id", "step", "params", "tokens_seen"]


@dataclass(frozen=True)
class FrontierPoint:
    """
    Registro de menor pérdida dentro de un bin de FLOPs.

    Args:
        flops_bin: (lo, hi) del bin
        flops: FLOPs del registro óptimo
        loss: Pérdida mínima del bin
        source: (run_id, step)
        covariates: (parámetros del modelo, tokens vistos)
    """
    flops_bin: Tuple[float, float]
    flops: float
    loss: float
    source: Tuple[str, int]
    covariates: Tuple[int, int]

    def __post_init__(self):
        if not self.flops_bin[0] < self.flops_bin[1]:
            raise ValueError("Bin de FLOPs inválido: se requiere lo < hi")


def tabla_registros(runs: Sequence[RunLog], columna: str = "eval_loss") -> pd.DataFrame:
    """Todos los registros de todas las corridas en una sola tabla."""
    filas = []
    for run in runs:
        parametros = count_params(run.config)
        for r in run.records:
            filas.append({
                "run_id": run.run_id, "step": r.step, "flops": float(r.flops),
                "loss": getattr(r, columna), "params": parametros, "tokens_seen": r.tokens_seen,
            })
    return pd.DataFrame(filas, columns=["run_id", "step", "flops", "loss", "params", "tokens_seen"])


def bordes_log(fmin: float, fmax: float, n_bins: int) -> np.ndarray:
    """Bordes logarítmicos; si fmin == fmax se usa un único bin degenerado."""
    if fmin == fmax:
        return np.array([fmin, np.nextafter(fmin, np.inf)])
    return np.geomspace(fmin, fmax, n_bins + 1)


def asignar_bins(flops: np.ndarray, bordes: np.ndarray) -> np.ndarray:
    """Índice de bin [lo, hi); el máximo cae en el último bin."""
    indices = np.searchsorted(bordes, flops, side="right") - 1
    return np.clip(indices, 0, len(bordes) - 2)


def compute_optimal_frontier(
        runs: Sequence[RunLog],
        n_bins: int = N_BINS,
        columna: str = "eval_loss"
) -> List[FrontierPoint]:
    """
    Frontera compute-óptima: por cada bin logarítmico de FLOPs, el registro
    con menor pérdida (empate: menos FLOPs). Los bins vacíos se omiten.

    Args:
        runs: Corridas con registros
        n_bins: Número de bins
        columna: Pérdida a minimizar ("eval_loss" o "train_loss")

    Returns:
        Puntos de la frontera ordenados por FLOPs
    """
    if n_bins < 1:
        raise ValueError("n_bins debe ser positivo")
    tabla = tabla_registros(runs, columna)
    tabla = tabla[tabla["flops"] > 0]
    if tabla.empty:
        raise ValueError("No hay registros con FLOPs positivos para construir la frontera")

    flops = tabla["flops"].to_numpy()
    bordes = bordes_log(float(flops.min()), float(flops.max()), n_bins)
    tabla = tabla.assign(bin=asignar_bins(flops, bordes))

    frontera = []
    for indice, grupo in tabla.groupby("bin", sort=True):
        mejor = grupo.sort_values(["loss", "flops"], kind="mergesort").iloc[0]
        frontera.append(FrontierPoint(
            flops_bin=(float(bordes[indice]), float(bordes[indice + 1])),
            flops=float(mejor["flops"]),
            loss=float(mejor["loss"]),
            source=(str(mejor["run_id"]), int(mejor["step"])),
            covariates=(int(mejor["params"]), int(mejor["tokens_seen"])),
        ))

    logger.info("Frontera: %d puntos en %d bins", len(frontera), n_bins)
    return frontera


def frontera_a_dataframe(frontera: Sequence[FrontierPoint]) -> pd.DataFrame:
    return pd.DataFrame([
        {"bin_lo": p.flops_bin[0], "bin_hi": p.flops_bin[1], "flops": p.flops, "loss": p.loss,
         "run_id": p.source[0], "step": p.source[1], "params": p.covariates[0], "tokens_seen": p.covariates[1]}
        for p in frontera
    ], columns=COLUMNAS_FRONTERA)


def guardar_frontera(frontera: Sequence[FrontierPoint], ruta: Union[str, Path]) -> None:
    frontera_a_dataframe(frontera).to_csv(ruta, index=False, float_format="%.17g")


def cargar_frontera(ruta: Union[str, Path]) -> List[FrontierPoint]:
    tabla = pd.read_csv(ruta, dtype={"run_id": str}, float_precision="round_trip")
    faltantes = [c for c in COLUMNAS_FRONTERA if c not in tabla.columns]
    if faltantes:
        raise ValueError(f"{ruta}: faltan columnas {faltantes}")
    return [
        FrontierPoint((float(f.bin_lo), float(f.bin_hi)), float(f.flops), float(f.loss),
                      (str(f.run_id), int(f.step)), (int(f.params), int(f.tokens_seen)))
        for f in tabla.itertuples(index=False)
    ]


def puntos_frontera(frontera: Sequence[FrontierPoint], eje: str = "flops") -> np.ndarray:
    """
    Pares (x, pérdida) para ajustar leyes de potencia; `eje` es "flops",
    "params" o "tokens".
    """
    if eje == "flops":
        x = [p.flops for p in frontera]
    elif eje == "params":
        x = [p.covariates[0] for p in frontera]
    elif eje == "tokens":
        x = [p.covariates[1] for p in frontera]
    else:
        raise ValueError(f"Eje desconocido: {eje}")
    return np.column_stack([np.asarray(x, dtype=np.float64), [p.loss for p in frontera]])


def marcar_optimos(runs: Sequence[RunLog], frontera: Sequence[FrontierPoint], columna: str = "eval_loss") -> pd.DataFrame:
    """Tabla de todos los registros con una columna `optimal` para los de la frontera."""
    tabla = tabla_registros(runs, columna)
    fuentes = {p.source for p in frontera}
    optimos = [(r, int(s)) in fuentes for r, s in zip(tabla["run_id"], tabla["step"])]
    return tabla.assign(optimal=optimos)
