from pathlib import Path
from typing import List, Optional, Union

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from analisis.ley_potencia import PowerFit

# Ids estables en el SVG para que dos reportes iguales sean idénticos
plt.rcParams["svg.hashsalt"] = "downscale-lab"


def graficar_evolucion(
        perdida_historica: List[float],
        perdida_eval: Optional[pd.DataFrame] = None,
        titulo: str = "Evolución de la pérdida"
) -> Figure:
    """
    Grafica la pérdida de entrenamiento por paso y, opcionalmente, la de
    evaluación en los pasos registrados.

    Args:
        perdida_historica: Pérdida de cada paso de entrenamiento
        perdida_eval: Tabla con columnas step y eval_loss (opcional)
        titulo: Título del gráfico

    Returns:
        Figura de matplotlib
    """
    fig = plt.figure(figsize=(10, 6))

    pasos = range(1, len(perdida_historica) + 1)
    plt.plot(pasos, perdida_historica, 'b-', alpha=0.5, label='Pérdida de entrenamiento')
    if perdida_eval is not None and not perdida_eval.empty:
        plt.plot(perdida_eval["step"], perdida_eval["eval_loss"], 'r-o', label='Pérdida de evaluación')

    plt.xlabel('Paso')
    plt.ylabel('Pérdida MLM')
    plt.title(titulo)
    plt.legend()
    plt.grid(True)

    plt.tight_layout()

    return fig


def graficar_perdida_vs_flops(
        registros: pd.DataFrame,
        frontera: pd.DataFrame,
        ajuste: Optional[PowerFit] = None,
        titulo: str = "Pérdida vs FLOPs"
) -> Figure:
    """
    Todas las curvas de pérdida contra FLOPs acumulados, con los puntos de la
    frontera compute-óptima y el ajuste de ley de potencia si existe.

    Args:
        registros: Tabla con run_id, flops y loss
        frontera: Tabla de la frontera (flops, loss)
        ajuste: Ley de potencia ajustada sobre la frontera (opcional)
        titulo: Título del gráfico

    Returns:
        Figura de matplotlib
    """
    fig = plt.figure(figsize=(10, 6))

    for _, grupo in registros.groupby("run_id", sort=True):
        plt.plot(grupo["flops"], grupo["loss"], '-', color='gray', alpha=0.4, linewidth=1)

    plt.scatter(frontera["flops"], frontera["loss"], c='r', s=30, zorder=3, label='Frontera compute-óptima')

    if ajuste is not None:
        x = np.geomspace(ajuste.domain[0], ajuste.domain[1], 200)
        plt.plot(x, ajuste.predecir(x), 'b--',
                 label=f'Ajuste: {ajuste.C:.3g}·x^{ajuste.e:.4f} (R²={ajuste.r2:.3f})')

    plt.xscale('log')
    plt.yscale('log')
    plt.xlabel('FLOPs')
    plt.ylabel('Pérdida MLM')
    plt.title(titulo)
    plt.legend()
    plt.grid(True, which='both', alpha=0.3)

    plt.tight_layout()

    return fig


def graficar_perdida_vs_covariable(
        registros: pd.DataFrame,
        columna: str,
        etiqueta: str,
        titulo: str
) -> Figure:
    """
    Pérdida contra tokens vistos o tamaño del modelo, marcando en rojo los
    registros compute-óptimos (columna `optimal`).
    """
    fig = plt.figure(figsize=(10, 6))

    normales = registros[~registros["optimal"]]
    optimos = registros[registros["optimal"]]
    plt.scatter(normales[columna], normales["loss"], c='gray', s=10, alpha=0.5, label='No óptimo')
    plt.scatter(optimos[columna], optimos["loss"], c='r', s=30, label='Compute-óptimo')

    plt.xscale('log')
    plt.xlabel(etiqueta)
    plt.ylabel('Pérdida MLM')
    plt.title(titulo)
    plt.legend()
    plt.grid(True, alpha=0.3)

    plt.tight_layout()

    return fig


def guardar_svg(fig: Figure, ruta: Union[str, Path], procedencia: str) -> None:
    """Guarda la figura como SVG con la procedencia de los datos en sus metadatos."""
    fig.savefig(ruta, format="svg", metadata={"Description": procedencia, "Date": None})
    plt.close(fig)
