import logging
import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np
from scipy.stats import rankdata, t as distribucion_t

logger = logging.getLogger(__name__)

N_MAXIMO_EXACTO = 12


@dataclass(frozen=True)
class ResultadoSpearman:
    rho: float
    p_value: float
    n: int
    metodo: str

    def to_dict(self) -> dict:
        return asdict(self)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    return float(np.sum(a * b) / math.sqrt(np.sum(a * a) * np.sum(b * b)))


def _p_exacto(rangos_x: np.ndarray, rangos_y: np.ndarray) -> float:
    """
    Valor p bilateral por permutación exacta de los rangos de y.

    Con rangos escalados a enteros (a = 2·rx, b = 2·ry) el estadístico
    S = Σ a_i·b_π(i) determina rho, y E[S] = n(n+1)². Se cuenta la
    distribución de S sobre las n! permutaciones con programación dinámica
    sobre subconjuntos, capa por capa según el número de elementos asignados.
    """
    n = rangos_x.size
    a = np.rint(2 * rangos_x).astype(np.int64)
    b = np.rint(2 * rangos_y).astype(np.int64)
    s_max = int(np.sum(np.sort(a) * np.sort(b)))

    capa = {0: np.zeros(s_max + 1, dtype=np.int64)}
    capa[0][0] = 1
    for k in range(n):
        siguiente = {}
        for mascara, conteos in capa.items():
            for j in range(n):
                if mascara & (1 << j):
                    continue
                nueva = mascara | (1 << j)
                desplazamiento = int(a[k] * b[j])
                destino = siguiente.get(nueva)
                if destino is None:
                    destino = siguiente[nueva] = np.zeros(s_max + 1, dtype=np.int64)
                destino[desplazamiento:] += conteos[:s_max + 1 - desplazamiento]
        capa = siguiente

    distribucion = capa[(1 << n) - 1]
    esperado = n * (n + 1) ** 2
    observado = abs(int(np.sum(a * b)) - esperado)
    sumas = np.arange(s_max + 1)
    extremos = np.abs(sumas - esperado) >= observado
    return float(distribucion[extremos].sum() / distribucion.sum())


def spearman(x: Sequence[float], y: Sequence[float]) -> ResultadoSpearman:
    """
    Correlación de Spearman con rangos promedio para empates.

    El valor p es bilateral: permutación exacta para n <= 12 y aproximación
    t de Student con n-2 grados de libertad para n > 12.

    Args:
        x: Primera serie
        y: Segunda serie

    Returns:
        ResultadoSpearman con rho y valor p
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("Las series deben ser vectores de la misma longitud")
    n = x.size
    if n < 3:
        raise ValueError("Se requieren al menos 3 pares")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValueError("Serie constante: la correlación no está definida")

    rangos_x = rankdata(x, method="average")
    rangos_y = rankdata(y, method="average")
    rho = _pearson(rangos_x, rangos_y)

    if n <= N_MAXIMO_EXACTO:
        p = _p_exacto(rangos_x, rangos_y)
        metodo = "exacto"
    else:
        if abs(rho) >= 1.0:
            p = 0.0
        else:
            estadistico = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
            p = float(2.0 * distribucion_t.sf(abs(estadistico), n - 2))
        metodo = "t"

    return ResultadoSpearman(rho, min(1.0, p), int(n), metodo)
