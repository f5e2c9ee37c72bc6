import logging
import multiprocessing as mp
from dataclasses import dataclass, asdict
from typing import List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

LAMBDA_INICIAL = 1e-3
LAMBDA_MAXIMO = 1e12
TOLERANCIA_PASO = 1e-10
MAX_ITERACIONES = 500
UMBRAL_QUIEBRE = 0.02


@dataclass(frozen=True)
class PowerFit:
    """
    Ajuste y = C·x^e.

    Args:
        C: Coeficiente
        e: Exponente
        r2: Coeficiente de determinación
        n: Número de puntos
        domain: (x mínimo, x máximo)
        converged: Si el ajuste alcanzó el criterio de paro
        iterations: Iteraciones realizadas
        space: "raw" (residuos en y) o "log" (residuos en ln y)
    """
    C: float
    e: float
    r2: float
    n: int
    domain: Tuple[float, float]
    converged: bool = True
    iterations: int = 0
    space: str = "raw"

    def predecir(self, x) -> np.ndarray:
        return self.C * np.power(np.asarray(x, dtype=np.float64), self.e)

    def to_dict(self) -> dict:
        datos = asdict(self)
        datos["domain"] = list(self.domain)
        return datos

    @classmethod
    def from_dict(cls, datos: dict) -> "PowerFit":
        campos = {k: datos[k] for k in cls.__dataclass_fields__ if k in datos}
        campos["domain"] = tuple(campos["domain"])
        return cls(**campos)


def _como_arreglos(points) -> Tuple[np.ndarray, np.ndarray]:
    puntos = np.asarray(points, dtype=np.float64)
    if puntos.ndim != 2 or puntos.shape[1] != 2:
        raise ValueError("Se esperaban puntos (x, y)")
    return puntos[:, 0], puntos[:, 1]


def _validar(x: np.ndarray, y: np.ndarray, minimo: int = 3) -> None:
    if x.size < minimo:
        raise ValueError(f"Se requieren al menos {minimo} puntos (hay {x.size})")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("Los datos deben ser estrictamente positivos")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("Los datos contienen valores no finitos")
    if np.unique(x).size < 2:
        raise ValueError("Se requieren al menos 2 valores distintos de x")


def _r2(y: np.ndarray, prediccion: np.ndarray) -> float:
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - prediccion) ** 2))
    if ss_tot == 0.0:
        # y constante: sólo la predicción exacta tiene R² definido
        if ss_res == 0.0:
            return 1.0
        raise ValueError("Varianza cero en y: R² no está definido")
    return 1.0 - ss_res / ss_tot


def r_squared(points, fit: PowerFit) -> float:
    """1 - SS_res/SS_tot con SS_tot respecto a la media de y."""
    x, y = _como_arreglos(points)
    if x.size < 2:
        raise ValueError("Se requieren al menos 2 puntos")
    return _r2(y, fit.predecir(x))


def _ols_log(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    """Mínimos cuadrados en (ln x, ln y). Devuelve (C, e)."""
    e, ln_c = np.polyfit(np.log(x), np.log(y), 1)
    return float(np.exp(ln_c)), float(e)


def _ajuste_constante(x: np.ndarray, y: np.ndarray, espacio: str) -> PowerFit:
    """y constante: C = y, e = 0, ajuste exacto."""
    return PowerFit(float(y[0]), 0.0, 1.0, int(x.size), (float(x.min()), float(x.max())), True, 0, espacio)


def fit_power_law_log(points) -> PowerFit:
    """Ajuste lineal en espacio logarítmico, para comparación."""
    x, y = _como_arreglos(points)
    _validar(x, y)
    if np.all(y == y[0]):
        return _ajuste_constante(x, y, "log")
    C, e = _ols_log(x, y)
    r2 = _r2(np.log(y), np.log(C) + e * np.log(x))
    return PowerFit(C, e, r2, int(x.size), (float(x.min()), float(x.max())), True, 0, "log")


def _chi2(x, y, p) -> float:
    return float(np.sum((y - p[0] * np.power(x, p[1])) ** 2))


def fit_power_law(points, max_iter: int = MAX_ITERACIONES) -> PowerFit:
    """
    Ajusta y = C·x^e minimizando Σ(y - C·x^e)² con Levenberg-Marquardt.

    Inicializa con mínimos cuadrados en espacio log. El amortiguamiento
    empieza en 1e-3, se multiplica por 10 al rechazar un paso y se divide
    entre 10 al aceptarlo. Se detiene cuando el paso relativo es menor que
    1e-10 o tras `max_iter` iteraciones; en ese caso devuelve el mejor
    punto encontrado con converged=False.
    Si y es constante devuelve e = 0 y R² = 1.

    Args:
        points: Pares (x, y) con x, y > 0
        max_iter: Iteraciones máximas

    Returns:
        PowerFit en espacio crudo
    """
    x, y = _como_arreglos(points)
    _validar(x, y)
    if np.all(y == y[0]):
        return _ajuste_constante(x, y, "raw")

    p = np.array(_ols_log(x, y))
    chi2 = _chi2(x, y, p)
    flambda = LAMBDA_INICIAL
    convergio = False
    iteracion = 0
    identidad = np.identity(2)
    ln_x = np.log(x)

    while iteracion < max_iter and not convergio:
        iteracion += 1
        potencia = np.power(x, p[1])
        jacobiano = np.column_stack([potencia, p[0] * potencia * ln_x])
        residuo = y - p[0] * potencia
        alpha0 = jacobiano.T @ jacobiano
        beta = jacobiano.T @ residuo

        while True:
            alpha = alpha0 * (1.0 + flambda * identidad)
            try:
                delta = np.linalg.solve(alpha, beta)
            except np.linalg.LinAlgError:
                delta = np.full(2, np.nan)
            nuevo = p + delta
            chi2_nuevo = _chi2(x, y, nuevo) if np.all(np.isfinite(nuevo)) else np.inf
            if chi2_nuevo <= chi2:
                flambda /= 10.0
                break
            flambda *= 10.0
            if flambda > LAMBDA_MAXIMO:
                # Ningún paso reduce el error: mínimo a la precisión disponible
                delta = np.zeros(2)
                nuevo = p
                chi2_nuevo = chi2
                break

        paso_relativo = float(np.max(np.abs(delta) / (np.abs(p) + 1e-300)))
        p, chi2 = nuevo, chi2_nuevo
        if paso_relativo < TOLERANCIA_PASO:
            convergio = True

    if not convergio:
        logger.warning("Levenberg-Marquardt no convergió en %d iteraciones; se devuelve el mejor punto", max_iter)

    C, e = float(p[0]), float(p[1])
    r2 = _r2(y, C * np.power(x, e))
    return PowerFit(C, e, r2, int(x.size), (float(x.min()), float(x.max())), convergio, iteracion, "raw")


@dataclass(frozen=True)
class ResultadoQuiebre:
    """Mejor umbral de quiebre y los ajustes a cada lado."""
    threshold: float
    fit_low: PowerFit
    fit_high: PowerFit
    r2_combinado: float
    umbral_delta: float = UMBRAL_QUIEBRE

    @property
    def delta_e(self) -> float:
        return self.fit_high.e - self.fit_low.e

    @property
    def has_break(self) -> bool:
        return abs(self.delta_e) >= self.umbral_delta

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "has_break": self.has_break,
            "delta_e": self.delta_e,
            "r2_combined": self.r2_combinado,
            "fit_low": self.fit_low.to_dict(),
            "fit_high": self.fit_high.to_dict(),
        }


def candidatos_por_defecto(x: np.ndarray) -> np.ndarray:
    """Puntos medios geométricos entre valores consecutivos de x."""
    valores = np.unique(x)
    return np.sqrt(valores[:-1] * valores[1:])


def _evaluar_umbral(argumentos) -> Optional[Tuple[float, float, PowerFit, PowerFit]]:
    x, y, umbral, minimo = argumentos
    bajo = x < umbral
    if bajo.sum() < minimo or (~bajo).sum() < minimo:
        return None
    # Un lado con un solo valor de x no admite ajuste
    if np.unique(x[bajo]).size < 2 or np.unique(x[~bajo]).size < 2:
        return None
    ajuste_bajo = fit_power_law(np.column_stack([x[bajo], y[bajo]]))
    ajuste_alto = fit_power_law(np.column_stack([x[~bajo], y[~bajo]]))
    sse = (np.sum((y[bajo] - ajuste_bajo.predecir(x[bajo])) ** 2)
           + np.sum((y[~bajo] - ajuste_alto.predecir(x[~bajo])) ** 2))
    ss_tot = np.sum((y - y.mean()) ** 2)
    return float(umbral), 1.0 - float(sse / ss_tot), ajuste_bajo, ajuste_alto


def detect_break(
        points,
        candidate_thresholds: Optional[Sequence[float]] = None,
        umbral_delta: float = UMBRAL_QUIEBRE,
        min_puntos: int = 3,
        procesos: int = 1
) -> ResultadoQuiebre:
    """
    Busca el umbral que mejor separa dos leyes de potencia.

    Para cada candidato t se ajustan por separado los puntos con x < t y con
    x >= t; gana el candidato con mayor R² combinado
    1 - (SSE_bajo + SSE_alto)/SS_tot. Se descartan los candidatos que dejan
    un lado con un solo valor de x; un lado con y constante se ajusta con e = 0.

    Args:
        points: Pares (x, y)
        candidate_thresholds: Umbrales a evaluar (por defecto puntos medios entre x)
        umbral_delta: |Δe| mínimo para reportar un quiebre
        min_puntos: Puntos mínimos a cada lado
        procesos: Procesos para evaluar candidatos en paralelo

    Returns:
        ResultadoQuiebre
    """
    x, y = _como_arreglos(points)
    _validar(x, y, minimo=2 * min_puntos)
    if np.all(y == y[0]):
        raise ValueError("Varianza cero en y: R² no está definido")
    orden = np.argsort(x)
    x, y = x[orden], y[orden]

    candidatos = candidatos_por_defecto(x) if candidate_thresholds is None else np.asarray(candidate_thresholds, dtype=np.float64)
    tareas = [(x, y, float(t), min_puntos) for t in candidatos]
    if procesos > 1 and len(tareas) > 1:
        with mp.Pool(procesos) as pool:
            resultados: List = pool.map(_evaluar_umbral, tareas)
    else:
        resultados = [_evaluar_umbral(t) for t in tareas]

    validos = [r for r in resultados if r is not None]
    if not validos:
        raise ValueError(f"Ningún candidato deja al menos {min_puntos} puntos a cada lado")

    # Empate: el umbral menor
    umbral, r2, ajuste_bajo, ajuste_alto = max(validos, key=lambda r: (r[1], -r[0]))
    resultado = ResultadoQuiebre(umbral, ajuste_bajo, ajuste_alto, r2, umbral_delta)
    logger.info(
        "Quiebre en %.3e: e_bajo=%.4f, e_alto=%.4f, R² combinado %.4f (%s)",
        umbral, ajuste_bajo.e, ajuste_alto.e, r2, "hay quiebre" if resultado.has_break else "sin quiebre"
    )
    return resultado
