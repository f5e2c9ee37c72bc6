from dataclasses import dataclass

from costos.flops import count_params
from entrenamiento.registro import RunLog


@dataclass(frozen=True)
class ComparacionCorridas:
    """Diferencias entre una corrida de referencia y una alternativa."""
    referencia: str
    alternativa: str
    params: tuple
    flops: tuple
    perplexity: tuple

    @staticmethod
    def _deltas(a: float, b: float) -> dict:
        delta = b - a
        return {"reference": a, "alternative": b, "delta": delta, "pct": 100.0 * delta / a if a else float("nan")}

    def to_dict(self) -> dict:
        return {
            "reference": self.referencia,
            "alternative": self.alternativa,
            "params": self._deltas(*self.params),
            "flops": self._deltas(*self.flops),
            "perplexity": self._deltas(*self.perplexity),
        }


def comparar_configuraciones(referencia: RunLog, alternativa: RunLog) -> ComparacionCorridas:
    """
    Compara parámetros, FLOPs y perplejidad final de dos corridas; por
    ejemplo, un modelo con vocabulario sin restringir frente a su par
    entrenado sobre el corpus filtrado.
    """
    if not referencia.records or not alternativa.records:
        raise ValueError("Ambas corridas necesitan al menos un registro")
    final_a = referencia.records[-1]
    final_b = alternativa.records[-1]
    return ComparacionCorridas(
        referencia=referencia.run_id,
        alternativa=alternativa.run_id,
        params=(float(count_params(referencia.config)), float(count_params(alternativa.config))),
        flops=(float(final_a.flops), float(final_b.flops)),
        perplexity=(final_a.eval_ppl, final_b.eval_ppl),
    )
