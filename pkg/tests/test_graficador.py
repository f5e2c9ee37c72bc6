import pandas as pd

from analisis.ley_potencia import PowerFit
from visualizacion.graficador import (
    graficar_evolucion, graficar_perdida_vs_covariable, graficar_perdida_vs_flops, guardar_svg
)


def _registros():
    return pd.DataFrame({
        "run_id": ["a", "a", "b", "b"],
        "step": [1, 2, 1, 2],
        "flops": [1e14, 2e14, 3e14, 6e14],
        "loss": [5.0, 4.0, 4.5, 3.5],
        "params": [1000, 1000, 4000, 4000],
        "tokens_seen": [10, 20, 10, 20],
        "optimal": [True, False, False, True],
    })


def test_evolucion(tmp_path):
    evaluacion = pd.DataFrame({"step": [2, 4], "eval_loss": [4.0, 3.0]})
    fig = graficar_evolucion([5.0, 4.5, 4.0, 3.5], evaluacion, titulo="micro")
    assert fig.axes[0].get_title() == "micro"
    assert len(fig.axes[0].lines) == 2
    ruta = tmp_path / "curva.svg"
    guardar_svg(fig, ruta, "datos: runlog.csv")
    assert "<svg" in ruta.read_text()


def test_perdida_vs_flops_con_ajuste():
    registros = _registros()
    frontera = registros[registros["optimal"]]
    fig = graficar_perdida_vs_flops(registros, frontera, PowerFit(100.0, -0.1, 0.99, 2, (1e14, 6e14)))
    eje = fig.axes[0]
    assert eje.get_xscale() == "log"
    # Una línea por corrida más la del ajuste
    assert len(eje.lines) == 3


def test_svg_reproducible(tmp_path):
    rutas = []
    for nombre in ("uno.svg", "dos.svg"):
        fig = graficar_perdida_vs_covariable(_registros(), "params", "Parámetros", "Pérdida vs tamaño")
        guardar_svg(fig, tmp_path / nombre, "datos: records.csv")
        rutas.append(tmp_path / nombre)
    assert rutas[0].read_bytes() == rutas[1].read_bytes()
    assert "records.csv" in rutas[0].read_text()
