import json

import numpy as np
import pytest

from analisis.frontera import FrontierPoint, guardar_frontera
from conftest import PALABRAS
from corpus.filtrado import TextSpan, escribir_spans_jsonl
from main import run_pipeline
from modelo.configuracion import ANCLA


def _salida_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_flops(tmp_path, capsys):
    ruta = tmp_path / "ancla.json"
    ANCLA.guardar(ruta)
    assert run_pipeline(["flops", "--config", str(ruta), "--steps", "35000"]) == 0
    datos = _salida_json(capsys)
    assert datos["c_seq"] == 12_765_364_224
    assert datos["total_flops"] == 12_765_364_224 * 35_000 * 256
    assert datos["mode"] == "s_corrected"


def test_fit_sin_ruido(tmp_path, capsys):
    x = np.geomspace(1e14, 1e17, 12)
    frontera = [
        FrontierPoint((float(v) * 0.9, float(v) * 1.1), float(v), float(20.0 * v ** -0.1), ("r", i), (1000, 10 * i))
        for i, v in enumerate(x, start=1)
    ]
    ruta = tmp_path / "frontier.csv"
    guardar_frontera(frontera, ruta)
    salida = tmp_path / "fit.json"
    assert run_pipeline(["fit", "--frontier", str(ruta), "--out", str(salida)]) == 0
    datos = _salida_json(capsys)
    assert datos["e"] == pytest.approx(-0.1, abs=1e-6)
    assert json.loads(salida.read_text()) == datos


def test_archivo_inexistente(tmp_path):
    assert run_pipeline(["fit", "--frontier", str(tmp_path / "no_existe.csv")]) == 1


def test_bandera_desconocida(capsys):
    assert run_pipeline(["flops", "--sin-sentido"]) == 2
    assert run_pipeline([]) == 2


def test_columna_inexistente(tmp_path):
    ruta = tmp_path / "tabla.csv"
    ruta.write_text("a,b\n1,2\n2,3\n3,5\n")
    assert run_pipeline(["correlate", "--table", str(ruta), "--x", "a", "--y", "c"]) == 1


def test_correlate(tmp_path, capsys):
    ruta = tmp_path / "tabla.csv"
    ruta.write_text("ratio,ppl\n1.1,9\n1.2,10\n1.3,12\n1.4,11\n1.5,14\n")
    assert run_pipeline(["correlate", "--table", str(ruta), "--x", "ratio", "--y", "ppl"]) == 0
    assert _salida_json(capsys)["rho"] == pytest.approx(0.9)


def test_grid(tmp_path, capsys):
    assert run_pipeline(["grid", "--out", str(tmp_path), "--vocab-size", "4000"]) == 0
    nombres = _salida_json(capsys)["configs"]
    assert len(nombres) == 16
    listado = json.loads((tmp_path / "grid.json").read_text())
    assert listado["configs"] == nombres
    assert json.loads((tmp_path / nombres[0]).read_text())["V"] == 4000


def test_preentrenar_y_reportar(tmp_path, capsys, tokenizador_chico, config_micro):
    rng = np.random.default_rng(0)
    spans = [TextSpan.desde_texto(" ".join(rng.choice(PALABRAS, size=10))) for _ in range(40)]
    escribir_spans_jsonl(spans[:30], tmp_path / "train.jsonl")
    escribir_spans_jsonl(spans[30:], tmp_path / "dev.jsonl")
    tokenizador_chico.guardar(tmp_path / "bpe.txt")
    config_micro.guardar(tmp_path / "micro.json")

    corridas = tmp_path / "runs"
    assert run_pipeline([
        "-q", "pretrain", "--config", str(tmp_path / "micro.json"), "--tokenizer", str(tmp_path / "bpe.txt"),
        "--train", str(tmp_path / "train.jsonl"), "--eval", str(tmp_path / "dev.jsonl"),
        "--steps", "10", "--batch-size", "2", "--log-every", "2", "--out", str(corridas),
    ]) == 0
    (runlog,) = _salida_json(capsys)["runlogs"]
    run_id = f"{config_micro.etiqueta()}_s0"
    assert (corridas / run_id / "runlog.csv").exists()
    assert (corridas / run_id / "step_10.ckpt").exists()
    assert (corridas / run_id / "loss_curve.svg").exists()

    reporte = tmp_path / "reporte"
    assert run_pipeline(["-q", "report", "--runs", str(corridas), "--bins", "4", "--out", str(reporte)]) == 0
    datos = _salida_json(capsys)
    assert datos["frontier_points"] >= 1
    for nombre in ("records.csv", "frontier.csv", "loss_vs_flops.svg", "loss_vs_tokens.svg", "loss_vs_params.svg"):
        assert (reporte / nombre).exists()
    assert "flops" in datos["fits"]


@pytest.mark.slow
def test_flujo_completo(tmp_path, capsys, config_micro):
    rng = np.random.default_rng(3)
    with open(tmp_path / "docs.jsonl", "w", encoding="utf-8") as f:
        for i in range(30):
            f.write(json.dumps({"id": f"d{i}", "text": " ".join(rng.choice(PALABRAS, size=200))}) + "\n")
    (tmp_path / "vocab.txt").write_text("\n".join(PALABRAS) + "\n", encoding="utf-8")

    assert run_pipeline([
        "-q", "filter", "--input", str(tmp_path / "docs.jsonl"), "--vocab", str(tmp_path / "vocab.txt"),
        "--out", str(tmp_path / "spans.jsonl"), "--jobs", "1",
    ]) == 0
    capsys.readouterr()
    assert run_pipeline([
        "-q", "split", "--spans", str(tmp_path / "spans.jsonl"), "--dev-size", "20", "--test-size", "10",
        "--out", str(tmp_path / "particion"),
    ]) == 0
    capsys.readouterr()

    assert run_pipeline([
        "-q", "train-tokenizer", "--spans", str(tmp_path / "particion" / "train.jsonl"),
        "--vocab-sizes", "320", "--jobs", "1", "--out", str(tmp_path / "tok"),
    ]) == 0
    capsys.readouterr()
    tokenizador = json.loads((tmp_path / "tok" / "selected.json").read_text())["path"]

    config_micro.guardar(tmp_path / "micro.json")
    corridas = tmp_path / "runs"
    assert run_pipeline([
        "-q", "pretrain", "--config", str(tmp_path / "micro.json"), "--tokenizer", tokenizador,
        "--vocab-size-from-tokenizer", "--train", str(tmp_path / "particion" / "train.jsonl"),
        "--eval", str(tmp_path / "particion" / "dev.jsonl"), "--steps", "200", "--batch-size", "2",
        "--log-every", "20", "--out", str(corridas),
    ]) == 0
    capsys.readouterr()

    assert run_pipeline([
        "-q", "frontier", "--runs", str(corridas), "--bins", "8", "--out", str(tmp_path / "frontera.csv"),
    ]) == 0
    capsys.readouterr()
    assert run_pipeline(["-q", "fit", "--frontier", str(tmp_path / "frontera.csv")]) == 0
    ajuste = _salida_json(capsys)
    assert ajuste["n"] >= 3
    assert np.isfinite(ajuste["C"]) and np.isfinite(ajuste["e"])
