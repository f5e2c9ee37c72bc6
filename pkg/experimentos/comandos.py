"""
Implementación de los subcomandos de la línea de comandos. Cada función
recibe los argumentos ya analizados y devuelve el código de salida.
"""
import argparse
import json
import logging
import multiprocessing as mp
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from analisis.comparacion import comparar_configuraciones
from analisis.correlacion import spearman
from analisis.frontera import (
    cargar_frontera, compute_optimal_frontier, guardar_frontera, marcar_optimos, puntos_frontera
)
from analisis.icer import escalera_desde_runs, guardar_icer, icer, tabla_icer
from analisis.ley_potencia import detect_break, fit_power_law, fit_power_law_log
from corpus.filtrado import (
    EstadisticasFiltrado, FilterConfig, escribir_spans_jsonl, filter_corpus, leer_documentos_jsonl,
    leer_spans_jsonl
)
from corpus.particion import split_dataset
from corpus.vocabulario import build_vocabulary, cargar_stoplist, cargar_vocabulario, guardar_vocabulario, marcar_galimatias
from costos.flops import count_params, flops_per_sequence, total_flops
from entrenamiento.ajuste_fino import finetune
from entrenamiento.optimizador import OptimizerHyper
from entrenamiento.preentrenamiento import preentrenar
from entrenamiento.registro import RunLog
from entrenamiento.tareas import TareaClasificacion, tarea_familia_palabras, tarea_solapamiento
from experimentos.entorno import hilos_disponibles
from experimentos.rejilla import GridSpec, generate_grid
from modelo.checkpoint import cargar_checkpoint
from modelo.configuracion import ModelConfig
from modelo.transformer import init_model
from tokenizador.bpe import TokenizerModel, entrenar_candidatos, longitud_media_codificada
from tokenizador.metricas import (
    CandidatoTokenizador, cargar_referencia_esms, esms, select_tokenizer, word_split_ratio
)
from visualizacion.graficador import (
    graficar_evolucion, graficar_perdida_vs_covariable, graficar_perdida_vs_flops, guardar_svg
)

logger = logging.getLogger(__name__)

NOMBRE_RUNLOG = "runlog.csv"


def _imprimir_json(datos) -> None:
    print(json.dumps(datos, indent=2, sort_keys=True, ensure_ascii=False))


def _escribir_json(datos, ruta: Optional[Path]) -> None:
    if ruta is None:
        return
    ruta.parent.mkdir(parents=True, exist_ok=True)
    with open(ruta, "w", encoding="utf-8") as f:
        json.dump(datos, f, indent=2, sort_keys=True, ensure_ascii=False)


def leer_runs(rutas: Sequence[Path]) -> List[RunLog]:
    """Lee RunLogs desde archivos CSV o directorios (busca runlog.csv recursivamente)."""
    archivos: List[Path] = []
    for ruta in rutas:
        if ruta.is_dir():
            archivos.extend(sorted(ruta.rglob(NOMBRE_RUNLOG)))
        elif ruta.exists():
            archivos.append(ruta)
        else:
            raise FileNotFoundError(f"No existe: {ruta}")
    if not archivos:
        raise ValueError("No se encontraron RunLogs")
    return [RunLog.cargar(a) for a in archivos]


# --- corpus -----------------------------------------------------------------

def comando_build_vocab(args: argparse.Namespace) -> int:
    stoplist = cargar_stoplist(args.stoplist) if args.stoplist else frozenset()

    def lineas():
        for ruta in args.transcripts:
            with open(ruta, "rb") as f:
                for linea in f:
                    yield linea.rstrip(b"\r\n")

    vocab = build_vocabulary(lineas(), stoplist, source_label=",".join(str(r) for r in args.transcripts))
    guardar_vocabulario(vocab, args.out)
    marcadas = marcar_galimatias(vocab.words)
    if marcadas:
        logger.warning("%d palabras marcadas como posibles galimatías", len(marcadas))
        if args.flagged:
            with open(args.flagged, "w", encoding="utf-8") as f:
                f.write("\n".join(marcadas) + "\n")
    _imprimir_json({"words": len(vocab), "rejected_lines": vocab.lineas_rechazadas, "flagged": len(marcadas)})
    return 0


def comando_filter(args: argparse.Namespace) -> int:
    vocab = cargar_vocabulario(args.vocab)
    cfg = FilterConfig(
        mode=args.mode, span_size=args.span_size, stride=args.stride, target_span_words=args.target_words
    )
    estadisticas = EstadisticasFiltrado(corpus_id=args.corpus_id)
    documentos = leer_documentos_jsonl(args.input, estadisticas)
    spans = filter_corpus(
        documentos, vocab, cfg, corpus_id=args.corpus_id, procesos=hilos_disponibles(args.jobs),
        estadisticas=estadisticas, mostrar_progreso=args.progress
    )
    escribir_spans_jsonl(spans, args.out)
    _escribir_json(estadisticas.to_dict(), args.stats)
    _imprimir_json(estadisticas.to_dict())
    return 0


def comando_split(args: argparse.Namespace) -> int:
    spans = leer_spans_jsonl(args.spans)
    train, dev, test = split_dataset(spans, args.dev_size, args.test_size, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for nombre, parte in (("train", train), ("dev", dev), ("test", test)):
        escribir_spans_jsonl(parte, args.out / f"{nombre}.jsonl")
    _imprimir_json({"train": len(train), "dev": len(dev), "test": len(test)})
    return 0


# --- tokenizador ------------------------------------------------------------

def _referencias(pares: Sequence[str]) -> dict:
    referencias = {}
    for par in pares:
        familia, _, valor = par.partition("=")
        if not valor:
            raise ValueError(f"Referencia inválida (se espera familia=valor): {par}")
        referencias[familia] = float(valor)
    return referencias


def comando_train_tokenizer(args: argparse.Namespace) -> int:
    spans = leer_spans_jsonl(args.spans)
    if args.max_spans is not None and len(spans) > args.max_spans:
        rng = np.random.default_rng(args.seed)
        spans = [spans[i] for i in np.sort(rng.choice(len(spans), args.max_spans, replace=False))]

    modelos = entrenar_candidatos(spans, args.vocab_sizes, seed=args.seed, procesos=hilos_disponibles(args.jobs))
    args.out.mkdir(parents=True, exist_ok=True)
    candidatos = []
    for modelo in modelos:
        modelo.guardar(args.out / f"bpe_{modelo.vocab_size}.txt")
        candidatos.append(CandidatoTokenizador(modelo, "bpe", modelo.vocab_size))

    if args.external:
        externos = pd.read_csv(args.external)
        for fila in externos.itertuples(index=False):
            candidatos.append(CandidatoTokenizador(
                None, str(fila.family), int(fila.vocab_size), float(fila.word_split_ratio), float(fila.esms)
            ))

    referencia_esms = cargar_referencia_esms(args.esms)
    elegido = select_tokenizer(candidatos, _referencias(args.reference), referencia_esms, sample=spans, seed=args.seed)

    tabla = pd.DataFrame([c.to_dict() for c in candidatos], columns=["family", "vocab_size", "word_split_ratio", "esms"])
    tabla.to_csv(args.out / "candidates.csv", index=False)
    seleccion = elegido.to_dict()
    if elegido.modelo is not None:
        seleccion["path"] = str(args.out / f"bpe_{elegido.vocab_size}.txt")
    _escribir_json(seleccion, args.out / "selected.json")
    _imprimir_json(seleccion)
    return 0


def comando_eval_tokenizer(args: argparse.Namespace) -> int:
    modelo = TokenizerModel.cargar(args.tokenizer)
    spans = leer_spans_jsonl(args.spans)
    referencia = cargar_referencia_esms(args.esms)
    if args.canonical_only:
        referencia = referencia.solo_canonicas()
    _imprimir_json({
        "family": modelo.family,
        "vocab_size": modelo.vocab_size,
        "word_split_ratio": word_split_ratio(modelo, spans, seed=args.seed),
        "esms": esms(modelo, referencia),
        "esms_entries": len(referencia),
        "mean_encoded_length": longitud_media_codificada(modelo, spans),
    })
    return 0


# --- rejilla y preentrenamiento --------------------------------------------

def comando_grid(args: argparse.Namespace) -> int:
    spec = GridSpec.cargar(args.spec) if args.spec else GridSpec()
    cambios = {}
    if args.mode:
        cambios["mode"] = args.mode
    if args.sample_count is not None:
        cambios["sample_count"] = args.sample_count
    if args.seed is not None:
        cambios["seed"] = args.seed
    if args.vocab_size is not None:
        cambios["anchor"] = spec.anchor.con(V=args.vocab_size)
    spec = replace(spec, **cambios)

    configs = generate_grid(spec)
    args.out.mkdir(parents=True, exist_ok=True)
    nombres = []
    for cfg in configs:
        nombre = f"{cfg.etiqueta()}.json"
        cfg.guardar(args.out / nombre)
        nombres.append(nombre)
    _escribir_json({"spec": spec.to_dict(), "configs": nombres}, args.out / "grid.json")
    _imprimir_json({"configs": nombres})
    return 0


def _hyper(args: argparse.Namespace) -> OptimizerHyper:
    base = OptimizerHyper.cargar(args.hyper).to_dict() if args.hyper else {}
    for clave, valor in (("total_steps", args.steps), ("batch_size", args.batch_size),
                         ("peak_lr", args.peak_lr), ("schedule", args.schedule)):
        if valor is not None:
            base[clave] = valor
    return OptimizerHyper.from_dict(base)


def _correr_preentrenamiento(tarea: dict) -> str:
    config = ModelConfig.from_dict(tarea["config"])
    hyper = OptimizerHyper.from_dict(tarea["hyper"])
    tokenizer = TokenizerModel.cargar(tarea["tokenizer"])
    train = leer_spans_jsonl(tarea["train"])
    evaluacion = leer_spans_jsonl(tarea["eval"])
    salida = Path(tarea["out"])
    run_id = tarea["run_id"]

    entrenador = preentrenar(
        config, train, tokenizer, hyper, evaluacion, log_every=tarea["log_every"], seed=tarea["seed"],
        run_id=run_id, directorio_checkpoints=salida, checkpoint_every=tarea["checkpoint_every"],
        mostrar_progreso=tarea["progress"]
    )
    ruta = entrenador.log.guardar(salida / run_id / NOMBRE_RUNLOG)
    figura = graficar_evolucion(entrenador.perdida_historica, entrenador.log.a_dataframe(), titulo=run_id)
    guardar_svg(figura, salida / run_id / "loss_curve.svg", f"datos: {ruta}")
    return str(ruta)


def comando_pretrain(args: argparse.Namespace) -> int:
    if args.config:
        configs = [ModelConfig.cargar(args.config)]
    else:
        listado = json.loads((args.grid / "grid.json").read_text(encoding="utf-8"))
        configs = [ModelConfig.cargar(args.grid / nombre) for nombre in listado["configs"]]

    tokenizer = TokenizerModel.cargar(args.tokenizer)
    hyper = _hyper(args)
    tareas = []
    for cfg in configs:
        if args.vocab_size_from_tokenizer:
            cfg = cfg.con(V=tokenizer.vocab_size)
        tareas.append({
            "config": cfg.to_dict(), "hyper": hyper.to_dict(), "tokenizer": str(args.tokenizer),
            "train": str(args.train), "eval": str(args.eval), "out": str(args.out),
            "run_id": f"{cfg.etiqueta()}_s{args.seed}", "log_every": args.log_every, "seed": args.seed,
            "checkpoint_every": args.checkpoint_every, "progress": args.progress,
        })

    procesos = min(hilos_disponibles(args.jobs), len(tareas))
    if procesos <= 1:
        rutas = [_correr_preentrenamiento(t) for t in tareas]
    else:
        with mp.Pool(procesos) as pool:
            rutas = list(pool.imap(_correr_preentrenamiento, tareas))
    _imprimir_json({"runlogs": rutas})
    return 0


def comando_finetune(args: argparse.Namespace) -> int:
    params, _, _ = cargar_checkpoint(args.checkpoint)
    tokenizer = TokenizerModel.cargar(args.tokenizer)

    if args.task:
        tarea = TareaClasificacion.cargar(args.task)
    else:
        if args.vocab is None:
            raise ValueError("Las tareas sintéticas requieren --vocab")
        palabras = sorted(cargar_vocabulario(args.vocab).words)
        if args.synthetic == "familia":
            familia = [p for p in palabras if p.startswith(args.family_stem)]
            tarea = tarea_familia_palabras(palabras, familia, n=args.examples, seed=args.seed)
        else:
            tarea = tarea_solapamiento(palabras, n=args.examples, seed=args.seed)

    resultado = finetune(params, tarea, tokenizer, epochs=args.epochs, batch=args.batch,
                         peak_lr=args.peak_lr, seeds=args.seeds)
    salida = {"pretrained": resultado.to_dict()}
    if args.random_init:
        aleatorio = init_model(params.config, seed=args.seeds[0])
        salida["random_init"] = finetune(aleatorio, tarea, tokenizer, epochs=args.epochs, batch=args.batch,
                                         peak_lr=args.peak_lr, seeds=args.seeds).to_dict()
    _escribir_json(salida, args.out)
    _imprimir_json(salida)
    return 0


# --- costo y análisis -------------------------------------------------------

def comando_flops(args: argparse.Namespace) -> int:
    config = ModelConfig.cargar(args.config)
    desglose = flops_per_sequence(config, args.mode)
    datos = desglose.to_dict()
    datos["params"] = count_params(config)
    if args.steps is not None:
        datos["updates"] = args.steps
        datos["batch"] = args.batch
        datos["total_flops"] = total_flops(desglose.c_seq, args.steps, args.batch)
    _imprimir_json(datos)
    return 0


def comando_frontier(args: argparse.Namespace) -> int:
    runs = leer_runs(args.runs)
    frontera = compute_optimal_frontier(runs, n_bins=args.bins, columna=args.loss)
    guardar_frontera(frontera, args.out)
    _imprimir_json({"points": len(frontera), "out": str(args.out)})
    return 0


def _puntos(args: argparse.Namespace) -> np.ndarray:
    frontera = cargar_frontera(args.frontier)
    if args.min_flops is not None:
        frontera = [p for p in frontera if p.flops >= args.min_flops]
    return puntos_frontera(frontera, args.axis)


def comando_fit(args: argparse.Namespace) -> int:
    puntos = _puntos(args)
    ajuste = fit_power_law_log(puntos) if args.log_space else fit_power_law(puntos)
    _escribir_json(ajuste.to_dict(), args.out)
    _imprimir_json(ajuste.to_dict())
    return 0


def comando_break(args: argparse.Namespace) -> int:
    frontera = cargar_frontera(args.frontier)
    puntos = puntos_frontera(frontera, "flops")
    candidatos = None
    if args.candidates == "edges":
        candidatos = sorted({p.flops_bin[0] for p in frontera} | {p.flops_bin[1] for p in frontera})
    resultado = detect_break(puntos, candidatos, umbral_delta=args.delta, procesos=hilos_disponibles(args.jobs))
    _escribir_json(resultado.to_dict(), args.out)
    _imprimir_json(resultado.to_dict())
    return 0


def comando_icer(args: argparse.Namespace) -> int:
    runs = leer_runs(args.runs)
    entradas = icer(escalera_desde_runs(runs, args.axis))
    if args.out:
        guardar_icer(entradas, args.out)
    print(tabla_icer(entradas).to_csv(index=False), end="")
    return 0


def comando_correlate(args: argparse.Namespace) -> int:
    tabla = pd.read_csv(args.table)
    for columna in (args.x, args.y):
        if columna not in tabla.columns:
            raise KeyError(f"Columna inexistente en {args.table}: {columna}")
    resultado = spearman(tabla[args.x].to_numpy(), tabla[args.y].to_numpy())
    _escribir_json(resultado.to_dict(), args.out)
    _imprimir_json(resultado.to_dict())
    return 0


def comando_compare(args: argparse.Namespace) -> int:
    comparacion = comparar_configuraciones(RunLog.cargar(args.reference), RunLog.cargar(args.alternative))
    _escribir_json(comparacion.to_dict(), args.out)
    _imprimir_json(comparacion.to_dict())
    return 0


def comando_report(args: argparse.Namespace) -> int:
    """
    Escribe primero todas las tablas y ajustes; las figuras se dibujan
    únicamente a partir de los CSV ya escritos.
    """
    runs = leer_runs(args.runs)
    salida: Path = args.out
    salida.mkdir(parents=True, exist_ok=True)

    frontera = compute_optimal_frontier(runs, n_bins=args.bins)
    ruta_registros = salida / "records.csv"
    ruta_frontera = salida / "frontier.csv"
    marcar_optimos(runs, frontera).to_csv(ruta_registros, index=False, float_format="%.17g")
    guardar_frontera(frontera, ruta_frontera)

    ajustes = {}
    for eje in ("flops", "params", "tokens"):
        puntos = puntos_frontera(frontera, eje)
        try:
            ajustes[eje] = fit_power_law(puntos)
            _escribir_json(ajustes[eje].to_dict(), salida / f"fit_{eje}.json")
        except ValueError as e:
            logger.warning("Sin ajuste para %s: %s", eje, e)

    registros = pd.read_csv(ruta_registros, dtype={"run_id": str})
    tabla_frontera = pd.read_csv(ruta_frontera, dtype={"run_id": str})

    figura = graficar_perdida_vs_flops(registros, tabla_frontera, ajustes.get("flops"))
    guardar_svg(figura, salida / "loss_vs_flops.svg", f"datos: {ruta_registros.name}, {ruta_frontera.name}")
    figura = graficar_perdida_vs_covariable(registros, "tokens_seen", "Tokens vistos", "Pérdida vs tokens")
    guardar_svg(figura, salida / "loss_vs_tokens.svg", f"datos: {ruta_registros.name}")
    figura = graficar_perdida_vs_covariable(registros, "params", "Parámetros", "Pérdida vs tamaño del modelo")
    guardar_svg(figura, salida / "loss_vs_params.svg", f"datos: {ruta_registros.name}")

    _imprimir_json({"frontier_points": len(frontera), "fits": {k: v.to_dict() for k, v in ajustes.items()},
                    "out": str(salida)})
    return 0

