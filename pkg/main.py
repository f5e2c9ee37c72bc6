import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from costos.flops import MODOS
from experimentos import comandos
from experimentos.entorno import configurar_logging

logger = logging.getLogger(__name__)


def _entero_positivo(valor: str) -> int:
    numero = int(valor)
    if numero < 1:
        raise argparse.ArgumentTypeError(f"se esperaba un entero positivo: {valor}")
    return numero


def construir_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="downscale-lab",
        description="Laboratorio de modelos de lenguaje reducidos: corpus, tokenizador, "
                    "preentrenamiento, costo y análisis de escalamiento."
    )
    nivel = parser.add_mutually_exclusive_group()
    nivel.add_argument("-v", "--verbose", action="store_true", help="Mensajes de depuración")
    nivel.add_argument("-q", "--quiet", action="store_true", help="Sólo advertencias y errores")
    sub = parser.add_subparsers(dest="comando", required=True, metavar="COMANDO")

    # Corpus
    p = sub.add_parser("build-vocab", help="Construye el vocabulario cerrado desde transcripciones")
    p.add_argument("--transcripts", type=Path, nargs="+", required=True)
    p.add_argument("--stoplist", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--flagged", type=Path, help="Archivo para las palabras marcadas como galimatías")
    p.set_defaults(funcion=comandos.comando_build_vocab)

    p = sub.add_parser("filter", help="Filtra documentos JSONL a spans cerrados en vocabulario")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--vocab", type=Path, required=True)
    p.add_argument("--mode", choices=("span", "sentence"), default="span")
    p.add_argument("--span-size", type=_entero_positivo, default=110)
    p.add_argument("--stride", type=_entero_positivo, default=30)
    p.add_argument("--target-words", type=_entero_positivo, default=110)
    p.add_argument("--corpus-id", default="corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--stats", type=Path)
    p.add_argument("--jobs", type=_entero_positivo)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(funcion=comandos.comando_filter)

    p = sub.add_parser("split", help="Particiona spans en train/dev/test")
    p.add_argument("--spans", type=Path, required=True)
    p.add_argument("--dev-size", type=int, required=True)
    p.add_argument("--test-size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(funcion=comandos.comando_split)

    # Tokenizador
    p = sub.add_parser("train-tokenizer", help="Entrena candidatos BPE y selecciona uno")
    p.add_argument("--spans", type=Path, required=True)
    p.add_argument("--vocab-sizes", type=_entero_positivo, nargs="+", required=True)
    p.add_argument("--reference", nargs="+", default=["bpe=1.32"], help="Razones de referencia familia=valor")
    p.add_argument("--external", type=Path, help="CSV con candidatos precalculados de otras familias")
    p.add_argument("--esms", type=Path, help="Lista de referencia ESMS (por defecto la incluida)")
    p.add_argument("--max-spans", type=_entero_positivo)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_entero_positivo)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(funcion=comandos.comando_train_tokenizer)

    p = sub.add_parser("eval-tokenizer", help="Razón de división y ESMS de un tokenizador")
    p.add_argument("--tokenizer", type=Path, required=True)
    p.add_argument("--spans", type=Path, required=True)
    p.add_argument("--esms", type=Path)
    p.add_argument("--canonical-only", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(funcion=comandos.comando_eval_tokenizer)

    # Rejilla y entrenamiento
    p = sub.add_parser("grid", help="Genera configuraciones de modelo")
    p.add_argument("--spec", type=Path)
    p.add_argument("--mode", choices=("unidirectional", "random_sample"))
    p.add_argument("--sample-count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--vocab-size", type=_entero_positivo)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(funcion=comandos.comando_grid)

    p = sub.add_parser("pretrain", help="Preentrena uno o varios modelos MLM")
    origen = p.add_mutually_exclusive_group(required=True)
    origen.add_argument("--config", type=Path)
    origen.add_argument("--grid", type=Path, help="Directorio generado por `grid`")
    p.add_argument("--tokenizer", type=Path, required=True)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--eval", type=Path, required=True)
    p.add_argument("--hyper", type=Path)
    p.add_argument("--steps", type=_entero_positivo)
    p.add_argument("--batch-size", type=_entero_positivo)
    p.add_argument("--peak-lr", type=float)
    p.add_argument("--schedule", choices=("inverse_sqrt", "linear"))
    p.add_argument("--log-every", type=_entero_positivo, default=100)
    p.add_argument("--checkpoint-every", type=_entero_positivo)
    p.add_argument("--vocab-size-from-tokenizer", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_entero_positivo)
    p.add_argument("--progress", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(funcion=comandos.comando_pretrain)

    p = sub.add_parser("finetune", help="Ajuste fino en una tarea de clasificación")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--tokenizer", type=Path, required=True)
    tarea = p.add_mutually_exclusive_group(required=True)
    tarea.add_argument("--task", type=Path)
    tarea.add_argument("--synthetic", choices=("familia", "solapamiento"))
    p.add_argument("--vocab", type=Path, help="Vocabulario para las tareas sintéticas")
    p.add_argument("--family-stem", default="play")
    p.add_argument("--examples", type=_entero_positivo, default=400)
    p.add_argument("--epochs", type=_entero_positivo, default=5)
    p.add_argument("--batch", type=_entero_positivo, default=32)
    p.add_argument("--peak-lr", type=float, default=1e-4)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--seed", type=int, default=0, help="Semilla de la tarea sintética")
    p.add_argument("--random-init", action="store_true", help="Compara contra un modelo sin preentrenar")
    p.add_argument("--out", type=Path)
    p.set_defaults(funcion=comandos.comando_finetune)

    # Costo y análisis
    p = sub.add_parser("flops", help="Desglose de FLOPs y parámetros de una configuración")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--mode", choices=MODOS, default="s_corrected")
    p.add_argument("--steps", type=_entero_positivo)
    p.add_argument("--batch", type=_entero_positivo, default=256)
    p.set_defaults(funcion=comandos.comando_flops)

    p = sub.add_parser("frontier", help="Frontera compute-óptima de un conjunto de corridas")
    p.add_argument("--runs", type=Path, nargs="+", required=True)
    p.add_argument("--bins", type=_entero_positivo, default=32)
    p.add_argument("--loss", choices=("eval_loss", "train_loss"), default="eval_loss")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(funcion=comandos.comando_frontier)

    p = sub.add_parser("fit", help="Ajusta una ley de potencia a la frontera")
    p.add_argument("--frontier", type=Path, required=True)
    p.add_argument("--axis", choices=("flops", "params", "tokens"), default="flops")
    p.add_argument("--min-flops", type=float)
    p.add_argument("--log-space", action="store_true", help="Mínimos cuadrados en espacio log-log")
    p.add_argument("--out", type=Path)
    p.set_defaults(funcion=comandos.comando_fit)

    p = sub.add_parser("break", help="Busca un quiebre en la ley de potencia")
    p.add_argument("--frontier", type=Path, required=True)
    p.add_argument("--candidates", choices=("midpoints", "edges"), default="midpoints")
    p.add_argument("--delta", type=float, default=0.02)
    p.add_argument("--jobs", type=_entero_positivo)
    p.add_argument("--out", type=Path)
    p.set_defaults(funcion=comandos.comando_break)

    p = sub.add_parser("icer", help="Tabla ICER de una escalera sobre un eje")
    p.add_argument("--runs", type=Path, nargs="+", required=True)
    p.add_argument("--axis", choices=("E", "H", "I", "L", "A"), required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(funcion=comandos.comando_icer)

    p = sub.add_parser("correlate", help="Correlación de Spearman entre dos columnas de un CSV")
    p.add_argument("--table", type=Path, required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(funcion=comandos.comando_correlate)

    p = sub.add_parser("compare", help="Compara dos corridas")
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--alternative", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(funcion=comandos.comando_compare)

    p = sub.add_parser("report", help="Tablas, ajustes y figuras de un conjunto de corridas")
    p.add_argument("--runs", type=Path, nargs="+", required=True)
    p.add_argument("--bins", type=_entero_positivo, default=32)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(funcion=comandos.comando_report)

    return parser


def run_pipeline(argv: Optional[List[str]] = None) -> int:
    """
    Ejecuta un subcomando y devuelve el código de salida: 0 si tuvo éxito,
    1 ante un error de datos o de archivos y 2 ante un error de uso.
    """
    parser = construir_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configurar_logging(logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO)
    try:
        return args.funcion(args)
    except (ValueError, KeyError, OSError, RuntimeError) as e:
        logger.error("%s: %s", args.comando, e)
        logger.debug("Detalle del error", exc_info=True)
        return 1


def main():
    sys.exit(run_pipeline())


if __name__ == "__main__":
    main()
