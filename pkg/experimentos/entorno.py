import logging
import os
from typing import Optional

VARIABLE_HILOS = "DOWNSCALE_LAB_THREADS"
FORMATO_LOG = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configurar_logging(nivel: int = logging.INFO) -> None:
    logging.basicConfig(level=nivel, format=FORMATO_LOG)
    logging.getLogger().setLevel(nivel)
    # matplotlib es muy verboso en DEBUG
    logging.getLogger("matplotlib").setLevel(max(nivel, logging.WARNING))


def hilos_disponibles(solicitados: Optional[int] = None) -> int:
    """
    Número de procesos a usar: lo solicitado (o todos los núcleos), acotado
    por la variable de entorno DOWNSCALE_LAB_THREADS si está definida.
    """
    total = solicitados if solicitados is not None else (os.cpu_count() or 1)
    tope = os.environ.get(VARIABLE_HILOS)
    if tope:
        try:
            total = min(total, int(tope))
        except ValueError:
            raise ValueError(f"{VARIABLE_HILOS} debe ser un entero: {tope!r}")
    return max(1, total)
