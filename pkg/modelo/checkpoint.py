import json
import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from modelo.configuracion import ModelConfig
from modelo.transformer import ModelParams

logger = logging.getLogger(__name__)

VERSION_CHECKPOINT = 1
CLAVE_META = "__meta__"


def ruta_checkpoint(directorio: Union[str, Path], run_id: str, paso: int) -> Path:
    """Ubicación run_id/step_N.ckpt dentro de `directorio`."""
    return Path(directorio) / run_id / f"step_{paso}.ckpt"


def guardar_checkpoint(
        ruta: Union[str, Path],
        params: ModelParams,
        paso: int,
        tokens_vistos: int
) -> Path:
    """
    Guarda configuración, paso, tokens vistos y todos los tensores en un
    contenedor npz con metadatos JSON.
    """
    ruta = Path(ruta)
    ruta.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": VERSION_CHECKPOINT,
        "config": params.config.to_dict(),
        "step": int(paso),
        "tokens_seen": int(tokens_vistos),
    }
    with open(ruta, "wb") as f:
        np.savez(f, **{CLAVE_META: np.array(json.dumps(meta))}, **params.tensores)
    logger.debug("Checkpoint guardado en %s", ruta)
    return ruta


def cargar_checkpoint(ruta: Union[str, Path]) -> Tuple[ModelParams, int, int]:
    """
    Returns:
        Tupla (parámetros, paso, tokens vistos)
    """
    with np.load(ruta, allow_pickle=False) as datos:
        if CLAVE_META not in datos.files:
            raise ValueError(f"Checkpoint sin metadatos: {ruta}")
        meta = json.loads(str(datos[CLAVE_META]))
        version = meta.get("version")
        if version != VERSION_CHECKPOINT:
            raise ValueError(f"Versión de checkpoint desconocida: {version}")
        tensores = {k: datos[k].astype(np.float64) for k in datos.files if k != CLAVE_META}

    config = ModelConfig.from_dict(meta["config"])
    return ModelParams(config, tensores), int(meta["step"]), int(meta["tokens_seen"])
