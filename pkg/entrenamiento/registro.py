import json
import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import List, Optional, Union

import pandas as pd

from costos.flops import flops_per_sequence, total_flops
from entrenamiento.optimizador import OptimizerHyper
from modelo.configuracion import ModelConfig

logger = logging.getLogger(__name__)

COLUMNAS = ["step", "tokens_seen", "flops", "train_loss", "eval_loss", "eval_ppl"]


@dataclass(frozen=True)
class RegistroPaso:
    step: int
    tokens_seen: int
    flops: int
    train_loss: float
    eval_loss: float
    eval_ppl: float


@dataclass
class RunLog:
    """
    Historial de una corrida de preentrenamiento.

    Los pasos son estrictamente crecientes y los FLOPs acumulados siguen
    step · batch · C_seq en cada registro.
    """
    config: ModelConfig
    hyper: OptimizerHyper
    seed: int = 0
    run_id: str = ""
    records: List[RegistroPaso] = field(default_factory=list)
    modo_flops: str = "s_corrected"
    pasos_completados: int = 0
    unigram_ppl: Optional[float] = None

    @property
    def c_seq(self) -> int:
        return flops_per_sequence(self.config, self.modo_flops).c_seq

    def agregar(self, step: int, train_loss: float, eval_loss: float) -> RegistroPaso:
        if self.records and step <= self.records[-1].step:
            raise ValueError(f"Los pasos deben ser estrictamente crecientes ({step} <= {self.records[-1].step})")
        batch = self.hyper.batch_size
        registro = RegistroPaso(
            step=step,
            tokens_seen=step * batch * self.config.S,
            flops=total_flops(self.c_seq, step, batch),
            train_loss=float(train_loss),
            eval_loss=float(eval_loss),
            eval_ppl=math.exp(eval_loss),
        )
        self.records.append(registro)
        return registro

    def a_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records], columns=COLUMNAS)

    def metadatos(self) -> dict:
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "config": self.config.to_dict(),
            "hyper": self.hyper.to_dict(),
            "flops_mode": self.modo_flops,
            "c_seq": self.c_seq,
            "steps_completed": self.pasos_completados,
            "unigram_ppl": self.unigram_ppl,
        }

    def guardar(self, ruta_csv: Union[str, Path]) -> Path:
        """Escribe el CSV de registros y un JSON con la configuración al lado."""
        ruta_csv = Path(ruta_csv)
        ruta_csv.parent.mkdir(parents=True, exist_ok=True)
        self.a_dataframe().to_csv(ruta_csv, index=False)
        with open(ruta_sidecar(ruta_csv), "w", encoding="utf-8") as f:
            json.dump(self.metadatos(), f, indent=2)
        return ruta_csv

    @classmethod
    def cargar(cls, ruta_csv: Union[str, Path]) -> "RunLog":
        ruta_csv = Path(ruta_csv)
        tabla = pd.read_csv(ruta_csv, float_precision="round_trip")
        faltantes = [c for c in COLUMNAS if c not in tabla.columns]
        if faltantes:
            raise ValueError(f"{ruta_csv}: faltan columnas {faltantes}")
        with open(ruta_sidecar(ruta_csv), encoding="utf-8") as f:
            meta = json.load(f)

        log = cls(
            config=ModelConfig.from_dict(meta["config"]),
            hyper=OptimizerHyper.from_dict(meta["hyper"]),
            seed=int(meta.get("seed", 0)),
            run_id=meta.get("run_id", ruta_csv.stem),
            modo_flops=meta.get("flops_mode", "s_corrected"),
            pasos_completados=int(meta.get("steps_completed", 0)),
            unigram_ppl=meta.get("unigram_ppl"),
        )
        for fila in tabla.itertuples(index=False):
            log.records.append(RegistroPaso(
                step=int(fila.step), tokens_seen=int(fila.tokens_seen), flops=int(fila.flops),
                train_loss=float(fila.train_loss), eval_loss=float(fila.eval_loss), eval_ppl=float(fila.eval_ppl)
            ))
        return log


def ruta_sidecar(ruta_csv: Union[str, Path]) -> Path:
    return Path(ruta_csv).with_suffix(".json")
