from .config import Phase, TrainConfig, dataclass_from_dict
from .data import load_dataset, frames_tensor, sequence_latents
from .loops import train_e2e, train_predictor, train_vae
from .evaluate import EvalReport, evaluate, forecast_metrics, horizon_steps

__all__ = [
    "Phase",
    "TrainConfig",
    "dataclass_from_dict",
    "load_dataset",
    "frames_tensor",
    "sequence_latents",
    "train_vae",
    "train_predictor",
    "train_e2e",
    "evaluate",
    "EvalReport",
    "forecast_metrics",
    "horizon_steps",
]
