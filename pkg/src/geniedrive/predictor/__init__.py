from .control import ControlEmbedder, ControlTokens
from .model import (
    HistoryBuffer,
    McaLayer,
    OccPredictor,
    PredictorConfig,
    TransformHead,
    TriPlaneTokens,
    rollout,
)
from .losses import prediction_loss, transform_matrix_loss

__all__ = [
    "ControlEmbedder",
    "ControlTokens",
    "HistoryBuffer",
    "McaLayer",
    "OccPredictor",
    "PredictorConfig",
    "TransformHead",
    "TriPlaneTokens",
    "rollout",
    "prediction_loss",
    "transform_matrix_loss",
]
