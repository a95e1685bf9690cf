from .grid import (
    Command,
    ControlSignal,
    LabelPalette,
    OccupancyGrid,
    RigidTransform2D,
    SceneSequence,
    transform_grid,
)
from .synthetic import SceneGenConfig, generate_synthetic_sequence
from .metrics import compute_iou, compute_miou
from .edit import EditSpec, edit_grid
from .seqio import (
    DimensionMismatchError,
    HeaderError,
    ManifestError,
    SequenceFormatError,
    TruncatedBlobError,
    load_sequence,
    save_sequence,
)

__all__ = [
    "Command",
    "ControlSignal",
    "LabelPalette",
    "OccupancyGrid",
    "RigidTransform2D",
    "SceneSequence",
    "transform_grid",
    "SceneGenConfig",
    "generate_synthetic_sequence",
    "compute_iou",
    "compute_miou",
    "EditSpec",
    "edit_grid",
    "save_sequence",
    "load_sequence",
    "SequenceFormatError",
    "ManifestError",
    "HeaderError",
    "DimensionMismatchError",
    "TruncatedBlobError",
]
