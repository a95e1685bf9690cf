from .camera import Camera, default_rig, make_camera
from .splat import (
    Primitive,
    SemanticMap,
    render_sequence,
    splat,
    voxels_to_primitives,
)
from .raymarch import raymarch_oracle
from .stack import load_condition_stack, save_condition_stack

__all__ = [
    "Camera",
    "default_rig",
    "make_camera",
    "Primitive",
    "SemanticMap",
    "voxels_to_primitives",
    "splat",
    "raymarch_oracle",
    "render_sequence",
    "save_condition_stack",
    "load_condition_stack",
]
