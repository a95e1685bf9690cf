from .triplane import (
    LatentTriPlane,
    VolumeFeature,
    compose_volume,
    latent_scalar_count,
    plane_shapes,
)
from .model import TriPlaneVae, VaeConfig
from .losses import lovasz_softmax, vae_loss

__all__ = [
    "LatentTriPlane",
    "VolumeFeature",
    "compose_volume",
    "plane_shapes",
    "latent_scalar_count",
    "TriPlaneVae",
    "VaeConfig",
    "lovasz_softmax",
    "vae_loss",
]
