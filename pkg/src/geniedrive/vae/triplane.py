"""Latent tri-plane representation and its broadcast-product composition.

A feature volume (h, w, d, C) factorizes into three planes: xy (h, w, C),
yz (w, d, C) and xz (h, d, C).  Composition multiplies each plane
broadcast along its missing axis:

    out[i, j, k, c] = xy[i, j, c] * yz[j, k, c] * xz[i, k, c]

For attention the three planes concatenate, when h == w, into one token
grid of shape (h, w + 2d, C).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

LOGVAR_MIN, LOGVAR_MAX = -30.0, 20.0


def plane_shapes(H: int, W: int, D: int, ds: int, C: int) -> dict[str, tuple]:
    if H % ds or W % ds or D % ds:
        raise ValueError(f"dims {(H, W, D)} not divisible by downsample factor {ds}")
    h, w, d = H // ds, W // ds, D // ds
    return {"xy": (h, w, C), "yz": (w, d, C), "xz": (h, d, C)}


def latent_scalar_count(H: int, W: int, D: int, ds: int, C: int) -> int:
    shapes = plane_shapes(H, W, D, ds, C)
    return sum(s[0] * s[1] * s[2] for s in shapes.values())


@dataclass
class VolumeFeature:
    """Dense feature volume (h, w, d, C)."""

    data: torch.Tensor

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ValueError(f"expected (h, w, d, C), got shape {tuple(self.data.shape)}")
        if not torch.isfinite(self.data).all():
            raise ValueError("non-finite volume feature")


@dataclass
class LatentTriPlane:
    """Sampled planes plus (optionally) their Gaussian posterior parameters."""

    z_xy: torch.Tensor  # (h, w, C)
    z_yz: torch.Tensor  # (w, d, C)
    z_xz: torch.Tensor  # (h, d, C)
    mean_xy: torch.Tensor | None = None
    mean_yz: torch.Tensor | None = None
    mean_xz: torch.Tensor | None = None
    logvar_xy: torch.Tensor | None = None
    logvar_yz: torch.Tensor | None = None
    logvar_xz: torch.Tensor | None = None

    def __post_init__(self):
        h, w, C = self.z_xy.shape
        w2, d, C2 = self.z_yz.shape
        h2, d2, C3 = self.z_xz.shape
        if w2 != w or h2 != h or d2 != d or len({C, C2, C3}) != 1:
            raise ValueError(
                f"inconsistent plane shapes: xy {tuple(self.z_xy.shape)}, "
                f"yz {tuple(self.z_yz.shape)}, xz {tuple(self.z_xz.shape)}"
            )
        for lv in (self.logvar_xy, self.logvar_yz, self.logvar_xz):
            if lv is not None and not torch.isfinite(lv).all():
                raise ValueError("non-finite logvar")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        h, w, C = self.z_xy.shape
        d = self.z_yz.shape[1]
        return h, w, d, C

    def concat_tokens(self) -> torch.Tensor:
        """Unified token grid (h, w + 2d, C); requires square ground plane."""
        h, w, d, C = self.dims
        if h != w:
            raise ValueError(f"token concat needs h == w, got h={h}, w={w}")
        return torch.cat([self.z_xy, self.z_yz, self.z_xz], dim=1)

    @staticmethod
    def split_tokens(tokens: torch.Tensor, d: int) -> "LatentTriPlane":
        """Inverse of concat_tokens given the depth axis size."""
        h = tokens.shape[0]
        w = tokens.shape[1] - 2 * d
        if w != h:
            raise ValueError(f"token grid {tuple(tokens.shape)} does not split at d={d}")
        return LatentTriPlane(
            z_xy=tokens[:, :w],
            z_yz=tokens[:, w : w + d],
            z_xz=tokens[:, w + d :],
        )


def compose_volume(z: LatentTriPlane) -> VolumeFeature:
    """Hadamard composition with each plane broadcast along its missing axis."""
    vol = (
        z.z_xy[:, :, None, :] * z.z_yz[None, :, :, :] * z.z_xz[:, None, :, :]
    )
    return VolumeFeature(vol)


def compose_volume_batch(
    z_xy: torch.Tensor, z_yz: torch.Tensor, z_xz: torch.Tensor
) -> torch.Tensor:
    """Batched composition on raw tensors (B, ., ., C) -> (B, h, w, d, C)."""
    return (
        z_xy[:, :, :, None, :] * z_yz[:, None, :, :, :] * z_xz[:, :, None, :, :]
    )
