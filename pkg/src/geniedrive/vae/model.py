"""Tri-plane VAE: conv downsampling, learnable-token axis projections,
diagonal Gaussian posterior, and Hadamard-compose + conv decoding.

Encoding: one-hot labels run through a stride-2 conv stack to a volume
feature S (h, w, d, C); for each plane the projected axis becomes the
attention sequence, a learnable token is prepended, and the token's output
after a small transformer is that plane entry.  Decoding composes the
planes back into a volume, adds a factorized learnable positional
encoding, and upsamples with transposed convs to per-voxel class logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..core.grid import OccupancyGrid
from .triplane import LOGVAR_MAX, LOGVAR_MIN, LatentTriPlane, compose_volume_batch


@dataclass
class VaeConfig:
    grid_shape: tuple[int, int, int] = (32, 32, 8)
    n_classes: int = 6
    channels: int = 64           # C, the latent width
    downsample: int = 4          # ds; must be a power of two
    axis_layers: int = 2
    heads: int = 4
    dropout: float = 0.0
    kl_weight: float = 1e-6

    def __post_init__(self):
        H, W, D = self.grid_shape
        ds = self.downsample
        if ds < 2 or ds & (ds - 1):
            raise ValueError(f"downsample must be a power of two >= 2, got {ds}")
        if H % ds or W % ds or D % ds:
            raise ValueError(f"grid {self.grid_shape} not divisible by ds={ds}")
        if self.channels % self.heads:
            raise ValueError("channels must divide evenly into heads")

    @property
    def latent_dims(self) -> tuple[int, int, int]:
        H, W, D = self.grid_shape
        ds = self.downsample
        return H // ds, W // ds, D // ds


def _axis_transformer(C: int, heads: int, layers: int, dropout: float) -> nn.Module:
    layer = nn.TransformerEncoderLayer(
        d_model=C,
        nhead=heads,
        dim_feedforward=2 * C,
        dropout=dropout,
        activation="gelu",
        batch_first=True,
        norm_first=True,
    )
    return nn.TransformerEncoder(layer, num_layers=layers, enable_nested_tensor=False)


class TriPlaneVae(nn.Module):
    def __init__(self, cfg: VaeConfig):
        super().__init__()
        self.cfg = cfg
        C = cfg.channels
        n_blocks = int(math.log2(cfg.downsample))

        down = []
        in_ch = cfg.n_classes
        for k in range(1, n_blocks + 1):
            out_ch = C // 2 ** (n_blocks - k)
            down += [
                nn.Conv3d(in_ch, out_ch, kernel_size=3, stride=2, padding=1),
                nn.GroupNorm(min(4, out_ch), out_ch),
                nn.GELU(),
            ]
            in_ch = out_ch
        self.g_phi = nn.Sequential(*down)

        up = []
        for k in range(n_blocks - 1):
            out_ch = C // 2 ** (k + 1)
            up += [
                nn.ConvTranspose3d(in_ch, out_ch, kernel_size=4, stride=2, padding=1),
                nn.GroupNorm(min(4, out_ch), out_ch),
                nn.GELU(),
            ]
            in_ch = out_ch
        up.append(
            nn.ConvTranspose3d(in_ch, cfg.n_classes, kernel_size=4, stride=2, padding=1)
        )
        self.f_psi = nn.Sequential(*up)

        self.token_xy = nn.Parameter(torch.randn(C) * 0.02)
        self.token_yz = nn.Parameter(torch.randn(C) * 0.02)
        self.token_xz = nn.Parameter(torch.randn(C) * 0.02)
        self.axis_xy = _axis_transformer(C, cfg.heads, cfg.axis_layers, cfg.dropout)
        self.axis_yz = _axis_transformer(C, cfg.heads, cfg.axis_layers, cfg.dropout)
        self.axis_xz = _axis_transformer(C, cfg.heads, cfg.axis_layers, cfg.dropout)
        self.head_xy = nn.Linear(C, 2 * C)
        self.head_yz = nn.Linear(C, 2 * C)
        self.head_xz = nn.Linear(C, 2 * C)

        h, w, d = cfg.latent_dims
        self.pe_x = nn.Parameter(torch.randn(h, C) * 0.02)
        self.pe_y = nn.Parameter(torch.randn(w, C) * 0.02)
        self.pe_z = nn.Parameter(torch.randn(d, C) * 0.02)

    # ---------------------------------------------------------------- encode

    def _project(
        self, seq: torch.Tensor, token: nn.Parameter, axis: nn.Module, head: nn.Linear
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """seq (N, L, C) -> posterior (mean, logvar), each (N, C)."""
        tok = token.to(seq.dtype).expand(seq.shape[0], 1, -1)
        out = axis(torch.cat([tok, seq], dim=1))[:, 0]
        mean, logvar = head(out).chunk(2, dim=-1)
        return mean, logvar.clamp(LOGVAR_MIN, LOGVAR_MAX)

    def encode_params(self, labels: torch.Tensor) -> dict[str, torch.Tensor]:
        """labels (B, H, W, D) int64 -> posterior parameters per plane.

        Returns mean_xy (B, h, w, C), logvar_xy, and likewise for yz / xz.
        """
        B, H, W, D = labels.shape
        if (H, W, D) != self.cfg.grid_shape:
            raise ValueError(f"grid {(H, W, D)} != configured {self.cfg.grid_shape}")
        dtype = self.token_xy.dtype
        x = F.one_hot(labels, self.cfg.n_classes).permute(0, 4, 1, 2, 3).to(dtype)
        S = self.g_phi(x).permute(0, 2, 3, 4, 1)  # (B, h, w, d, C)
        Bh, h, w, d, C = S.shape

        m_xy, lv_xy = self._project(
            S.reshape(B * h * w, d, C), self.token_xy, self.axis_xy, self.head_xy
        )
        m_yz, lv_yz = self._project(
            S.permute(0, 2, 3, 1, 4).reshape(B * w * d, h, C),
            self.token_yz, self.axis_yz, self.head_yz,
        )
        m_xz, lv_xz = self._project(
            S.permute(0, 1, 3, 2, 4).reshape(B * h * d, w, C),
            self.token_xz, self.axis_xz, self.head_xz,
        )
        return {
            "mean_xy": m_xy.reshape(B, h, w, C), "logvar_xy": lv_xy.reshape(B, h, w, C),
            "mean_yz": m_yz.reshape(B, w, d, C), "logvar_yz": lv_yz.reshape(B, w, d, C),
            "mean_xz": m_xz.reshape(B, h, d, C), "logvar_xz": lv_xz.reshape(B, h, d, C),
        }

    @staticmethod
    def sample_planes(
        params: dict[str, torch.Tensor],
        generator: torch.Generator | None = None,
        sample: bool = True,
    ) -> dict[str, torch.Tensor]:
        """Reparameterized draw; with sample=False the means pass through."""
        out = {}
        for plane in ("xy", "yz", "xz"):
            mean, logvar = params[f"mean_{plane}"], params[f"logvar_{plane}"]
            if sample:
                eps = torch.randn(
                    mean.shape, generator=generator, dtype=mean.dtype, device=mean.device
                )
                out[f"z_{plane}"] = mean + torch.exp(0.5 * logvar) * eps
            else:
                out[f"z_{plane}"] = mean
        return out

    def encode(
        self, grid: OccupancyGrid, seed: int = 0, sample: bool = True
    ) -> LatentTriPlane:
        labels = torch.from_numpy(grid.labels.astype("int64"))[None]
        params = self.encode_params(labels)
        gen = torch.Generator().manual_seed(seed)
        zs = self.sample_planes(params, gen, sample)
        return LatentTriPlane(
            z_xy=zs["z_xy"][0], z_yz=zs["z_yz"][0], z_xz=zs["z_xz"][0],
            mean_xy=params["mean_xy"][0], mean_yz=params["mean_yz"][0],
            mean_xz=params["mean_xz"][0],
            logvar_xy=params["logvar_xy"][0], logvar_yz=params["logvar_yz"][0],
            logvar_xz=params["logvar_xz"][0],
        )

    # ---------------------------------------------------------------- decode

    def positional_volume(self, dtype=None) -> torch.Tensor:
        """Factorized PE summed to (h, w, d, C)."""
        pe = (
            self.pe_x[:, None, None, :]
            + self.pe_y[None, :, None, :]
            + self.pe_z[None, None, :, :]
        )
        return pe if dtype is None else pe.to(dtype)

    def decode_planes(
        self, z_xy: torch.Tensor, z_yz: torch.Tensor, z_xz: torch.Tensor
    ) -> torch.Tensor:
        """Batched planes -> logits (B, H, W, D, n_classes)."""
        vol = compose_volume_batch(z_xy, z_yz, z_xz)
        vol = vol + self.positional_volume(vol.dtype)[None]
        logits = self.f_psi(vol.permute(0, 4, 1, 2, 3))
        return logits.permute(0, 2, 3, 4, 1)

    def decode(self, z: LatentTriPlane) -> torch.Tensor:
        """Single latent -> logits (H, W, D, n_classes)."""
        return self.decode_planes(z.z_xy[None], z.z_yz[None], z.z_xz[None])[0]

    def reconstruct(self, grid: OccupancyGrid, seed: int = 0) -> OccupancyGrid:
        """encode (means) -> decode -> argmax, as an OccupancyGrid."""
        with torch.no_grad():
            z = self.encode(grid, seed=seed, sample=False)
            labels = self.decode(z).argmax(-1).numpy().astype(grid.labels.dtype)
        return OccupancyGrid(labels, grid.voxel_size, grid.origin.copy())

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
