"""Toy multi-view video backbone: patch transformer blocks with adaptive
layer-norm timestep conditioning, interleaved with normalized multi-view
attention, trained from scratch at desk scale.

Conditioning: semantic label maps are one-hot patch-embedded and
channel-concatenated to the video patch embedding before a fusing linear,
so the physics condition enters every token.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .mva import MvaBlockParams, NormalizedMva


def modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


class TimestepEmbedder(nn.Module):
    """Sinusoidal features of the flow time followed by an MLP."""

    def __init__(self, dim: int, freq_dim: int = 64):
        super().__init__()
        self.freq_dim = freq_dim
        self.mlp = nn.Sequential(
            nn.Linear(freq_dim, dim), nn.SiLU(), nn.Linear(dim, dim)
        )

    def forward(self, time: torch.Tensor) -> torch.Tensor:
        half = self.freq_dim // 2
        freqs = torch.exp(
            -math.log(1000.0)
            * torch.arange(half, dtype=time.dtype, device=time.device)
            / half
        )
        args = time[:, None] * 1000.0 * freqs[None]
        emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
        return self.mlp(emb)


class DiTBlock(nn.Module):
    """Pre-norm attention + MLP, both gated and shifted by the time embedding."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float = 2.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(
            nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim)
        )
        self.adaLN = nn.Sequential(nn.SiLU(), nn.Linear(dim, 6 * dim))
        nn.init.zeros_(self.adaLN[-1].weight)
        nn.init.zeros_(self.adaLN[-1].bias)

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        sh1, sc1, g1, sh2, sc2, g2 = self.adaLN(temb).chunk(6, dim=-1)
        h = modulate(self.norm1(x), sh1, sc1)
        attn_out, _ = self.attn(h, h, h)
        x = x + g1.unsqueeze(1) * attn_out
        x = x + g2.unsqueeze(1) * self.mlp(modulate(self.norm2(x), sh2, sc2))
        return x


class FinalLayer(nn.Module):
    def __init__(self, dim: int, patch: int, out_channels: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.adaLN = nn.Sequential(nn.SiLU(), nn.Linear(dim, 2 * dim))
        self.proj = nn.Linear(dim, patch * patch * out_channels)
        nn.init.zeros_(self.adaLN[-1].weight)
        nn.init.zeros_(self.adaLN[-1].bias)

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        shift, scale = self.adaLN(temb).chunk(2, dim=-1)
        return self.proj(modulate(self.norm(x), shift, scale))


@dataclass
class VideoModelConfig:
    n_views: int = 2
    n_frames: int = 8
    image_size: tuple[int, int] = (32, 32)
    video_channels: int = 3
    cond_classes: int = 7          # semantic classes plus the background id
    patch: int = 4
    dim: int = 64
    depth: int = 4
    heads: int = 4
    use_mva: bool = True
    mva_stride: int = 1            # insert MVA after every ``stride``-th block
    mva_eta: float = 1.0
    mva_normalized: bool = True

    def __post_init__(self):
        h, w = self.image_size
        if h % self.patch or w % self.patch:
            raise ValueError(f"image {self.image_size} not divisible by patch {self.patch}")

    @property
    def token_grid(self) -> tuple[int, int, int]:
        h, w = self.image_size
        return self.n_frames, h // self.patch, w // self.patch


class ToyVideoModel(nn.Module):
    def __init__(self, cfg: VideoModelConfig):
        super().__init__()
        self.cfg = cfg
        C = cfg.dim
        t, gh, gw = cfg.token_grid

        self.video_embed = nn.Conv2d(
            cfg.video_channels, C, kernel_size=cfg.patch, stride=cfg.patch
        )
        self.cond_embed = nn.Conv2d(
            cfg.cond_classes, C, kernel_size=cfg.patch, stride=cfg.patch
        )
        self.fuse = nn.Linear(2 * C, C)
        self.pos = nn.Parameter(torch.randn(t * gh * gw, C) * 0.02)
        self.view_embed = nn.Parameter(torch.randn(cfg.n_views, C) * 0.02)
        self.t_embedder = TimestepEmbedder(C)

        self.blocks = nn.ModuleList(
            DiTBlock(C, cfg.heads) for _ in range(cfg.depth)
        )
        self.mva_blocks = nn.ModuleDict()
        if cfg.use_mva:
            for i in range(cfg.depth):
                if (i + 1) % cfg.mva_stride == 0:
                    self.mva_blocks[str(i)] = NormalizedMva(
                        MvaBlockParams(
                            channels=C,
                            heads=cfg.heads,
                            eta=cfg.mva_eta,
                            normalized=cfg.mva_normalized,
                        )
                    )
        self.final = FinalLayer(C, cfg.patch, cfg.video_channels)

    def video_shape(self, batch: int) -> tuple[int, ...]:
        h, w = self.cfg.image_size
        return (batch, self.cfg.n_views, self.cfg.n_frames, self.cfg.video_channels, h, w)

    def forward(
        self, x: torch.Tensor, cond: torch.Tensor, time: torch.Tensor
    ) -> torch.Tensor:
        """x (B, n, t, c, h, w); cond (B, n, t, h, w) int labels; time (B,)."""
        cfg = self.cfg
        B, n, t, c, h, w = x.shape
        if (n, t, c, (h, w)) != (
            cfg.n_views, cfg.n_frames, cfg.video_channels, cfg.image_size
        ):
            raise ValueError(f"video {tuple(x.shape)} does not match config")
        tg, gh, gw = cfg.token_grid
        L = tg * gh * gw

        flat = x.reshape(B * n * t, c, h, w)
        vid_tok = self.video_embed(flat)  # (B*n*t, C, gh, gw)
        one_hot = F.one_hot(cond.reshape(B * n * t, h, w), cfg.cond_classes)
        cond_tok = self.cond_embed(one_hot.permute(0, 3, 1, 2).to(x.dtype))
        tok = torch.cat([vid_tok, cond_tok], dim=1)  # channel concat
        tok = tok.flatten(2).transpose(1, 2)  # (B*n*t, gh*gw, 2C)
        tok = self.fuse(tok).reshape(B, n, L, -1)

        tok = tok + self.pos[None, None] + self.view_embed[None, :, None, :]
        temb = self.t_embedder(time)
        temb_views = temb.repeat_interleave(n, dim=0)  # (B*n, C)

        seq = tok.reshape(B * n, L, -1)
        for i, block in enumerate(self.blocks):
            seq = block(seq, temb_views)
            key = str(i)
            if key in self.mva_blocks:
                seq = self.mva_blocks[key](
                    seq.reshape(B, n, L, -1), n, tg, gh, gw
                ).reshape(B * n, L, -1)

        out = self.final(seq, temb_views)  # (B*n, L, p*p*c)
        out = out.reshape(B * n * t, gh, gw, cfg.patch, cfg.patch, c)
        out = out.permute(0, 5, 1, 3, 2, 4).reshape(B * n * t, c, h, w)
        return out.reshape(B, n, t, c, h, w)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
