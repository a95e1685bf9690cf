"""Next-latent prediction with mutual control attention.

One prediction step: L mutual-control-attention layers iterate occupancy
tokens against control tokens; at the intermediate layer ``m`` the control
latent decodes (through a small head) into the ego rigid transform for
auxiliary supervision and fuses back into the occupancy tokens via
cross-attention; spatial-temporal blocks then mix the token grid with the
history window.  Every branch is residual, so zeroing all output
projections makes the whole step the identity on the occupancy tokens.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import torch
import torch.nn as nn

from ..core.grid import OccupancyGrid
from ..vae.model import TriPlaneVae
from ..vae.triplane import LatentTriPlane
from .control import ControlEmbedder, control_batch


@dataclass
class TriPlaneTokens:
    """Concatenated plane grid (h, w + 2d, C); flattens for attention and
    splits back into planes losslessly."""

    grid: torch.Tensor
    d: int

    @staticmethod
    def from_latent(z: LatentTriPlane) -> "TriPlaneTokens":
        return TriPlaneTokens(grid=z.concat_tokens(), d=z.dims[2])

    def to_latent(self) -> LatentTriPlane:
        return LatentTriPlane.split_tokens(self.grid, self.d)

    @property
    def flat(self) -> torch.Tensor:
        Hg, Wg, C = self.grid.shape
        return self.grid.reshape(Hg * Wg, C)


@dataclass
class PredictorConfig:
    latent_dims: tuple[int, int, int]  # (h, w, d) of the tri-plane
    channels: int = 64
    mca_layers: int = 4
    intermediate_layer: int = 2        # m: 1-based MCA layer for the transform head
    st_blocks: int = 2
    heads: int = 4
    history: int = 3                   # k
    reg_weight: float = 0.1            # lambda

    def __post_init__(self):
        if not 1 <= self.intermediate_layer <= self.mca_layers:
            raise ValueError("intermediate layer must lie within the MCA stack")
        if self.history < 1:
            raise ValueError("history window must be >= 1")

    @property
    def n_tokens(self) -> int:
        h, w, d = self.latent_dims
        return h * (w + 2 * d)


class _Attention(nn.Module):
    """Pre-norm residual attention branch; ``zero_output`` kills the branch."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.norm_q = nn.LayerNorm(channels)
        self.norm_kv = nn.LayerNorm(channels)
        self.attn = nn.MultiheadAttention(channels, heads, batch_first=True)

    def forward(self, q: torch.Tensor, kv: torch.Tensor) -> torch.Tensor:
        out, _ = self.attn(self.norm_q(q), self.norm_kv(kv), self.norm_kv(kv))
        return q + out

    def zero_output(self):
        nn.init.zeros_(self.attn.out_proj.weight)
        nn.init.zeros_(self.attn.out_proj.bias)


class McaLayer(nn.Module):
    """Occupancy attends to control, self-attends, control attends back."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.occ_from_ctrl = _Attention(channels, heads)
        self.occ_self = _Attention(channels, heads)
        self.ctrl_from_occ = _Attention(channels, heads)

    def forward(
        self, z: torch.Tensor, c: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        z_prime = self.occ_from_ctrl(z, c)
        z_next = self.occ_self(z_prime, z_prime)
        c_next = self.ctrl_from_occ(c, z_next)
        return z_next, c_next

    def zero_residual_outputs(self):
        for blk in (self.occ_from_ctrl, self.occ_self, self.ctrl_from_occ):
            blk.zero_output()


class TransformHead(nn.Module):
    """Mean-pooled control tokens -> (cos, sin, tx, ty) -> 3x3 SE(2) matrix.

    The (cos, sin) pair is renormalized to unit length before assembly, so
    the rotation block is always orthonormal.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(channels, channels), nn.GELU(), nn.Linear(channels, 4)
        )

    def forward(self, c_tokens: torch.Tensor) -> torch.Tensor:
        """(B, n_ctrl, C) -> (B, 3, 3)."""
        raw = self.mlp(c_tokens.mean(dim=1))
        cos_sin = raw[:, :2]
        norm = cos_sin.norm(dim=-1, keepdim=True).clamp_min(1e-8)
        cos, sin = (cos_sin / norm).unbind(-1)
        tx, ty = raw[:, 2], raw[:, 3]
        B = raw.shape[0]
        mat = raw.new_zeros(B, 3, 3)
        mat[:, 0, 0] = cos
        mat[:, 0, 1] = -sin
        mat[:, 1, 0] = sin
        mat[:, 1, 1] = cos
        mat[:, 0, 2] = tx
        mat[:, 1, 2] = ty
        mat[:, 2, 2] = 1.0
        return mat


class SpatialTemporalBlock(nn.Module):
    """Self-attention over the token grid, then a residual MLP over the
    channel-concatenated history window."""

    def __init__(self, channels: int, heads: int, history: int):
        super().__init__()
        self.spatial = _Attention(channels, heads)
        self.temporal_norm = nn.LayerNorm(channels * (history + 1))
        self.temporal_mlp = nn.Sequential(
            nn.Linear(channels * (history + 1), channels),
            nn.GELU(),
            nn.Linear(channels, channels),
        )

    def forward(self, z: torch.Tensor, history: torch.Tensor) -> torch.Tensor:
        """z (B, T, C); history (B, k, T, C) ordered oldest -> newest."""
        z = self.spatial(z, z)
        B, k, T, C = history.shape
        window = torch.cat([history.permute(0, 2, 1, 3).reshape(B, T, k * C), z], dim=-1)
        return z + self.temporal_mlp(self.temporal_norm(window))

    def zero_residual_outputs(self):
        self.spatial.zero_output()
        nn.init.zeros_(self.temporal_mlp[-1].weight)
        nn.init.zeros_(self.temporal_mlp[-1].bias)


class HistoryBuffer:
    """The last k occupancy-token tensors, oldest first; short buffers pad
    by repeating their oldest entry."""

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("history window must be >= 1")
        self.k = k
        self._entries: deque = deque(maxlen=k)

    def push(self, tokens: torch.Tensor) -> None:
        self._entries.append(tokens)

    def __len__(self) -> int:
        return len(self._entries)

    def stacked(self) -> torch.Tensor:
        """(k, ...) window, front-padded with the oldest entry."""
        if not self._entries:
            raise ValueError("history buffer is empty")
        entries = list(self._entries)
        pad = [entries[0]] * (self.k - len(entries))
        return torch.stack(pad + entries)


class OccPredictor(nn.Module):
    def __init__(self, cfg: PredictorConfig):
        super().__init__()
        self.cfg = cfg
        C = cfg.channels
        self.control_embedder = ControlEmbedder(C)
        self.mca = nn.ModuleList(
            McaLayer(C, cfg.heads) for _ in range(cfg.mca_layers)
        )
        self.fusion = _Attention(C, cfg.heads)
        self.transform_head = TransformHead(C)
        self.st = nn.ModuleList(
            SpatialTemporalBlock(C, cfg.heads, cfg.history)
            for _ in range(cfg.st_blocks)
        )

    def forward(
        self,
        z_tokens: torch.Tensor,
        ctrl_tokens: torch.Tensor,
        history: torch.Tensor,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """One prediction step.

        z_tokens (B, T, C), ctrl_tokens (B, n_ctrl, C), history (B, k, T, C)
        -> (next tokens (B, T, C), predicted transform (B, 3, 3)).
        """
        if z_tokens.shape[1] != self.cfg.n_tokens:
            raise ValueError(
                f"got {z_tokens.shape[1]} tokens, config expects {self.cfg.n_tokens}"
            )
        if history.shape[1] != self.cfg.history:
            raise ValueError(
                f"history window {history.shape[1]} != configured {self.cfg.history}"
            )
        z, c = z_tokens, ctrl_tokens
        transform = None
        for idx, layer in enumerate(self.mca, start=1):
            z, c = layer(z, c)
            if idx == self.cfg.intermediate_layer:
                transform = self.transform_head(c)
                z = self.fusion(z, c)
        for block in self.st:
            z = block(z, history)
        return z, transform

    def zero_residual_outputs(self):
        """Kill every residual branch; forward becomes the identity on z."""
        for layer in self.mca:
            layer.zero_residual_outputs()
        self.fusion.zero_output()
        for block in self.st:
            block.zero_residual_outputs()

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def encode_tokens(
    vae: TriPlaneVae, grid: OccupancyGrid
) -> torch.Tensor:
    """Posterior-mean tri-plane tokens (T, C) for one grid."""
    z = vae.encode(grid, sample=False)
    return TriPlaneTokens.from_latent(z).flat


def tokens_to_grid(
    vae: TriPlaneVae, tokens: torch.Tensor, template: OccupancyGrid
) -> OccupancyGrid:
    """Flat tokens (T, C) -> decoded argmax occupancy on the template's lattice."""
    h, w, d = (
        vae.cfg.latent_dims[0],
        vae.cfg.latent_dims[1],
        vae.cfg.latent_dims[2],
    )
    grid_tokens = tokens.reshape(h, w + 2 * d, -1)
    z = TriPlaneTokens(grid=grid_tokens, d=d).to_latent()
    logits = vae.decode(z)
    labels = logits.argmax(-1).numpy().astype(template.labels.dtype)
    return OccupancyGrid(labels, template.voxel_size, template.origin.copy())


def rollout(
    initial_frames: list[OccupancyGrid],
    controls: list,
    vae: TriPlaneVae,
    predictor: OccPredictor,
) -> tuple[list[OccupancyGrid], list[torch.Tensor]]:
    """Autoregressive forecast of ``len(controls)`` future frames.

    Initial frames are padded (by repeating the oldest) to the k+1 context
    the predictor expects; encoding uses posterior means, so the whole
    rollout is deterministic.
    """
    if not controls:
        raise ValueError("need at least one control to roll out")
    if not initial_frames:
        raise ValueError("need at least one initial frame")
    k = predictor.cfg.history

    frames = list(initial_frames)
    if len(frames) < k + 1:
        frames = [frames[0]] * (k + 1 - len(frames)) + frames
    frames = frames[-(k + 1):]

    with torch.no_grad():
        latents = [encode_tokens(vae, g) for g in frames]
        buffer = HistoryBuffer(k)
        for tok in latents[:-1]:
            buffer.push(tok)
        current = latents[-1]

        out_grids: list[OccupancyGrid] = []
        out_latents: list[torch.Tensor] = []
        template = initial_frames[-1]
        for ctrl in controls:
            commands, wps = control_batch([ctrl], dtype=current.dtype)
            ctrl_tokens = predictor.control_embedder(commands, wps)
            z_next, _ = predictor(
                current[None], ctrl_tokens, buffer.stacked()[None]
            )
            z_next = z_next[0]
            out_latents.append(z_next)
            out_grids.append(tokens_to_grid(vae, z_next, template))
            buffer.push(current)
            current = z_next
    return out_grids, out_latents
