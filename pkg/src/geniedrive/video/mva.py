"""Normalized multi-view attention.

Self-attention runs independently inside each (time, height) group over
its n*w tokens; the attention output is renormalized to the trunk's
per-group statistics before the residual add, scaled by eta:

    Z' = Z + eta * ((M - mu_M) / sigma_M * sigma_Z + mu_Z)

Statistics are taken per group over its token and channel entries
jointly.  The divisor is guarded as max(sigma_M, eps) so the rescaled
branch carries exactly (mu_Z, sigma_Z) whenever sigma_M >= eps.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .layout import inverse_rearrange_views, rearrange_views


@dataclass
class MvaBlockParams:
    channels: int
    heads: int = 4
    eta: float = 1.0
    eps: float = 1e-5
    normalized: bool = True  # False reproduces the naive residual variant

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be >= 0")


class NormalizedMva(nn.Module):
    def __init__(self, params: MvaBlockParams):
        super().__init__()
        self.params = params
        self.attn = nn.MultiheadAttention(
            params.channels, params.heads, batch_first=True
        )

    def attend_groups(self, grouped: torch.Tensor) -> torch.Tensor:
        """Self-attention within each group; grouped is (B, G, S, C)."""
        B, G, S, C = grouped.shape
        flat = grouped.reshape(B * G, S, C)
        out, _ = self.attn(flat, flat, flat)
        return out.reshape(B, G, S, C)

    def forward_grouped(self, grouped: torch.Tensor) -> torch.Tensor:
        """grouped (B, G, S, C): G = t*h groups of S = n*w tokens."""
        p = self.params
        if p.eta == 0.0:
            return grouped
        M = self.attend_groups(grouped)
        if not p.normalized:
            return grouped + p.eta * M
        branch = self.rescaled_branch(grouped, M)
        return grouped + p.eta * branch

    def rescaled_branch(self, grouped: torch.Tensor, M: torch.Tensor) -> torch.Tensor:
        eps = self.params.eps
        dims = (-2, -1)
        mu_m = M.mean(dim=dims, keepdim=True)
        sigma_m = M.std(dim=dims, keepdim=True, correction=0)
        mu_z = grouped.mean(dim=dims, keepdim=True)
        sigma_z = grouped.std(dim=dims, keepdim=True, correction=0)
        return (M - mu_m) / sigma_m.clamp_min(eps) * sigma_z + mu_z

    def forward(
        self, tokens: torch.Tensor, n: int, t: int, h: int, w: int
    ) -> torch.Tensor:
        """tokens (B, n, t*h*w, C) -> same shape after grouped attention."""
        grouped = rearrange_views(tokens, n, t, h, w)
        out = self.forward_grouped(grouped)
        return inverse_rearrange_views(out, n, t, h, w)
