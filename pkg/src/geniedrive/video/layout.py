"""Token layout moves between per-view sequences and same-height groups.

Multi-view attention runs over groups that share a (time, height) slot:
(n, t*h*w, C) rearranges to (t*h, n*w, C), so each row holds the same
image row across all views, side by side.
"""

from __future__ import annotations

import torch
from einops import rearrange


def _check(tokens: torch.Tensor, n: int, t: int, h: int, w: int) -> None:
    if tokens.shape[-3] != n or tokens.shape[-2] != t * h * w:
        raise ValueError(
            f"token tensor {tuple(tokens.shape)} does not factor as "
            f"n={n}, t*h*w={t}*{h}*{w}"
        )


def rearrange_views(
    tokens: torch.Tensor, n: int, t: int, h: int, w: int
) -> torch.Tensor:
    """(n, t*h*w, C) -> (t*h, n*w, C); a leading batch dim is allowed."""
    _check(tokens, n, t, h, w)
    if tokens.ndim == 3:
        return rearrange(tokens, "n (t h w) c -> (t h) (n w) c", t=t, h=h, w=w)
    return rearrange(tokens, "b n (t h w) c -> b (t h) (n w) c", t=t, h=h, w=w)


def inverse_rearrange_views(
    grouped: torch.Tensor, n: int, t: int, h: int, w: int
) -> torch.Tensor:
    """Exact inverse of :func:`rearrange_views`."""
    if grouped.shape[-2] != n * w or grouped.shape[-3] != t * h:
        raise ValueError(
            f"grouped tensor {tuple(grouped.shape)} does not factor as "
            f"t*h={t}*{h}, n*w={n}*{w}"
        )
    if grouped.ndim == 3:
        return rearrange(grouped, "(t h) (n w) c -> n (t h w) c", t=t, h=h, n=n, w=w)
    return rearrange(grouped, "b (t h) (n w) c -> b n (t h w) c", t=t, h=h, n=n, w=w)
