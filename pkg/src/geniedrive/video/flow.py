"""Rectified-flow training and sampling on straight-line interpolants.

The velocity target is v = x1 - x0 along x_t = (1 - t) x0 + t x1; a model
u(x_t, cond, t) regresses it with squared error.  Sampling starts from
noise at t=1 and integrates dx/dt = u backward to t=0 with explicit Euler.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class FlowSample:
    x0: torch.Tensor
    x1: torch.Tensor
    time: float
    x_t: torch.Tensor
    v: torch.Tensor

    def __post_init__(self):
        if self.x0.shape != self.x1.shape:
            raise ValueError(
                f"endpoint shape mismatch: {tuple(self.x0.shape)} vs {tuple(self.x1.shape)}"
            )
        if not 0.0 <= self.time <= 1.0:
            raise ValueError(f"time must lie in [0, 1], got {self.time}")
        expected_xt = (1.0 - self.time) * self.x0 + self.time * self.x1
        expected_v = self.x1 - self.x0
        tol = 1e-5 * (1.0 + self.x0.abs().max() + self.x1.abs().max())
        if (self.x_t - expected_xt).abs().max() > tol:
            raise ValueError("x_t is not the straight-line interpolant")
        if (self.v - expected_v).abs().max() > tol:
            raise ValueError("v is not x1 - x0")


def flow_interpolate(x0: torch.Tensor, x1: torch.Tensor, time: float) -> FlowSample:
    if x0.shape != x1.shape:
        raise ValueError(
            f"endpoint shape mismatch: {tuple(x0.shape)} vs {tuple(x1.shape)}"
        )
    x_t = (1.0 - time) * x0 + time * x1
    return FlowSample(x0=x0, x1=x1, time=float(time), x_t=x_t, v=x1 - x0)


def video_loss(
    model,
    x0: torch.Tensor,
    condition: torch.Tensor,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Mean squared velocity error over one batch.

    x0: (B, n, t, c, h, w) clean videos; condition: (B, n, t, h_img, w_img)
    label maps.  Time draws uniformly per batch element, noise is standard
    normal; both come from ``generator`` so losses are reproducible.
    """
    if condition.shape[:3] != x0.shape[:3]:
        raise ValueError(
            f"condition {tuple(condition.shape)} does not pair with video "
            f"{tuple(x0.shape)}"
        )
    B = x0.shape[0]
    time = torch.rand(B, generator=generator, dtype=x0.dtype)
    x1 = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    tview = time.reshape(B, *([1] * (x0.ndim - 1)))
    x_t = (1.0 - tview) * x0 + tview * x1
    v = x1 - x0
    pred = model(x_t, condition, time)
    loss = (pred - v).pow(2).mean()
    if not torch.isfinite(loss):
        raise RuntimeError("non-finite flow-matching loss")
    return loss


def sample_video(
    model,
    condition: torch.Tensor,
    steps: int,
    seed: int = 0,
) -> torch.Tensor:
    """Euler-integrate the learned field from noise back to data.

    condition: (B, n, t, h_img, w_img) label maps; returns (B, n, t, c, h, w)
    per the model's configured video shape.  Deterministic given the seed.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    gen = torch.Generator().manual_seed(seed)
    shape = model.video_shape(condition.shape[0])
    x = torch.randn(shape, generator=gen)
    dt = 1.0 / steps
    with torch.no_grad():
        for i in range(steps):
            t = 1.0 - i * dt
            time = torch.full((shape[0],), t, dtype=x.dtype)
            x = x - dt * model(x, condition, time)
    return x
