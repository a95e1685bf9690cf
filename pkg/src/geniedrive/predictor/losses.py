"""Latent prediction objective: per-step weighted MSE against the target
latents plus the transform-head regression term."""

from __future__ import annotations

import torch


def transform_matrix_loss(
    predicted: torch.Tensor, target: torch.Tensor
) -> torch.Tensor:
    """Squared Frobenius distance between 3x3 transforms, mean over batch."""
    return (predicted - target).pow(2).sum(dim=(-2, -1)).mean()


def prediction_loss(
    predicted: list[torch.Tensor],
    targets: list[torch.Tensor],
    predicted_transforms: list[torch.Tensor],
    gt_transforms: list[torch.Tensor],
    betas,
    reg_weight: float,
) -> tuple[torch.Tensor, dict]:
    """Lists are indexed by forecast step t; entries are batched tensors.

    total = sum_t beta_t * MSE(z_hat_t, z_t) + lambda * mean_t L_reg(t)
    """
    if not (
        len(predicted) == len(targets)
        == len(predicted_transforms) == len(gt_transforms)
    ):
        raise ValueError(
            f"step-list lengths differ: {len(predicted)} predictions, "
            f"{len(targets)} targets, {len(predicted_transforms)} / "
            f"{len(gt_transforms)} transforms"
        )
    n_steps = len(predicted)
    betas = list(betas) + [1.0] * (n_steps - len(list(betas)))

    latent_l2 = []
    total = predicted[0].new_zeros(())
    for t in range(n_steps):
        mse = (predicted[t] - targets[t]).pow(2).mean()
        latent_l2.append(mse)
        total = total + betas[t] * mse

    l_reg = sum(
        transform_matrix_loss(p, g)
        for p, g in zip(predicted_transforms, gt_transforms)
    ) / n_steps
    total = total + reg_weight * l_reg
    return total, {"latent_l2": latent_l2, "l_reg": l_reg}
