"""VAE objective: cross-entropy + Lovász-softmax + KL against N(0, I).

The Lovász-softmax term optimizes a convex surrogate of per-class Jaccard
loss.  For each sample (here: each z-slice of each grid in the batch) and
each class present in its ground truth, prediction errors are sorted
descending and dotted with the discrete gradient of the Jaccard loss
evaluated along that order.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


def _lovasz_grad_batched(fg_sorted: torch.Tensor) -> torch.Tensor:
    """fg_sorted (..., P) of 0/1 ground-truth indicators in error order."""
    gts = fg_sorted.sum(dim=-1, keepdim=True)
    intersection = gts - fg_sorted.cumsum(dim=-1)
    union = gts + (1.0 - fg_sorted).cumsum(dim=-1)
    jaccard = 1.0 - intersection / union
    return torch.cat([jaccard[..., :1], jaccard[..., 1:] - jaccard[..., :-1]], dim=-1)


def lovasz_softmax(probas: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Batched Lovász-softmax.

    probas: (S, P, C) class probabilities per sample; labels: (S, P) ints.
    Classes absent from a sample's ground truth are skipped; samples with
    no present class contribute nothing.
    """
    S, P, C = probas.shape
    fg = F.one_hot(labels, C).to(probas.dtype).permute(0, 2, 1)  # (S, C, P)
    errors = (fg - probas.permute(0, 2, 1)).abs()
    errors_sorted, perm = torch.sort(errors, dim=-1, descending=True)
    fg_sorted = torch.gather(fg, -1, perm)
    grad = _lovasz_grad_batched(fg_sorted)
    per_class = (errors_sorted * grad).sum(dim=-1)  # (S, C)

    present = fg.sum(dim=-1) > 0
    if not present.any():
        return probas.new_zeros(())
    return per_class[present].mean()


def kl_standard_normal(mean: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """Mean analytic KL( N(mean, diag e^logvar) || N(0, I) ) per element."""
    return 0.5 * (mean.pow(2) + logvar.exp() - 1.0 - logvar).mean()


def vae_loss(
    labels: torch.Tensor,
    logits: torch.Tensor,
    posterior: dict[str, torch.Tensor],
    kl_weight: float,
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """labels (B, H, W, D) ints, logits (B, H, W, D, n_classes), posterior
    holding mean_/logvar_ per plane.  Returns (total, parts)."""
    if not torch.isfinite(logits).all():
        raise ValueError("non-finite logits")
    B, H, W, D, C = logits.shape

    ce = F.cross_entropy(logits.reshape(-1, C), labels.reshape(-1))

    # One Lovász sample per z-slice: (B*D, H*W, C).
    probas = F.softmax(logits, dim=-1)
    slice_probas = probas.permute(0, 3, 1, 2, 4).reshape(B * D, H * W, C)
    slice_labels = labels.permute(0, 3, 1, 2).reshape(B * D, H * W)
    lov = lovasz_softmax(slice_probas, slice_labels)

    kl = sum(
        kl_standard_normal(posterior[f"mean_{p}"], posterior[f"logvar_{p}"])
        for p in ("xy", "yz", "xz")
    )

    total = ce + lov + kl_weight * kl
    return total, {"ce": ce, "lovasz": lov, "kl": kl}
