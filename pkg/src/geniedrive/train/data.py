"""Dataset access: sequence directories on disk plus tensor views for training."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from ..core.grid import SceneSequence
from ..core.seqio import load_sequence
from ..predictor.control import control_batch
from ..vae.model import TriPlaneVae


def load_dataset(path) -> list[SceneSequence]:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"dataset directory {path} does not exist")
    seq_dirs = sorted(p for p in path.iterdir() if (p / "manifest").is_file())
    if not seq_dirs:
        raise FileNotFoundError(f"no sequences under {path}")
    return [load_sequence(p) for p in seq_dirs]


def frames_tensor(seqs: list[SceneSequence]) -> torch.Tensor:
    """All frames of all sequences stacked as int64 (N, H, W, D)."""
    stacked = np.stack([f.labels for s in seqs for f in s.frames])
    return torch.from_numpy(stacked.astype("int64"))


def sequence_latents(
    vae: TriPlaneVae, seq: SceneSequence, batch_size: int = 32
) -> torch.Tensor:
    """Posterior-mean tokens for every frame: (F, T, C), no grad."""
    labels = torch.from_numpy(
        np.stack([f.labels for f in seq.frames]).astype("int64")
    )
    outs = []
    with torch.no_grad():
        for i in range(0, len(labels), batch_size):
            params = vae.encode_params(labels[i : i + batch_size])
            toks = torch.cat(
                [params["mean_xy"], params["mean_yz"], params["mean_xz"]], dim=2
            )
            outs.append(toks.reshape(toks.shape[0], -1, toks.shape[-1]))
    return torch.cat(outs)


def sequence_controls(seq: SceneSequence):
    """Per-step (command, waypoints) tensors plus gt transform matrices."""
    commands, wps = control_batch(seq.controls)
    mats = torch.stack(
        [
            torch.from_numpy(c.gt_transform.as_matrix()).to(torch.float32)
            for c in seq.controls
        ]
    )
    return commands, wps, mats


def prediction_windows(
    seqs: list[SceneSequence], k: int, n_steps: int
) -> list[tuple[int, int]]:
    """All (sequence index, start) pairs with k+1 context plus n_steps targets."""
    windows = []
    for si, seq in enumerate(seqs):
        last_start = len(seq.frames) - (k + 1) - n_steps
        for t0 in range(0, last_start + 1):
            windows.append((si, t0))
    if not windows:
        raise ValueError(
            f"no windows: sequences are too short for k={k} plus {n_steps} steps"
        )
    return windows


def tokens_to_plane_tensors(tokens: torch.Tensor, dims: tuple[int, int, int]):
    """Batched flat tokens (B, T, C) -> three plane tensors for decoding."""
    h, w, d = dims
    B, T, C = tokens.shape
    grid = tokens.reshape(B, h, w + 2 * d, C)
    return grid[:, :, :w], grid[:, :, w : w + d], grid[:, :, w + d :]
