"""Toy video training: flow matching on colorized renders.

The synthetic "videos" are palette colors of the condition maps plus a
per-sequence style offset shared across views, so pixels are a
deterministic function of the condition up to that style draw; matching
the style across views is exactly what cross-view attention can learn.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch

from ..checkpoint import load_checkpoint, save_checkpoint
from ..core.grid import LabelPalette
from ..render.stack import colorize
from .flow import video_loss
from .model import ToyVideoModel, VideoModelConfig


@dataclass
class VideoTrainConfig:
    epochs: int = 40
    batch_size: int = 4
    lr: float = 2e-3
    seed: int = 0
    style_strength: float = 0.3
    checkpoint: str = ""
    log_path: str = ""


def make_toy_video_dataset(
    cond_stacks: list[np.ndarray],
    palette: LabelPalette,
    seed: int = 0,
    style_strength: float = 0.3,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Label stacks (n, t, h, w) -> (videos, conditions) tensors.

    videos: (S, n, t, 3, h, w) float32 in [-1, 1]; conditions: (S, n, t, h, w)
    int64.  The style offset is drawn once per sequence and shared across
    views and frames.
    """
    rng = np.random.default_rng(seed)
    videos, conds = [], []
    for stack in cond_stacks:
        n, t, h, w = stack.shape
        rgb = colorize(stack.reshape(-1, h, w), palette).reshape(n, t, h, w, 3)
        base = rgb.astype(np.float32) / 127.5 - 1.0
        offset = rng.uniform(-style_strength, style_strength, size=3).astype(np.float32)
        vid = np.clip(base + offset, -1.0, 1.0)
        videos.append(np.moveaxis(vid, -1, 2))  # (n, t, 3, h, w)
        conds.append(stack.astype(np.int64))
    return (
        torch.from_numpy(np.stack(videos)),
        torch.from_numpy(np.stack(conds)),
    )


def train_toy_video(
    videos: torch.Tensor,
    conditions: torch.Tensor,
    model_cfg: VideoModelConfig,
    cfg: VideoTrainConfig,
) -> tuple[ToyVideoModel, dict]:
    torch.manual_seed(cfg.seed)
    model = ToyVideoModel(model_cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(cfg.seed)

    history = []
    model.train()
    for epoch in range(cfg.epochs):
        perm = torch.randperm(len(videos), generator=gen)
        losses = []
        for i in range(0, len(videos), cfg.batch_size):
            idx = perm[i : i + cfg.batch_size]
            loss = video_loss(model, videos[idx], conditions[idx], gen)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history.append({"epoch": epoch, "loss": float(np.mean(losses))})
    model.eval()

    if cfg.checkpoint:
        save_video_model(cfg.checkpoint, model)
    if cfg.log_path:
        import json
        from pathlib import Path

        Path(cfg.log_path).parent.mkdir(parents=True, exist_ok=True)
        with open(cfg.log_path, "a") as f:
            for rec in history:
                f.write(json.dumps({"phase": "VIDEO", **rec}, sort_keys=True) + "\n")
    return model, {"history": history}


def save_video_model(path, model: ToyVideoModel) -> None:
    save_checkpoint(
        path, model.state_dict(), {"kind": "video", "config": asdict(model.cfg)}
    )


def load_video_model(path) -> ToyVideoModel:
    state, meta = load_checkpoint(path)
    if meta.get("kind") != "video":
        raise ValueError(f"checkpoint at {path} is not a video-model checkpoint")
    c = dict(meta["config"])
    c["image_size"] = tuple(c["image_size"])
    model = ToyVideoModel(VideoModelConfig(**c))
    model.load_state_dict(state)
    model.eval()
    return model
