"""Training phases: VAE pretraining, frozen-VAE predictor training, and
end-to-end fine-tuning on decoded forecasts."""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch.optim.lr_scheduler import CosineAnnealingLR

from ..checkpoint import load_checkpoint, save_checkpoint
from ..core.grid import OccupancyGrid, SceneSequence
from ..core.metrics import compute_iou, compute_miou
from ..predictor.losses import prediction_loss, transform_matrix_loss
from ..predictor.model import OccPredictor, PredictorConfig
from ..vae.losses import lovasz_softmax, vae_loss
from ..vae.model import TriPlaneVae, VaeConfig
from .config import TrainConfig
from .data import (
    frames_tensor,
    prediction_windows,
    sequence_controls,
    sequence_latents,
    tokens_to_plane_tensors,
)


def _append_log(log_path: str, record: dict) -> None:
    if not log_path:
        return
    Path(log_path).parent.mkdir(parents=True, exist_ok=True)
    with open(log_path, "a") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")


def _require_finite(loss: torch.Tensor, context: dict) -> None:
    if not torch.isfinite(loss):
        raise RuntimeError(f"non-finite loss {loss.item()} at {context}")


def reconstruction_metrics(
    vae: TriPlaneVae,
    seqs: list[SceneSequence],
    batch_size: int = 16,
    max_frames: int | None = None,
) -> tuple[float, float]:
    """(mean recon mIoU, mean recon IoU) with sampling disabled."""
    palette = seqs[0].palette
    grids = [f for s in seqs for f in s.frames]
    if max_frames is not None:
        grids = grids[:max_frames]
    labels = torch.from_numpy(np.stack([g.labels for g in grids]).astype("int64"))

    was_training = vae.training
    vae.eval()
    mious, ious = [], []
    with torch.no_grad():
        for i in range(0, len(labels), batch_size):
            batch = labels[i : i + batch_size]
            params = vae.encode_params(batch)
            logits = vae.decode_planes(
                params["mean_xy"], params["mean_yz"], params["mean_xz"]
            )
            pred = logits.argmax(-1).numpy()
            for b in range(len(batch)):
                g = grids[i + b]
                pg = OccupancyGrid(
                    pred[b].astype(g.labels.dtype), g.voxel_size, g.origin
                )
                mious.append(compute_miou(pg, g, palette)[1])
                ious.append(compute_iou(pg, g, palette.free_id))
    if was_training:
        vae.train()
    return float(np.mean(mious)), float(np.mean(ious))


# --------------------------------------------------------------------- VAE

def train_vae(
    seqs: list[SceneSequence], cfg: TrainConfig
) -> tuple[TriPlaneVae, dict]:
    """Minimize the VAE objective; keep the best-by-recon-mIoU weights."""
    torch.manual_seed(cfg.seed)
    H, W, D = seqs[0].frames[0].shape
    vcfg = VaeConfig(
        grid_shape=(H, W, D),
        n_classes=seqs[0].palette.n_classes,
        channels=cfg.model.channels,
        downsample=cfg.model.downsample,
        axis_layers=cfg.model.axis_layers,
        heads=cfg.model.heads,
        dropout=cfg.dropout,
        kl_weight=cfg.kl_weight,
    )
    vae = TriPlaneVae(vcfg)
    labels = frames_tensor(seqs)

    opt = torch.optim.Adam(vae.parameters(), lr=cfg.lr)
    steps_per_epoch = math.ceil(len(labels) / cfg.batch_size)
    sched = (
        CosineAnnealingLR(opt, T_max=cfg.epochs * steps_per_epoch)
        if cfg.cosine_schedule
        else None
    )
    gen = torch.Generator().manual_seed(cfg.seed)

    best_miou, best_state = -1.0, None
    history = []
    vae.train()
    for epoch in range(cfg.epochs):
        perm = torch.randperm(len(labels), generator=gen)
        epoch_losses = []
        for i in range(0, len(labels), cfg.batch_size):
            batch = labels[perm[i : i + cfg.batch_size]]
            params = vae.encode_params(batch)
            zs = vae.sample_planes(params, gen, sample=True)
            logits = vae.decode_planes(zs["z_xy"], zs["z_yz"], zs["z_xz"])
            total, parts = vae_loss(batch, logits, params, cfg.kl_weight)
            _require_finite(total, {"phase": "VAE", "epoch": epoch, "step": i})
            opt.zero_grad()
            total.backward()
            opt.step()
            if sched is not None:
                sched.step()
            epoch_losses.append(
                [total.item(), parts["ce"].item(), parts["lovasz"].item(), parts["kl"].item()]
            )
        record = {
            "phase": "VAE",
            "epoch": epoch,
            "loss": float(np.mean([r[0] for r in epoch_losses])),
            "ce": float(np.mean([r[1] for r in epoch_losses])),
            "lovasz": float(np.mean([r[2] for r in epoch_losses])),
            "kl": float(np.mean([r[3] for r in epoch_losses])),
        }
        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            miou, iou = reconstruction_metrics(vae, seqs)
            record["recon_miou"], record["recon_iou"] = miou, iou
            if miou > best_miou:
                best_miou = miou
                best_state = copy.deepcopy(vae.state_dict())
        history.append(record)
        _append_log(cfg.log_path, record)

    if best_state is not None:
        vae.load_state_dict(best_state)
    vae.eval()
    if cfg.checkpoint:
        save_vae(cfg.checkpoint, vae)
    return vae, {"history": history, "best_recon_miou": best_miou}


def save_vae(path, vae: TriPlaneVae) -> None:
    from dataclasses import asdict

    save_checkpoint(path, vae.state_dict(), {"kind": "vae", "config": asdict(vae.cfg)})


def load_vae(path) -> TriPlaneVae:
    state, meta = load_checkpoint(path)
    if meta.get("kind") != "vae":
        raise ValueError(f"checkpoint at {path} is not a VAE checkpoint")
    c = dict(meta["config"])
    c["grid_shape"] = tuple(c["grid_shape"])
    vae = TriPlaneVae(VaeConfig(**c))
    vae.load_state_dict(state)
    vae.eval()
    return vae


def save_predictor(path, predictor: OccPredictor) -> None:
    from dataclasses import asdict

    save_checkpoint(
        path,
        predictor.state_dict(),
        {"kind": "predictor", "config": asdict(predictor.cfg)},
    )


def load_predictor(path) -> OccPredictor:
    state, meta = load_checkpoint(path)
    if meta.get("kind") != "predictor":
        raise ValueError(f"checkpoint at {path} is not a predictor checkpoint")
    c = dict(meta["config"])
    c["latent_dims"] = tuple(c["latent_dims"])
    predictor = OccPredictor(PredictorConfig(**c))
    predictor.load_state_dict(state)
    predictor.eval()
    return predictor


# --------------------------------------------------------------- predictor

def _window_step_batch(lat, ctrl, windows, k: int, step: int):
    """Tensors for teacher-forced step ``step`` of each window in the batch."""
    z_in, hist, target, cmds, wps, mats = [], [], [], [], [], []
    for si, t0 in windows:
        j = t0 + k + step  # current frame index; predicts j+1 via control j
        z_in.append(lat[si][j])
        hist.append(lat[si][j - k : j])
        target.append(lat[si][j + 1])
        commands, waypoints, matrices = ctrl[si]
        cmds.append(commands[j])
        wps.append(waypoints[j])
        mats.append(matrices[j])
    return (
        torch.stack(z_in),
        torch.stack(hist),
        torch.stack(target),
        torch.stack(cmds),
        torch.stack(wps),
        torch.stack(mats),
    )


def train_predictor(
    seqs: list[SceneSequence], vae: TriPlaneVae, cfg: TrainConfig
) -> tuple[OccPredictor, dict]:
    """Teacher-forced latent regression with the VAE frozen."""
    torch.manual_seed(cfg.seed)
    vae.eval()
    for p in vae.parameters():
        p.requires_grad_(False)

    pcfg = PredictorConfig(
        latent_dims=vae.cfg.latent_dims,
        channels=vae.cfg.channels,
        mca_layers=cfg.model.mca_layers,
        intermediate_layer=cfg.model.intermediate_layer,
        st_blocks=cfg.model.st_blocks,
        heads=cfg.model.heads,
        history=cfg.model.history,
        reg_weight=cfg.reg_weight,
    )
    predictor = OccPredictor(pcfg)
    k, N = pcfg.history, cfg.forecast_steps

    lat = [sequence_latents(vae, s) for s in seqs]
    ctrl = [sequence_controls(s) for s in seqs]
    windows = prediction_windows(seqs, k, N)

    opt = torch.optim.Adam(predictor.parameters(), lr=cfg.lr)
    steps_per_epoch = math.ceil(len(windows) / cfg.batch_size)
    sched = (
        CosineAnnealingLR(opt, T_max=cfg.epochs * steps_per_epoch)
        if cfg.cosine_schedule
        else None
    )
    gen = torch.Generator().manual_seed(cfg.seed)

    history = []
    predictor.train()
    for epoch in range(cfg.epochs):
        perm = torch.randperm(len(windows), generator=gen)
        losses, regs = [], []
        for i in range(0, len(windows), cfg.batch_size):
            batch_windows = [windows[p] for p in perm[i : i + cfg.batch_size]]
            preds, targets, pmats, gmats = [], [], [], []
            for step in range(N):
                z_in, hist, tgt, cmds, wps, mats = _window_step_batch(
                    lat, ctrl, batch_windows, k, step
                )
                ctrl_tokens = predictor.control_embedder(cmds, wps)
                z_next, pmat = predictor(z_in, ctrl_tokens, hist)
                preds.append(z_next)
                targets.append(tgt)
                pmats.append(pmat)
                gmats.append(mats)
            total, parts = prediction_loss(
                preds, targets, pmats, gmats, cfg.betas, cfg.reg_weight
            )
            _require_finite(total, {"phase": "PREDICTOR", "epoch": epoch, "step": i})
            opt.zero_grad()
            total.backward()
            opt.step()
            if sched is not None:
                sched.step()
            losses.append(total.item())
            regs.append(parts["l_reg"].item())
        record = {
            "phase": "PREDICTOR",
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "l_reg": float(np.mean(regs)),
        }
        history.append(record)
        _append_log(cfg.log_path, record)

    predictor.eval()
    if cfg.checkpoint:
        save_predictor(cfg.checkpoint, predictor)
    return predictor, {"history": history}


# --------------------------------------------------------------------- E2E

def decoded_forecast_loss(
    vae: TriPlaneVae, tokens: torch.Tensor, target_labels: torch.Tensor
) -> torch.Tensor:
    """CE + Lovász of the decoded prediction against ground-truth labels."""
    planes = tokens_to_plane_tensors(tokens, vae.cfg.latent_dims)
    logits = vae.decode_planes(*planes)
    B, H, W, D, C = logits.shape
    ce = F.cross_entropy(logits.reshape(-1, C), target_labels.reshape(-1))
    probas = F.softmax(logits, dim=-1)
    lov = lovasz_softmax(
        probas.permute(0, 3, 1, 2, 4).reshape(B * D, H * W, C),
        target_labels.permute(0, 3, 1, 2).reshape(B * D, H * W),
    )
    return ce + lov


def e2e_window_loss(
    vae: TriPlaneVae,
    predictor: OccPredictor,
    labels_window: torch.Tensor,
    cmds: torch.Tensor,
    wps: torch.Tensor,
    gmats: torch.Tensor,
    betas,
    reg_weight: float,
    depth: int,
    latent_supervision: bool = False,
) -> tuple[torch.Tensor, dict]:
    """Joint loss over one batched window, rolled out ``depth`` steps.

    labels_window: (B, k+1+depth, H, W, D); cmds/wps/gmats hold the control
    for steps k .. k+depth-1 as (B, depth, ...).  With
    ``latent_supervision`` the decoded reconstruction terms are replaced by
    latent MSE against the encoder means, which reduces the objective to the
    predictor-phase loss.
    """
    k = predictor.cfg.history
    B, F_total = labels_window.shape[:2]
    assert F_total == k + 1 + depth

    flat = labels_window.reshape(B * F_total, *labels_window.shape[2:])
    params = vae.encode_params(flat)
    toks = torch.cat(
        [params["mean_xy"], params["mean_yz"], params["mean_xz"]], dim=2
    )
    toks = toks.reshape(B, F_total, -1, toks.shape[-1])  # (B, F, T, C)

    hist = toks[:, :k]
    current = toks[:, k]
    preds, targets, pmats, gmat_list = [], [], [], []
    recon_terms = []
    for i in range(depth):
        ctrl_tokens = predictor.control_embedder(cmds[:, i], wps[:, i])
        z_next, pmat = predictor(current, ctrl_tokens, hist)
        preds.append(z_next)
        pmats.append(pmat)
        gmat_list.append(gmats[:, i])
        if latent_supervision:
            targets.append(toks[:, k + 1 + i])
        else:
            recon_terms.append(
                decoded_forecast_loss(vae, z_next, labels_window[:, k + 1 + i])
            )
        hist = torch.cat([hist[:, 1:], current[:, None]], dim=1)
        current = z_next

    if latent_supervision:
        return prediction_loss(preds, targets, pmats, gmat_list, betas, reg_weight)

    betas = list(betas) + [1.0] * (depth - len(list(betas)))
    total = sum(betas[i] * recon_terms[i] for i in range(depth))
    l_reg = sum(
        transform_matrix_loss(p, g) for p, g in zip(pmats, gmat_list)
    ) / depth
    total = total + reg_weight * l_reg
    return total, {"recon_terms": recon_terms, "l_reg": l_reg}


def rollout_depth_at(epoch: int, epochs: int, n_steps: int) -> int:
    """Ramp 1 -> n_steps over the first third of the phase."""
    ramp = max(1, epochs // 3)
    frac = min(1.0, epoch / ramp)
    return max(1, min(n_steps, 1 + round((n_steps - 1) * frac)))


def _heldout_forecast_miou(
    vae: TriPlaneVae,
    predictor: OccPredictor,
    val_seqs: list[SceneSequence],
    n_steps: int,
) -> float:
    """Mean forecast mIoU over held-out sequences at the training horizon."""
    from ..predictor.model import rollout as rollout_fn
    from ..core.metrics import compute_miou

    palette = val_seqs[0].palette
    k = predictor.cfg.history
    vals = []
    vae.eval()
    predictor.eval()
    for seq in val_seqs:
        if len(seq.frames) < k + 1 + n_steps:
            continue
        preds, _ = rollout_fn(
            seq.frames[: k + 1], seq.controls[k : k + n_steps], vae, predictor
        )
        for p, g in zip(preds, seq.frames[k + 1 : k + 1 + n_steps]):
            vals.append(compute_miou(p, g, palette)[1])
    return float(np.mean(vals)) if vals else float("nan")


def train_e2e(
    seqs: list[SceneSequence],
    vae: TriPlaneVae,
    predictor: OccPredictor,
    cfg: TrainConfig,
    val_seqs: list[SceneSequence] | None = None,
) -> dict:
    """Unfreeze everything and optimize decoded multi-step forecasts.

    With ``val_seqs`` the loop tracks held-out forecast mIoU at the eval
    cadence and restores the best weights at the end (forecasting tends to
    peak and then overfit during this phase).
    """
    torch.manual_seed(cfg.seed)
    for p in vae.parameters():
        p.requires_grad_(True)
    vae.train()
    predictor.train()

    k, N = predictor.cfg.history, cfg.forecast_steps
    ctrl = [sequence_controls(s) for s in seqs]
    all_labels = [
        torch.from_numpy(np.stack([f.labels for f in s.frames]).astype("int64"))
        for s in seqs
    ]
    windows = prediction_windows(seqs, k, N)

    opt = torch.optim.Adam(
        list(vae.parameters()) + list(predictor.parameters()), lr=cfg.lr
    )
    steps_per_epoch = math.ceil(len(windows) / cfg.batch_size)
    sched = (
        CosineAnnealingLR(opt, T_max=cfg.epochs * steps_per_epoch)
        if cfg.cosine_schedule
        else None
    )
    gen = torch.Generator().manual_seed(cfg.seed)

    recon_start = reconstruction_metrics(vae, seqs)
    history = []
    best_val, best_state = -1.0, None
    for epoch in range(cfg.epochs):
        vae.train()
        predictor.train()
        depth = rollout_depth_at(epoch, cfg.epochs, N)
        perm = torch.randperm(len(windows), generator=gen)
        losses = []
        for i in range(0, len(windows), cfg.batch_size):
            batch_windows = [windows[p] for p in perm[i : i + cfg.batch_size]]
            lw, cw, ww, gw = [], [], [], []
            for si, t0 in batch_windows:
                lw.append(all_labels[si][t0 : t0 + k + 1 + depth])
                commands, waypoints, matrices = ctrl[si]
                cw.append(commands[t0 + k : t0 + k + depth])
                ww.append(waypoints[t0 + k : t0 + k + depth])
                gw.append(matrices[t0 + k : t0 + k + depth])
            total, _ = e2e_window_loss(
                vae,
                predictor,
                torch.stack(lw),
                torch.stack(cw),
                torch.stack(ww),
                torch.stack(gw),
                cfg.betas,
                cfg.reg_weight,
                depth,
            )
            _require_finite(total, {"phase": "E2E", "epoch": epoch, "step": i})
            opt.zero_grad()
            total.backward()
            opt.step()
            if sched is not None:
                sched.step()
            losses.append(total.item())
        record = {
            "phase": "E2E",
            "epoch": epoch,
            "depth": depth,
            "loss": float(np.mean(losses)),
        }
        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            miou, iou = reconstruction_metrics(vae, seqs)
            record["recon_miou"], record["recon_iou"] = miou, iou
            if val_seqs:
                val_miou = _heldout_forecast_miou(vae, predictor, val_seqs, N)
                record["val_forecast_miou"] = val_miou
                if val_miou > best_val:
                    best_val = val_miou
                    best_state = (
                        copy.deepcopy(vae.state_dict()),
                        copy.deepcopy(predictor.state_dict()),
                    )
        history.append(record)
        _append_log(cfg.log_path, record)

    if best_state is not None:
        vae.load_state_dict(best_state[0])
        predictor.load_state_dict(best_state[1])
    vae.eval()
    predictor.eval()
    recon_end = reconstruction_metrics(vae, seqs)
    result = {
        "history": history,
        "recon_miou_start": recon_start[0],
        "recon_miou_end": recon_end[0],
        "recon_miou_decreased": recon_end[0] < recon_start[0],
    }
    if cfg.checkpoint:
        save_vae(str(cfg.checkpoint) + "_vae", vae)
        save_predictor(str(cfg.checkpoint) + "_predictor", predictor)
    _append_log(
        cfg.log_path,
        {
            "phase": "E2E",
            "event": "summary",
            "recon_miou_start": recon_start[0],
            "recon_miou_end": recon_end[0],
            "recon_miou_decreased": result["recon_miou_decreased"],
        },
    )
    return result
