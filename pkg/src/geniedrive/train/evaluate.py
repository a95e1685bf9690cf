"""Reconstruction and forecasting evaluation at per-second horizons."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from ..core.grid import OccupancyGrid, SceneSequence
from ..core.metrics import compute_iou, compute_miou
from ..predictor.model import OccPredictor, rollout
from ..vae.model import TriPlaneVae
from .loops import reconstruction_metrics

FULL_SCALE_PARAMS = 3.47e6  # full-scale reference for the informational note


@dataclass
class EvalReport:
    recon_miou: float
    recon_iou: float
    horizons: dict  # str(seconds) -> {"step", "miou", "iou"}
    avg_miou: float
    avg_iou: float
    fps: float
    params: dict
    wall_clock: float
    notes: list = field(default_factory=list)

    def __post_init__(self):
        metrics = [self.recon_miou, self.recon_iou, self.avg_miou, self.avg_iou]
        metrics += [h["miou"] for h in self.horizons.values()]
        metrics += [h["iou"] for h in self.horizons.values()]
        if any(not (0.0 <= m <= 1.0) for m in metrics):
            raise ValueError(f"metrics must lie in [0, 1]: {metrics}")
        if any(v <= 0 for v in self.params.values()):
            raise ValueError(f"parameter counts must be positive: {self.params}")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        return EvalReport(**json.loads(text))

    def summary_lines(self) -> list[str]:
        lines = [
            f"recon   mIoU {self.recon_miou:.4f}  IoU {self.recon_iou:.4f}",
        ]
        for sec in sorted(self.horizons, key=float):
            h = self.horizons[sec]
            lines.append(
                f"{float(sec):>4.1f}s   mIoU {h['miou']:.4f}  IoU {h['iou']:.4f}"
                f"  (step {h['step']})"
            )
        lines.append(f"avg     mIoU {self.avg_miou:.4f}  IoU {self.avg_iou:.4f}")
        lines.append(
            f"fps {self.fps:.2f}  params "
            + " ".join(f"{k}={v:,}" for k, v in self.params.items())
        )
        lines.extend(self.notes)
        return lines


def horizon_steps(horizons_s, fps: float) -> list[int]:
    """Seconds -> rollout step counts (1-based) at the sequence frame rate."""
    steps = [round(s * fps) for s in horizons_s]
    if any(s < 1 for s in steps):
        raise ValueError(f"horizons {horizons_s} map below one step at fps={fps}")
    return steps


def forecast_metrics(
    pred_frames: list[OccupancyGrid],
    gt_frames: list[OccupancyGrid],
    palette,
) -> list[dict]:
    """Aligned per-step {'miou', 'iou'} for a predicted sequence."""
    if len(pred_frames) != len(gt_frames):
        raise ValueError(
            f"prediction/target length mismatch: {len(pred_frames)} vs {len(gt_frames)}"
        )
    out = []
    for p, g in zip(pred_frames, gt_frames):
        out.append(
            {
                "miou": compute_miou(p, g, palette)[1],
                "iou": compute_iou(p, g, palette.free_id),
            }
        )
    return out


def evaluate(
    vae: TriPlaneVae,
    predictor: OccPredictor,
    seqs: list[SceneSequence],
    horizons_s=(1.0, 2.0, 3.0),
    max_sequences: int | None = None,
) -> EvalReport:
    t_start = time.time()
    palette = seqs[0].palette
    fps_data = seqs[0].fps
    steps = horizon_steps(horizons_s, fps_data)
    max_step = max(steps)
    k = predictor.cfg.history

    recon_miou, recon_iou = reconstruction_metrics(vae, seqs)

    usable = [s for s in seqs if len(s.frames) >= k + 1 + max_step]
    if not usable:
        raise ValueError(
            f"no sequence long enough for horizon {max_step} steps with k={k}"
        )
    if max_sequences is not None:
        usable = usable[:max_sequences]

    per_step = np.zeros((len(usable), max_step, 2))
    frames_done = 0
    t_roll = time.time()
    for i, seq in enumerate(usable):
        context = seq.frames[: k + 1]
        controls = seq.controls[k : k + max_step]
        preds, _ = rollout(context, controls, vae, predictor)
        gts = seq.frames[k + 1 : k + 1 + max_step]
        for j, m in enumerate(forecast_metrics(preds, gts, palette)):
            per_step[i, j] = (m["miou"], m["iou"])
        frames_done += max_step
    roll_time = time.time() - t_roll
    fps = frames_done / roll_time if roll_time > 0 else float(frames_done)

    horizons = {}
    for s, n in zip(horizons_s, steps):
        horizons[str(float(s))] = {
            "step": n,
            "miou": float(per_step[:, n - 1, 0].mean()),
            "iou": float(per_step[:, n - 1, 1].mean()),
        }
    avg_miou = float(np.mean([h["miou"] for h in horizons.values()]))
    avg_iou = float(np.mean([h["iou"] for h in horizons.values()]))

    params = {
        "vae": vae.parameter_count(),
        "predictor": predictor.parameter_count(),
    }
    params["total"] = params["vae"] + params["predictor"]
    notes = [
        f"total params {params['total']:,} vs full-scale reference "
        f"{FULL_SCALE_PARAMS / 1e6:.2f} M ({params['total'] / FULL_SCALE_PARAMS:.3f}x)"
    ]
    return EvalReport(
        recon_miou=recon_miou,
        recon_iou=recon_iou,
        horizons=horizons,
        avg_miou=avg_miou,
        avg_iou=avg_iou,
        fps=fps,
        params=params,
        wall_clock=time.time() - t_start,
        notes=notes,
    )
