"""Command-line entry point.

Subcommands cover the whole two-stage pipeline: dataset generation, the
three training phases, rollout, rendering, occupancy editing, toy video
training/sampling, evaluation, and a `pipeline` command chaining them all.

Every run writes a RunManifest JSON next to its output directory
(``<out>.run.json``) recording the command, a hash of the normalized
config, seed, revision, timestamps and output paths; the artifact
directories themselves stay byte-reproducible for equal config + seed.

Exit codes: 0 success, 2 configuration error, 1 runtime failure.
``GENIEDRIVE_DATA_DIR``, when set, is the root for relative dataset paths.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core.edit import EditSpec, edit_grid
from .core.grid import SceneSequence
from .core.seqio import load_sequence, save_sequence
from .core.synthetic import SceneGenConfig, generate_synthetic_sequence
from .render.splat import render_sequence
from .render.stack import load_condition_stack, save_condition_stack
from .train.config import ConfigError, TrainConfig, dataclass_from_dict
from .train.data import load_dataset
from .train.evaluate import evaluate
from .train.loops import (
    load_predictor,
    load_vae,
    train_e2e,
    train_predictor,
    train_vae,
)
from .video.io import save_video_frames_png, save_video_tensor
from .video.model import VideoModelConfig
from .video.train import (
    VideoTrainConfig,
    load_video_model,
    make_toy_video_dataset,
    train_toy_video,
)

# ------------------------------------------------------------------ plumbing


def resolve_data_path(path: str) -> Path:
    """Relative dataset paths resolve under GENIEDRIVE_DATA_DIR when set."""
    p = Path(path)
    root = os.environ.get("GENIEDRIVE_DATA_DIR")
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _revision() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


class RunManifest:
    def __init__(self, command: str, config: dict, seed: int, out_dir: Path):
        self.data = {
            "command": command,
            "config_hash": config_hash(config),
            "seed": seed,
            "revision": _revision(),
            "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "finished": None,
            "status": "running",
            "outputs": [],
        }
        self.path = out_dir.parent / (out_dir.name + ".run.json")

    def add_output(self, path) -> None:
        self.data["outputs"].append(str(path))

    def finish(self, status: str, error: str | None = None, failed_stage: str | None = None):
        self.data["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        self.data["status"] = status
        if error:
            self.data["error"] = error
        if failed_stage:
            self.data["failed_stage"] = failed_stage
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True))


def load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {p} is not valid JSON: {e}") from e


# ------------------------------------------------------------- stage configs


@dataclass
class GenDataConfig:
    n_sequences: int = 16
    seed: int = 0
    scene: SceneGenConfig = field(default_factory=SceneGenConfig)

    def __post_init__(self):
        if self.n_sequences < 1:
            raise ConfigError("n_sequences must be >= 1")


@dataclass
class PipelineConfig:
    """Chained desk-scale run; stage outputs live under one root."""

    gen: GenDataConfig = field(default_factory=GenDataConfig)
    val_sequences: int = 6
    val_seed_offset: int = 10_000
    vae: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=40))
    predictor: TrainConfig = field(
        default_factory=lambda: TrainConfig(epochs=25, lr=1e-3, forecast_steps=6)
    )
    e2e: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            epochs=8, lr=3e-4, batch_size=8, forecast_steps=6
        )
    )
    rollout_past: int = 4
    rollout_future: int = 6
    render_alpha: float = 0.95
    render_png: bool = False
    video_model: VideoModelConfig = field(default_factory=VideoModelConfig)
    video_train: VideoTrainConfig = field(default_factory=VideoTrainConfig)
    sample_steps: int = 20
    horizons: tuple = (1.0, 2.0, 3.0)


# ------------------------------------------------------------------- stages


def run_gen_data(cfg: GenDataConfig, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(cfg.n_sequences):
        seq = generate_synthetic_sequence(cfg.scene, seed=cfg.seed + i)
        seq_dir = out / f"seq_{i:04d}"
        save_sequence(seq, seq_dir)
        written.append(seq_dir)
    return written


def _load_sequences(path: Path) -> list[SceneSequence]:
    """Accept either a dataset directory of sequences or a single sequence."""
    if (path / "manifest").is_file():
        return [load_sequence(path)]
    return load_dataset(path)


def run_rollout(
    vae_path: Path, pred_path: Path, data: Path, out: Path,
    past: int, future: int, sequence_index: int = 0,
) -> dict:
    from .predictor.model import rollout as rollout_fn
    from .train.evaluate import forecast_metrics

    vae = load_vae(vae_path)
    predictor = load_predictor(pred_path)
    seqs = _load_sequences(data)
    if not 0 <= sequence_index < len(seqs):
        raise ConfigError(f"sequence index {sequence_index} out of range")
    seq = seqs[sequence_index]
    if past < 1 or future < 1:
        raise ConfigError("need past >= 1 and future >= 1")
    if len(seq.controls) < past - 1 + future:
        raise ConfigError(
            f"sequence has {len(seq.controls)} controls; need {past - 1 + future}"
        )
    context = seq.frames[:past]
    controls = seq.controls[past - 1 : past - 1 + future]
    preds, _ = rollout_fn(context, controls, vae, predictor)

    pred_seq = SceneSequence(
        frames=context + preds,
        controls=seq.controls[: past - 1 + future],
        ego_poses=seq.ego_poses[: past + future],
        camera_rig=seq.camera_rig,
        fps=seq.fps,
        palette=seq.palette,
    )
    out.mkdir(parents=True, exist_ok=True)
    save_sequence(pred_seq, out / "pred_seq")

    result = {"frames": len(preds), "out": str(out / "pred_seq")}
    gt = seq.frames[past : past + future]
    if len(gt) == future:
        metrics = forecast_metrics(preds, gt, seq.palette)
        result["per_step"] = metrics
        result["avg_miou"] = float(np.mean([m["miou"] for m in metrics]))
    (out / "rollout_metrics.json").write_text(
        json.dumps(result, indent=2, sort_keys=True)
    )
    return result


def run_render(data: Path, out: Path, alpha: float, png: bool) -> list[Path]:
    seqs = _load_sequences(data)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, seq in enumerate(seqs):
        maps = render_sequence(seq.frames, seq.camera_rig, seq.palette, alpha)
        stack_dir = out / f"cond_{i:04d}"
        save_condition_stack(maps, seq.palette, stack_dir, write_png=png)
        written.append(stack_dir)
    return written


def run_edit(
    data: Path, out: Path, op: str, bbox, class_id: int | None, frame: int | None
) -> Path:
    seq = load_sequence(data)
    spec = (
        EditSpec.remove(bbox)
        if op == "remove"
        else EditSpec.insert(bbox, class_id)
    )
    n_classes, free_id = seq.palette.n_classes, seq.palette.free_id
    targets = range(len(seq.frames)) if frame is None else [frame]
    for t in targets:
        if not 0 <= t < len(seq.frames):
            raise ConfigError(f"frame {t} out of range")
        seq.frames[t] = edit_grid(seq.frames[t], spec, n_classes, free_id)
    out.mkdir(parents=True, exist_ok=True)
    save_sequence(seq, out)
    return out


def _video_windows(stacks: list[np.ndarray], n_views: int, n_frames: int):
    """Slice condition stacks into (views, frames) windows for the video model."""
    windows = []
    for stack in stacks:
        v, t = stack.shape[0], stack.shape[1]
        if v < n_views or t < n_frames:
            continue
        for start in range(0, t - n_frames + 1, n_frames):
            windows.append(stack[:n_views, start : start + n_frames])
    if not windows:
        raise ConfigError(
            f"no condition stack offers {n_views} views x {n_frames} frames"
        )
    return windows


def run_train_video(
    conditions_dir: Path,
    out: Path,
    model_cfg: VideoModelConfig,
    train_cfg: VideoTrainConfig,
) -> dict:
    stack_dirs = sorted(
        p for p in conditions_dir.iterdir() if (p / "cond_manifest").is_file()
    )
    if not stack_dirs:
        raise ConfigError(f"no condition stacks under {conditions_dir}")
    stacks, palette_info = [], None
    for p in stack_dirs:
        labels, manifest = load_condition_stack(p)
        stacks.append(labels)
        palette_info = manifest["palette"]

    from .core.grid import LabelPalette

    palette = LabelPalette.default(palette_info["n_classes"], palette_info["free_id"])
    model_cfg = dataclasses.replace(
        model_cfg,
        image_size=(stacks[0].shape[2], stacks[0].shape[3]),
        cond_classes=palette_info["n_classes"] + 1,
    )
    windows = _video_windows(stacks, model_cfg.n_views, model_cfg.n_frames)
    videos, conds = make_toy_video_dataset(
        windows, palette, seed=train_cfg.seed, style_strength=train_cfg.style_strength
    )
    train_cfg = dataclasses.replace(train_cfg, checkpoint=str(out))
    _, history = train_toy_video(videos, conds, model_cfg, train_cfg)
    return {"samples": len(videos), "final_loss": history["history"][-1]["loss"]}


def run_sample_video(
    model_path: Path, conditions: Path, out: Path, steps: int, seed: int
) -> Path:
    import torch

    model = load_video_model(model_path)
    labels, _ = load_condition_stack(conditions)
    cfg = model.cfg
    if labels.shape[0] < cfg.n_views or labels.shape[1] < cfg.n_frames:
        raise ConfigError(
            f"condition stack {labels.shape} too small for model "
            f"({cfg.n_views} views x {cfg.n_frames} frames)"
        )
    cond = torch.from_numpy(
        labels[: cfg.n_views, : cfg.n_frames].astype("int64")
    )[None]
    from .video.flow import sample_video as sample_fn

    video = sample_fn(model, cond, steps=steps, seed=seed)[0]
    save_video_tensor(out / "video", video)
    save_video_frames_png(out / "frames", video)
    return out


def run_eval(
    vae_path: Path, pred_path: Path, data: Path, horizons, out: Path
) -> dict:
    vae = load_vae(vae_path)
    predictor = load_predictor(pred_path)
    seqs = _load_sequences(data)
    report = evaluate(vae, predictor, seqs, horizons_s=tuple(horizons))
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_report.json").write_text(report.to_json())
    for line in report.summary_lines():
        print(line)
    return json.loads(report.to_json())


# ------------------------------------------------------------- full pipeline


def full_pipeline(cfg: PipelineConfig, out_root: Path) -> dict:
    """Run every stage in order, skipping stages whose outputs already exist."""
    out_root.mkdir(parents=True, exist_ok=True)
    report: dict = {"order": [], "stages": {}}

    def stage(name: str, output: Path, fn):
        report["order"].append(name)
        if output.exists():
            report["stages"][name] = {"status": "skipped", "output": str(output)}
            return
        t0 = time.time()
        try:
            fn()
        except Exception as e:
            report["stages"][name] = {"status": "failed", "error": str(e)}
            raise PipelineStageError(name, e) from e
        report["stages"][name] = {
            "status": "ok",
            "output": str(output),
            "seconds": round(time.time() - t0, 2),
        }

    train_dir = out_root / "dataset"
    val_dir = out_root / "val_dataset"
    vae_ckpt = out_root / "vae_ckpt"
    pred_ckpt = out_root / "pred_ckpt"
    e2e_vae = out_root / "e2e_ckpt_vae"
    e2e_pred = out_root / "e2e_ckpt_predictor"
    rollout_dir = out_root / "rollout"
    cond_dir = out_root / "conditions"
    rollout_cond_dir = out_root / "rollout_conditions"
    video_ckpt = out_root / "video_ckpt"
    samples_dir = out_root / "samples"
    eval_dir = out_root / "eval"

    stage("gen-data", train_dir, lambda: run_gen_data(cfg.gen, train_dir))
    val_gen = GenDataConfig(
        n_sequences=cfg.val_sequences,
        seed=cfg.gen.seed + cfg.val_seed_offset,
        scene=cfg.gen.scene,
    )
    stage("gen-val-data", val_dir, lambda: run_gen_data(val_gen, val_dir))

    def _train_vae():
        seqs = load_dataset(train_dir)
        c = dataclasses.replace(cfg.vae, checkpoint=str(vae_ckpt))
        train_vae(seqs, c)

    stage("train-vae", vae_ckpt, _train_vae)

    def _train_pred():
        seqs = load_dataset(train_dir)
        vae = load_vae(vae_ckpt)
        c = dataclasses.replace(cfg.predictor, checkpoint=str(pred_ckpt))
        train_predictor(seqs, vae, c)

    stage("train-pred", pred_ckpt, _train_pred)

    def _train_e2e():
        seqs = load_dataset(train_dir)
        vae = load_vae(vae_ckpt)
        predictor = load_predictor(pred_ckpt)
        c = dataclasses.replace(cfg.e2e, checkpoint=str(out_root / "e2e_ckpt"))
        train_e2e(seqs, vae, predictor, c, val_seqs=load_dataset(val_dir))

    stage("train-e2e", e2e_vae, _train_e2e)

    stage(
        "rollout",
        rollout_dir,
        lambda: run_rollout(
            e2e_vae, e2e_pred, val_dir, rollout_dir,
            past=cfg.rollout_past, future=cfg.rollout_future,
        ),
    )
    stage(
        "render",
        cond_dir,
        lambda: run_render(train_dir, cond_dir, cfg.render_alpha, cfg.render_png),
    )
    stage(
        "render-rollout",
        rollout_cond_dir,
        lambda: run_render(
            rollout_dir / "pred_seq", rollout_cond_dir, cfg.render_alpha, cfg.render_png
        ),
    )
    stage(
        "train-video",
        video_ckpt,
        lambda: run_train_video(cond_dir, video_ckpt, cfg.video_model, cfg.video_train),
    )
    stage(
        "sample-video",
        samples_dir,
        lambda: run_sample_video(
            video_ckpt, rollout_cond_dir / "cond_0000", samples_dir,
            steps=cfg.sample_steps, seed=cfg.video_train.seed,
        ),
    )
    stage(
        "eval",
        eval_dir,
        lambda: run_eval(e2e_vae, e2e_pred, val_dir, cfg.horizons, eval_dir),
    )

    (out_root / "pipeline_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True)
    )
    return report


class PipelineStageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


# ----------------------------------------------------------------- argparse


def _parse_bbox(text: str):
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 6:
        raise ConfigError(f"bbox needs 6 comma-separated ints, got {text!r}")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geniedrive",
        description="Desk-scale occupancy world model and multi-view video toy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--n-sequences", type=int, default=None)

    for name in ("train-vae", "train-pred", "train-e2e"):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} phase")
        common(p)
        p.add_argument("--dataset", help="dataset directory")
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--batch-size", type=int, default=None)
        if name != "train-vae":
            p.add_argument("--vae", help="VAE checkpoint to start from")
        if name == "train-e2e":
            p.add_argument("--pred", help="predictor checkpoint to start from")

    p = sub.add_parser("rollout", help="autoregressive forecast")
    common(p)
    p.add_argument("--vae", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--data", required=True, help="dataset or sequence directory")
    p.add_argument("--past", type=int, default=4)
    p.add_argument("--future", type=int, default=6)
    p.add_argument("--sequence", type=int, default=0)

    p = sub.add_parser("render", help="splat sequences into semantic maps")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--png", action="store_true")

    p = sub.add_parser("edit", help="remove or insert a box of voxels")
    common(p)
    p.add_argument("--data", required=True, help="sequence directory")
    p.add_argument("--op", choices=("remove", "insert"), required=True)
    p.add_argument("--bbox", required=True, help="x0,y0,z0,x1,y1,z1")
    p.add_argument("--class-id", type=int, default=None)
    p.add_argument("--frame", type=int, default=None)

    p = sub.add_parser("train-video", help="train the toy multi-view video model")
    common(p)
    p.add_argument("--conditions", required=True, help="directory of condition stacks")
    p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("sample-video", help="sample the toy video model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--conditions", required=True, help="one condition stack")
    p.add_argument("--steps", type=int, default=20)

    p = sub.add_parser("eval", help="reconstruction + forecast metrics")
    common(p)
    p.add_argument("--vae", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--horizons", default="1,2,3", help="comma-separated seconds")

    p = sub.add_parser("pipeline", help="run every stage in order")
    common(p)

    return parser


def _train_config_from(args, raw: dict, phase_default: TrainConfig) -> TrainConfig:
    cfg = dataclass_from_dict(TrainConfig, raw) if raw else phase_default
    updates = {}
    if args.dataset:
        updates["dataset"] = args.dataset
    if args.epochs is not None:
        updates["epochs"] = args.epochs
    if args.lr is not None:
        updates["lr"] = args.lr
    if getattr(args, "batch_size", None) is not None:
        updates["batch_size"] = args.batch_size
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "vae", None):
        updates["init_vae"] = args.vae
    if getattr(args, "pred", None):
        updates["init_predictor"] = args.pred
    cfg = dataclasses.replace(cfg, **updates)
    if not cfg.dataset:
        raise ConfigError("a dataset path is required (flag --dataset or config)")
    return cfg


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0

    out = Path(args.out)
    raw_config = {}
    manifest = None
    try:
        raw_config = load_config_file(args.config)
        seed = args.seed if args.seed is not None else raw_config.get("seed", 0)
        manifest = RunManifest(args.command, raw_config or vars(args), seed, out)

        if args.command == "gen-data":
            cfg = dataclass_from_dict(GenDataConfig, raw_config) if raw_config else GenDataConfig()
            updates = {}
            if args.n_sequences is not None:
                updates["n_sequences"] = args.n_sequences
            if args.seed is not None:
                updates["seed"] = args.seed
            cfg = dataclasses.replace(cfg, **updates)
            for p in run_gen_data(cfg, out):
                manifest.add_output(p)

        elif args.command == "train-vae":
            cfg = _train_config_from(args, raw_config, TrainConfig(epochs=200))
            cfg = dataclasses.replace(cfg, checkpoint=str(out))
            seqs = load_dataset(resolve_data_path(cfg.dataset))
            train_vae(seqs, cfg)
            manifest.add_output(out)

        elif args.command == "train-pred":
            cfg = _train_config_from(args, raw_config, TrainConfig(epochs=60, lr=1e-3))
            if not cfg.init_vae:
                raise ConfigError("train-pred needs --vae (or init_vae in config)")
            cfg = dataclasses.replace(cfg, checkpoint=str(out))
            seqs = load_dataset(resolve_data_path(cfg.dataset))
            vae = load_vae(cfg.init_vae)
            train_predictor(seqs, vae, cfg)
            manifest.add_output(out)

        elif args.command == "train-e2e":
            cfg = _train_config_from(
                args, raw_config, TrainConfig(epochs=30, lr=3e-4, batch_size=8)
            )
            if not cfg.init_vae or not cfg.init_predictor:
                raise ConfigError("train-e2e needs --vae and --pred (or config keys)")
            cfg = dataclasses.replace(cfg, checkpoint=str(out / "ckpt"))
            seqs = load_dataset(resolve_data_path(cfg.dataset))
            vae = load_vae(cfg.init_vae)
            predictor = load_predictor(cfg.init_predictor)
            val_seqs = (
                load_dataset(resolve_data_path(cfg.val_dataset))
                if cfg.val_dataset
                else None
            )
            train_e2e(seqs, vae, predictor, cfg, val_seqs=val_seqs)
            manifest.add_output(out / "ckpt_vae")
            manifest.add_output(out / "ckpt_predictor")

        elif args.command == "rollout":
            result = run_rollout(
                Path(args.vae), Path(args.pred), resolve_data_path(args.data), out,
                past=args.past, future=args.future, sequence_index=args.sequence,
            )
            manifest.add_output(result["out"])

        elif args.command == "render":
            for p in run_render(
                resolve_data_path(args.data), out, args.alpha, args.png
            ):
                manifest.add_output(p)

        elif args.command == "edit":
            if args.op == "insert" and args.class_id is None:
                raise ConfigError("insert needs --class-id")
            run_edit(
                resolve_data_path(args.data), out, args.op,
                _parse_bbox(args.bbox), args.class_id, args.frame,
            )
            manifest.add_output(out)

        elif args.command == "train-video":
            model_cfg = (
                dataclass_from_dict(VideoModelConfig, raw_config.get("model", {}))
                if raw_config.get("model")
                else VideoModelConfig()
            )
            train_cfg = (
                dataclass_from_dict(VideoTrainConfig, raw_config.get("train", {}))
                if raw_config.get("train")
                else VideoTrainConfig()
            )
            updates = {}
            if args.epochs is not None:
                updates["epochs"] = args.epochs
            if args.seed is not None:
                updates["seed"] = args.seed
            train_cfg = dataclasses.replace(train_cfg, **updates)
            run_train_video(
                resolve_data_path(args.conditions), out, model_cfg, train_cfg
            )
            manifest.add_output(out)

        elif args.command == "sample-video":
            run_sample_video(
                Path(args.model), resolve_data_path(args.conditions), out,
                steps=args.steps, seed=seed,
            )
            manifest.add_output(out)

        elif args.command == "eval":
            horizons = [float(h) for h in args.horizons.split(",")]
            run_eval(
                Path(args.vae), Path(args.pred), resolve_data_path(args.data),
                horizons, out,
            )
            manifest.add_output(out / "eval_report.json")

        elif args.command == "pipeline":
            cfg = (
                dataclass_from_dict(PipelineConfig, raw_config)
                if raw_config
                else PipelineConfig()
            )
            full_pipeline(cfg, out)
            manifest.add_output(out)

        manifest.finish("ok")
        return 0

    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        if manifest is not None:
            manifest.finish("config-error", error=str(e))
        return 2
    except PipelineStageError as e:
        print(f"error: {e}", file=sys.stderr)
        manifest.finish("failed", error=str(e), failed_stage=e.stage)
        return 1
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        if manifest is not None:
            manifest.finish("failed", error=str(e))
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
