import filecmp
import json
from pathlib import Path

import pytest
import torch

from geniedrive.cli import config_hash, dispatch, resolve_data_path
from geniedrive.core.seqio import load_sequence
from geniedrive.predictor.model import OccPredictor, PredictorConfig
from geniedrive.train.loops import save_predictor, save_vae
from geniedrive.vae.model import TriPlaneVae, VaeConfig

TINY_SCENE = {
    "grid_shape": [16, 16, 4],
    "n_classes": 5,
    "seq_len": 8,
    "n_dynamic": 1,
    "n_static": 3,
}


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def gen_tiny_dataset(tmp_path, n=2, seed=0, seq_len=8):
    scene = dict(TINY_SCENE, seq_len=seq_len)
    cfg = write_config(
        tmp_path, f"gen_{seed}.json",
        {"n_sequences": n, "seed": seed, "scene": scene},
    )
    out = tmp_path / f"data_{seed}"
    assert dispatch(["gen-data", "--config", cfg, "--out", str(out)]) == 0
    return out


def save_tiny_models(tmp_path):
    torch.manual_seed(0)
    vae = TriPlaneVae(VaeConfig(grid_shape=(16, 16, 4), n_classes=5, channels=16))
    pred = OccPredictor(
        PredictorConfig(latent_dims=vae.cfg.latent_dims, channels=16, history=3)
    )
    save_vae(tmp_path / "vae_ckpt", vae)
    save_predictor(tmp_path / "pred_ckpt", pred)
    return tmp_path / "vae_ckpt", tmp_path / "pred_ckpt"


def dirs_equal(a: Path, b: Path) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files:
        return False
    return all(
        dirs_equal(a / sub, b / sub) for sub in cmp.common_dirs
    )


class TestDispatchBasics:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert dispatch(["frobnicate", "--out", "x"]) == 2

    def test_missing_required_flag_exits_2(self):
        assert dispatch(["rollout", "--out", "x"]) == 2

    def test_help_exits_0(self):
        assert dispatch(["--help"]) == 0

    def test_config_hash_is_deterministic_over_normalized_text(self):
        a = {"b": 1, "a": [1, 2]}
        b = {"a": [1, 2], "b": 1}
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash({"a": [1, 2], "b": 2})

    def test_data_dir_env_resolution(self, monkeypatch, tmp_path):
        monkeypatch.setenv("GENIEDRIVE_DATA_DIR", str(tmp_path))
        assert resolve_data_path("sub/data") == tmp_path / "sub" / "data"
        assert resolve_data_path("/abs/data") == Path("/abs/data")
        monkeypatch.delenv("GENIEDRIVE_DATA_DIR")
        assert resolve_data_path("sub/data") == Path("sub/data")


class TestGenData:
    def test_same_seed_gives_byte_identical_datasets(self, tmp_path):
        a = gen_tiny_dataset(tmp_path, seed=7)
        b_cfg = write_config(
            tmp_path, "gen_b.json",
            {"n_sequences": 2, "seed": 7, "scene": TINY_SCENE},
        )
        out_b = tmp_path / "data_b"
        assert dispatch(["gen-data", "--config", b_cfg, "--out", str(out_b)]) == 0
        assert dirs_equal(a, out_b)

    def test_run_manifest_written(self, tmp_path):
        out = gen_tiny_dataset(tmp_path, seed=1)
        manifest = json.loads((out.parent / (out.name + ".run.json")).read_text())
        assert manifest["command"] == "gen-data"
        assert manifest["status"] == "ok"
        assert manifest["seed"] == 1
        assert len(manifest["outputs"]) == 2
        assert manifest["revision"]

    def test_bad_config_exits_2_and_records_failure(self, tmp_path):
        cfg = write_config(tmp_path, "bad.json", {"n_sequences": 2, "bogus_key": 1})
        out = tmp_path / "nope"
        assert dispatch(["gen-data", "--config", cfg, "--out", str(out)]) == 2
        manifest = json.loads((tmp_path / "nope.run.json").read_text())
        assert manifest["status"] == "config-error"

    def test_flag_overrides_config(self, tmp_path):
        cfg = write_config(
            tmp_path, "gen.json", {"n_sequences": 5, "seed": 0, "scene": TINY_SCENE}
        )
        out = tmp_path / "flagged"
        assert dispatch(
            ["gen-data", "--config", cfg, "--out", str(out), "--n-sequences", "1"]
        ) == 0
        assert len(list(out.glob("seq_*"))) == 1


class TestRolloutRenderEditEval:
    @pytest.fixture()
    def workspace(self, tmp_path):
        data = gen_tiny_dataset(tmp_path, n=2, seed=0, seq_len=12)
        vae_ckpt, pred_ckpt = save_tiny_models(tmp_path)
        return tmp_path, data, vae_ckpt, pred_ckpt

    def test_rollout_paper_horizon(self, workspace):
        tmp_path, data, vae_ckpt, pred_ckpt = workspace
        out = tmp_path / "roll"
        code = dispatch([
            "rollout", "--vae", str(vae_ckpt), "--pred", str(pred_ckpt),
            "--data", str(data), "--past", "4", "--future", "6", "--out", str(out),
        ])
        assert code == 0
        pred_seq = load_sequence(out / "pred_seq")
        assert len(pred_seq) == 10  # 4 context + 6 predicted
        metrics = json.loads((out / "rollout_metrics.json").read_text())
        assert metrics["frames"] == 6
        assert len(metrics["per_step"]) == 6

    def test_rollout_too_long_horizon_is_config_error(self, workspace):
        tmp_path, data, vae_ckpt, pred_ckpt = workspace
        code = dispatch([
            "rollout", "--vae", str(vae_ckpt), "--pred", str(pred_ckpt),
            "--data", str(data), "--past", "4", "--future", "60",
            "--out", str(tmp_path / "roll2"),
        ])
        assert code == 2

    def test_render_writes_condition_stacks(self, workspace):
        tmp_path, data, vae_ckpt, pred_ckpt = workspace
        out = tmp_path / "cond"
        assert dispatch(["render", "--data", str(data), "--out", str(out)]) == 0
        stacks = sorted(out.glob("cond_*"))
        assert len(stacks) == 2
        assert (stacks[0] / "cond_manifest").is_file()
        assert (stacks[0] / "view0_frame0.bin").is_file()

    def test_edit_remove_via_cli(self, workspace):
        tmp_path, data, vae_ckpt, pred_ckpt = workspace
        seq_dir = sorted(data.glob("seq_*"))[0]
        out = tmp_path / "edited"
        code = dispatch([
            "edit", "--data", str(seq_dir), "--op", "insert",
            "--bbox", "2,2,0,6,6,2", "--class-id", "3", "--out", str(out),
        ])
        assert code == 0
        edited = load_sequence(out)
        assert (edited.frames[0].labels[2:6, 2:6, 0:2] == 3).all()
        code = dispatch([
            "edit", "--data", str(out), "--op", "remove",
            "--bbox", "2,2,0,6,6,2", "--out", str(tmp_path / "removed"),
        ])
        assert code == 0
        removed = load_sequence(tmp_path / "removed")
        assert (removed.frames[0].labels[2:6, 2:6, 0:2] == 0).all()

    def test_edit_insert_without_class_is_config_error(self, workspace):
        tmp_path, data, vae_ckpt, pred_ckpt = workspace
        seq_dir = sorted(data.glob("seq_*"))[0]
        code = dispatch([
            "edit", "--data", str(seq_dir), "--op", "insert",
            "--bbox", "0,0,0,2,2,1", "--out", str(tmp_path / "x"),
        ])
        assert code == 2

    def test_eval_smoke_prints_report(self, workspace, capsys):
        tmp_path, data, vae_ckpt, pred_ckpt = workspace
        out = tmp_path / "eval"
        code = dispatch([
            "eval", "--vae", str(vae_ckpt), "--pred", str(pred_ckpt),
            "--data", str(data), "--horizons", "1,2", "--out", str(out),
        ])
        assert code == 0
        printed = capsys.readouterr().out
        assert "recon" in printed and "avg" in printed
        report = json.loads((out / "eval_report.json").read_text())
        assert "1.0" in report["horizons"] and "2.0" in report["horizons"]


class TestPipeline:
    PIPE = {
        "gen": {"n_sequences": 4, "seed": 0, "scene": dict(TINY_SCENE, seq_len=12)},
        "val_sequences": 2,
        "vae": {"epochs": 4, "batch_size": 16, "eval_every": 2, "model": {"channels": 16}},
        "predictor": {"epochs": 2, "lr": 1e-3, "forecast_steps": 3,
                      "model": {"channels": 16}},
        "e2e": {"epochs": 2, "lr": 3e-4, "batch_size": 8, "forecast_steps": 3,
                "eval_every": 2, "model": {"channels": 16}},
        "rollout_past": 4,
        "rollout_future": 6,
        "video_model": {"n_views": 2, "n_frames": 8, "dim": 16, "depth": 1, "patch": 4},
        "video_train": {"epochs": 1, "batch_size": 2},
        "sample_steps": 2,
    }

    def test_full_pipeline_then_resume(self, tmp_path):
        cfg = write_config(tmp_path, "pipe.json", self.PIPE)
        out = tmp_path / "run"
        assert dispatch(["pipeline", "--config", cfg, "--out", str(out)]) == 0

        report = json.loads((out / "pipeline_report.json").read_text())
        expected_order = [
            "gen-data", "gen-val-data", "train-vae", "train-pred", "train-e2e",
            "rollout", "render", "render-rollout", "train-video", "sample-video",
            "eval",
        ]
        assert report["order"] == expected_order
        assert all(s["status"] == "ok" for s in report["stages"].values())
        assert (out / "samples" / "video" / "data.bin").is_file()
        assert (out / "samples" / "frames" / "frame_000.png").is_file()
        assert (out / "eval" / "eval_report.json").is_file()

        # deleting an intermediate artifact re-runs only the missing stage
        import shutil

        shutil.rmtree(out / "rollout")
        assert dispatch(["pipeline", "--config", cfg, "--out", str(out)]) == 0
        report2 = json.loads((out / "pipeline_report.json").read_text())
        assert report2["stages"]["rollout"]["status"] == "ok"
        skipped = [k for k, v in report2["stages"].items() if v["status"] == "skipped"]
        assert "train-vae" in skipped and "eval" in skipped

    def test_failure_records_stage_in_manifest(self, tmp_path):
        bad = dict(self.PIPE)
        bad = json.loads(json.dumps(self.PIPE))
        bad["rollout_future"] = 50  # longer than any validation sequence
        cfg = write_config(tmp_path, "pipe_bad.json", bad)
        out = tmp_path / "run_bad"
        assert dispatch(["pipeline", "--config", cfg, "--out", str(out)]) == 1
        manifest = json.loads((tmp_path / "run_bad.run.json").read_text())
        assert manifest["status"] == "failed"
        assert manifest["failed_stage"] == "rollout"
