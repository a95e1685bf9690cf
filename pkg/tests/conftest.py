"""Shared fixtures: toy datasets and trained desk-scale models.

The trained-model fixture is session-scoped because several acceptance
criteria (E2E direction, transform head, long-horizon rollout) share the
same per-seed training runs.
"""

from __future__ import annotations

import copy

import pytest

from geniedrive.core.synthetic import SceneGenConfig, generate_synthetic_sequence
from geniedrive.train.config import ModelConfig, TrainConfig
from geniedrive.train.evaluate import evaluate
from geniedrive.train.loops import train_e2e, train_predictor, train_vae

# Toy scene family used across trainer/acceptance tests: dense enough that
# several classes stay visible over the whole 16-frame horizon.
TOY_SCENE = SceneGenConfig(
    grid_shape=(16, 16, 4),
    n_classes=5,
    seq_len=16,
    n_dynamic=3,
    n_static=8,
    ego_speed_range=(0.25, 0.55),
    ego_turn_rate_range=(-0.08, 0.08),
)
TOY_MODEL = ModelConfig(channels=32)

E2E_SEEDS = (0, 1, 2, 3)


def toy_vae_config(seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=40, batch_size=16, lr=2e-3, eval_every=10, seed=seed, model=TOY_MODEL
    )


def toy_predictor_config(seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=25, batch_size=16, lr=1e-3, forecast_steps=6, seed=seed, model=TOY_MODEL
    )


def toy_e2e_config(seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=8, batch_size=8, lr=3e-4, forecast_steps=6, eval_every=4,
        seed=seed, model=TOY_MODEL,
    )


@pytest.fixture(scope="session")
def toy_dataset():
    train = [generate_synthetic_sequence(TOY_SCENE, seed=s) for s in range(16)]
    val = [generate_synthetic_sequence(TOY_SCENE, seed=1000 + s) for s in range(24)]
    return train, val


@pytest.fixture(scope="session")
def trained_runs(toy_dataset):
    """Per-seed training runs: VAE -> frozen-VAE predictor -> E2E, with
    held-out evaluations before and after the E2E phase."""
    import time

    t_start = time.time()
    train, val = toy_dataset
    runs = {}
    for seed in E2E_SEEDS:
        vae, vae_hist = train_vae(train, toy_vae_config(seed))
        predictor, pred_hist = train_predictor(train, vae, toy_predictor_config(seed))
        before = evaluate(vae, predictor, val[:16], horizons_s=(1.0, 2.0, 3.0))
        vae_e2e = copy.deepcopy(vae)
        pred_e2e = copy.deepcopy(predictor)
        e2e_hist = train_e2e(train, vae_e2e, pred_e2e, toy_e2e_config(seed))
        after = evaluate(vae_e2e, pred_e2e, val[:16], horizons_s=(1.0, 2.0, 3.0))
        runs[seed] = {
            "vae": vae,
            "predictor": predictor,
            "vae_e2e": vae_e2e,
            "pred_e2e": pred_e2e,
            "before": before,
            "after": after,
            "vae_hist": vae_hist,
            "pred_hist": pred_hist,
            "e2e_hist": e2e_hist,
        }
    runs["_seconds"] = time.time() - t_start
    return runs


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    print(f"\n[acceptance] {name}: {report.outcome.upper()}")
