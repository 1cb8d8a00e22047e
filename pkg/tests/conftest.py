"""Shared fixtures: canonical experiment configs and the session-trained net.

The heavy pieces (labeled dataset, trained weights) are session-scoped and
computed once; acceptance criteria and unit tests share them.
"""

import numpy as np
import pytest

from losp import labels, ranknet
from losp.config import RunConfig

EVAL_SEEDS_J2 = (201, 202, 203, 204, 205)
EVAL_SEEDS_J1 = (211, 212, 213, 214, 215)
TRAIN_SEED = 42


def fig2_config(seed: int, **encoding_overrides) -> RunConfig:
    """The two-shot organ-phase instance family: 64x64, liver region with a
    5th-order phase, 1st-order phases elsewhere, 8 dB noise, 4 coils."""
    encoding = {"n_coils": 4, "pattern": "interleaved", "rate": 1.0, "snr_db": 8.0}
    encoding.update(encoding_overrides)
    return RunConfig.from_dict({
        "seed": seed,
        "phantom": {"size_ro": 64, "size_pe": 64, "n_regions": 6},
        "phase": {"n_shots": 2, "order_range": [1, 1],
                  "order_overrides": {"1": [5, 5]}},
        "encoding": encoding,
        "solver": {"iterations": 20, "lambda": 40.0, "cg_iters": 15,
                   "cg_tol": 1e-5},
    })


def denoise_config(seed: int, **encoding_overrides) -> RunConfig:
    """Single-shot full-sampling family (pure line-denoising regime)."""
    encoding = {"n_coils": 1, "pattern": "interleaved", "rate": 1.0, "snr_db": 8.0}
    encoding.update(encoding_overrides)
    return RunConfig.from_dict({
        "seed": seed,
        "phantom": {"size_ro": 64, "size_pe": 64, "n_regions": 6},
        "phase": {"n_shots": 1, "order_range": [1, 1],
                  "order_overrides": {"1": [5, 5]}},
        "encoding": encoding,
        "solver": {"iterations": 20, "lambda": 40.0, "cg_iters": 15,
                   "cg_tol": 1e-5},
    })


def training_dataset_config(n_shots: int = 1) -> labels.DatasetConfig:
    return labels.DatasetConfig(
        size_ro=64, size_pe=64, n_regions=6, n_shots=n_shots,
        order_range=(0, 5), window=10, n_images=16, snr_range=(1.0, 15.0),
        seed=TRAIN_SEED)


@pytest.fixture(scope="session")
def labeled_dataset():
    """16-image single-shot dataset (2048 samples), seeds disjoint from the
    held-out evaluation seeds."""
    return labels.synthesize_dataset(training_dataset_config(), threads=2)


@pytest.fixture(scope="session")
def trained(labeled_dataset):
    """Desk-scale training run shared by the acceptance suite."""
    import time
    t0 = time.monotonic()
    weights, history = ranknet.train(
        labeled_dataset, ranknet.TrainConfig(epochs=40, batch_size=64, seed=7))
    elapsed = time.monotonic() - t0
    return {"weights": weights, "history": history, "train_time": elapsed,
            "dataset": labeled_dataset}


@pytest.fixture(scope="session")
def small_dataset():
    """Tiny dataset for fast training-path tests (2 images, 32x32)."""
    cfg = labels.DatasetConfig(size_ro=32, size_pe=32, n_regions=3, n_shots=2,
                               order_range=(0, 3), window=6, n_images=2,
                               snr_range=(2.0, 12.0), seed=11)
    return labels.synthesize_dataset(cfg)


def region_line_masks(phantom, direction="ro"):
    """Boolean masks over line positions: crossing region 1 ('liver'),
    crossing other regions only, or crossing nothing."""
    liver = phantom.region(1).mask
    others = np.zeros_like(liver)
    for r in phantom.regions:
        if r.id != 1:
            others |= r.mask
    axis = 0 if direction == "ro" else 1
    liver_lines = liver.any(axis=axis)
    other_lines = others.any(axis=axis)
    return liver_lines, other_lines & ~liver_lines
