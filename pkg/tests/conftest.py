"""Pytest configuration and fixtures for the splatmae tests."""

import copy

import numpy as np
import pytest

from splatmae.core.config_manager import RunConfig
from splatmae.data.synthetic import SyntheticSpec, synth_generate
from splatmae.splats.splat_set import SH_COEFFS, SplatSet, canonicalize

TINY_CONFIG = {
    "features": {"grouping": ["C"], "embedding": ["C"]},
    "grouping": {
        "num_splats": 64,
        "num_groups": 8,
        "group_size": 8,
        "pool_slots": 4,
        "lift_dim": 16,
    },
    "model": {
        "preset": "desk",
        "token_dim": 16,
        "encoder_depth": 2,
        "decoder_depth": 1,
        "num_heads": 2,
        "mlp_ratio": 2.0,
        "drop_path": 0.0,
    },
    "pretrain": {
        "epochs": 2,
        "warmup_epochs": 0,
        "batch_size": 2,
        "checkpoint_every": 1,
        "lr": 1e-3,
    },
    "finetune": {
        "epochs": 2,
        "warmup_epochs": 0,
        "batch_size": 2,
        "head_hidden": [16, 8],
        "head_dropout": 0.0,
        "lr": 1e-3,
    },
    "seeds": {"data": 0, "mask": 1, "init": 2},
}


def random_splats(n: int, rng: np.random.Generator) -> SplatSet:
    """A valid random SplatSet with positions in the unit cube."""
    return SplatSet(
        centroids=rng.uniform(-1.0, 1.0, size=(n, 3)),
        opacities=rng.uniform(0.05, 0.95, size=(n, 1)),
        scales=rng.uniform(0.01, 0.1, size=(n, 3)),
        rotations=canonicalize(rng.normal(size=(n, 4))),
        sh=rng.normal(0.0, 0.5, size=(n, SH_COEFFS)),
    )


def make_config(**sections) -> RunConfig:
    """The tiny config with per-section overrides.

    Example: ``make_config(pretrain={"epochs": 0})``.
    """
    data = copy.deepcopy(TINY_CONFIG)
    for section, values in sections.items():
        data.setdefault(section, {}).update(values)
    return RunConfig.from_dict(data)


@pytest.fixture
def rng():
    """Seeded generator for test fixtures."""
    return np.random.default_rng(1234)


@pytest.fixture
def make_splats(rng):
    """Factory for random valid splat sets."""

    def _make(n: int = 64) -> SplatSet:
        return random_splats(n, rng)

    return _make


@pytest.fixture
def tiny_config():
    """A small model and schedule that train in seconds."""
    return make_config()


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory):
    """Two classes of four objects each, one test object per class."""
    out_dir = tmp_path_factory.mktemp("synthetic")
    spec = SyntheticSpec(
        classes=("sphere", "cylinder"),
        per_class=4,
        splats_per_object=96,
        min_splats=8,
        test_fraction=0.25,
        seed=0,
    )
    manifest = synth_generate(spec, out_dir)
    return manifest


@pytest.fixture
def config_factory():
    """Build tiny configs with section overrides."""
    return make_config
