"""Shared fixtures: random pairs, a small synthetic dataset, a short run."""

import numpy as np
import pytest

from windscale.grids import (COVARIATES, FACTOR, PREDICTANDS, PREDICTORS,
                             FieldGrid, SamplePair)
from windscale.losses import LossConfig
from windscale.nets import CriticSpec, GeneratorSpec
from windscale.synth import SynthConfig, make_dataset
from windscale.train import TrainConfig, fit

TINY_GEN = GeneratorSpec(trunk_width=16, n_rrdb=1, growth=8)
TINY_CRITIC = CriticSpec(base_width=8)


def random_pair(seed=0, low_hw=(8, 8), timestamp="h0000", spacing_km=2.5):
    """Structurally valid pair with random values (no physics)."""
    rng = np.random.default_rng(seed)
    lh, lw = low_hw
    hh, hw = FACTOR * lh, FACTOR * lw
    low = FieldGrid(PREDICTORS, rng.normal(size=(len(PREDICTORS), lh, lw)),
                    spacing_km * FACTOR)
    high = FieldGrid(PREDICTANDS, rng.normal(size=(len(PREDICTANDS), hh, hw)),
                     spacing_km)
    cov = FieldGrid(COVARIATES, np.stack([
        rng.uniform(0.0, 1500.0, size=(hh, hw)),
        (rng.uniform(size=(hh, hw)) < 0.3).astype(float),
        rng.uniform(0.001, 1.0, size=(hh, hw)),
    ]), spacing_km)
    return SamplePair(low=low, high=high, covariates=cov, timestamp=timestamp)


@pytest.fixture(scope="session")
def small_dataset():
    """12-hour synthetic dataset on a 64x64 fine grid."""
    return make_dataset(SynthConfig(seed=11, domain_hw=(64, 64), n_hours=12))


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory, small_dataset):
    """Three training steps with tiny networks; state plus artifact dir."""
    out = tmp_path_factory.mktemp("tiny_run")
    cfg = TrainConfig(max_steps=3, batch_size=4, crops_per_pair=24,
                      crop_size=32, val_crops_per_pair=4, val_every=1,
                      interval_len=2, checkpoint_every=2, seed=0,
                      dtype="float32", loss=LossConfig())
    state = fit(small_dataset.train, small_dataset.val, cfg, out,
                gen_spec=TINY_GEN, critic_spec=TINY_CRITIC)
    return {"state": state, "dir": out, "cfg": cfg}
