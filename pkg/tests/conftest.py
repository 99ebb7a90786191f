"""Shared fixtures: a small corpus on disk and a short smoke-test run."""

import os

import numpy as np
import pytest

from svada import data as dat
from svada.config import RunConfig
from svada.trainer import train


def tiny_config(**overrides) -> RunConfig:
    """A configuration small enough to train in a few seconds."""
    base = dict(seed=0, epochs=3, warmup_epochs=1, T=4, batch=8,
                dz_d=4, dz_t=4, hidden=32, relation_dim=16)
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def small_data_dir(tmp_path_factory):
    """per_class=10, T=4 image corpus: 64 train / 16 test sequences."""
    d = tmp_path_factory.mktemp("data")
    train_ds, test_ds = dat.generate_dataset(seed=0, per_class=10, T=4)
    dat.save_dataset(os.path.join(d, "train.bin"), train_ds)
    dat.save_dataset(os.path.join(d, "test.bin"), test_ds)
    return str(d)


@pytest.fixture(scope="session")
def small_datasets(small_data_dir):
    train_ds = dat.load_dataset(os.path.join(small_data_dir, "train.bin"))
    test_ds = dat.load_dataset(os.path.join(small_data_dir, "test.bin"))
    return train_ds, test_ds


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory, small_data_dir):
    """A completed 3-epoch run, shared by harness tests that only read it."""
    out = str(tmp_path_factory.mktemp("run"))
    train(tiny_config(), small_data_dir, out)
    return out


def read_text(path: str) -> str:
    with open(path) as f:
        return f.read()
