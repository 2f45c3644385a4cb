"""Shared fixtures: a tiny fast problem reused across the machinery tests."""
import pytest

from qdrom.config import RunConfig
from qdrom.drivers import record_snapshots, run_fom

TINY_KW = dict(nx=4, ny=4, dx=1.5, dy=1.5,
               group_bounds=(0.0, 0.7075, 2.83, 1.0e7),
               quadrature=1, dt=0.02, n_steps=5)


@pytest.fixture(scope="session")
def tiny_config():
    return RunConfig(**TINY_KW)


@pytest.fixture(scope="session")
def tiny_fom(tiny_config):
    return run_fom(tiny_config)


@pytest.fixture(scope="session")
def tiny_snapshots(tiny_fom):
    return record_snapshots(tiny_fom)
