"""Shared fixtures and helpers for the test suite."""

from pathlib import Path

import numpy as np
import pytest

from radarnav.manifold import so3_exp
from radarnav.state import NavState

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_nav_state(rng, rot_scale=0.8, ext_scale=0.3) -> NavState:
    """A generic fully-populated state for Jacobian and operator tests."""
    return NavState(
        pos=rng.normal(0.0, 5.0, 3),
        vel=rng.normal(0.0, 2.0, 3),
        rot=so3_exp(rng.normal(0.0, rot_scale, 3)),
        accel_bias=rng.normal(0.0, 0.05, 3),
        gyro_bias=rng.normal(0.0, 0.01, 3),
        ext_rot=so3_exp(rng.normal(0.0, ext_scale, 3)),
        ext_trans=rng.normal(0.0, 0.2, 3),
        gravity=np.array([0.0, 0.0, -9.81]) + rng.normal(0.0, 0.05, 3),
    )


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / name
