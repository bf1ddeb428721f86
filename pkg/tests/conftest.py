"""Shared fixtures; the expensive solves are session-scoped and reused."""

import numpy as np
import pytest

from fracgs import ModelParams, make_grid, recommended_grid, solve_ground_state
from fracgs.continuation import find_fold, trace_branch


@pytest.fixture(scope="session")
def grid512():
    return make_grid(1, 12.0, 512)


@pytest.fixture(scope="session")
def params_half():
    return ModelParams(1, 0.5, 6.0, -2.0)


@pytest.fixture(scope="session")
def gs_half(params_half):
    """Workhorse state: (N=1, s=0.5, q=6, lambda=-2) on the policy grid."""
    return solve_ground_state(params_half, recommended_grid(params_half, lam1_hint=1.0188))


@pytest.fixture(scope="session")
def gs_classic():
    """Smooth anchor: (N=1, s=1, q=6, lambda=0) on (L=12, M=512)."""
    p = ModelParams(1, 1.0, 6.0, 0.0)
    return solve_ground_state(p, make_grid(1, 12.0, 512))


@pytest.fixture(scope="session")
def curve_small():
    """Short s=0.5 branch through the fold (48 points down to -8)."""
    return trace_branch((1, 0.5, 6.0), lam_min=-8.0, points=48)


@pytest.fixture(scope="session")
def fold_small(curve_small):
    return find_fold(curve_small)
