import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorenz_stability.dynamics import SystemParams, fixed_points, integrate, rhs
from lorenz_stability.errors import InvalidConfig, NonFiniteState

from oracles import rk4_reference


def test_default_params():
    p = SystemParams()
    assert p.sigma == 10.0
    assert p.rho == 28.0
    assert p.beta == 8.0 / 3.0


def test_params_reject_non_finite():
    with pytest.raises(InvalidConfig):
        SystemParams(sigma=float("nan"))
    with pytest.raises(InvalidConfig):
        SystemParams(rho=float("inf"))


def test_rhs_origin():
    np.testing.assert_array_equal(rhs([0.0, 0.0, 0.0]), [0.0, 0.0, 0.0])


def test_rhs_unit_point():
    np.testing.assert_allclose(rhs([1.0, 1.0, 1.0]), [0.0, 26.0, -5.0 / 3.0], rtol=0, atol=1e-15)


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_rhs_vanishes_at_nontrivial_equilibria(sign):
    r = sign * math.sqrt(72.0)
    np.testing.assert_allclose(rhs([r, r, 27.0]), 0.0, atol=1e-12)


def test_rhs_is_vectorized():
    pts = np.random.default_rng(0).normal(size=(7, 3))
    batch = rhs(pts)
    for row, d in zip(pts, batch):
        np.testing.assert_array_equal(rhs(row), d)


def test_single_point_trajectory():
    tr = integrate([1.0, 1.0, 1.0], n_points=1)
    assert tr.states.shape == (1, 3)
    np.testing.assert_array_equal(tr.states[0], [1.0, 1.0, 1.0])


@pytest.mark.parametrize("n", [2, 17, 300])
def test_origin_stays_fixed(n):
    tr = integrate([0.0, 0.0, 0.0], n_points=n)
    np.testing.assert_array_equal(tr.states, 0.0)


def test_equilibria_preserved_to_t10():
    for fp in fixed_points():
        tr = integrate(fp, n_points=1001)
        assert np.abs(tr.states - fp).max() < 1e-9


def test_first_step_matches_fine_rk4():
    ref = rk4_reference([1.0, 1.0, 1.0], n_out=2)
    tr = integrate([1.0, 1.0, 1.0], n_points=2)
    assert np.abs(tr.states[1] - ref[1]).max() < 1e-8


def test_short_horizon_matches_fine_rk4():
    # t <= 2 keeps the oracle cheap here; the acceptance suite covers t <= 5
    ic = np.random.default_rng(11).uniform(-1, 1, 3)
    ref = rk4_reference(ic, n_out=201)
    tr = integrate(ic, n_points=201)
    assert np.abs(tr.states - ref).max() < 1e-6


def test_output_grid_and_metadata():
    tr = integrate([0.5, 0.2, 0.1], dt=0.02, n_points=50)
    assert tr.n_points == 50
    assert tr.dt == 0.02
    np.testing.assert_allclose(tr.times[-1], 49 * 0.02)
    np.testing.assert_array_equal(tr.initial, [0.5, 0.2, 0.1])


def test_derivatives_are_exact_rhs():
    tr = integrate([0.3, -0.7, 0.9], n_points=500)
    for s, d in zip(tr.states, tr.derivatives):
        sx, sy, sz = (float(v) for v in s)
        exact = (10.0 * (sy - sx), sx * (28.0 - sz) - sy, sx * sy - (8.0 / 3.0) * sz)
        assert tuple(d) == exact


def test_deterministic():
    a = integrate([0.1, 0.2, 0.3], n_points=800)
    b = integrate([0.1, 0.2, 0.3], n_points=800)
    assert a.states.tobytes() == b.states.tobytes()


def test_bad_arguments():
    with pytest.raises(InvalidConfig):
        integrate([1, 1, 1], dt=0.0)
    with pytest.raises(InvalidConfig):
        integrate([1, 1, 1], n_points=0)


def test_non_finite_initial_state():
    with pytest.raises(NonFiniteState):
        integrate([np.nan, 0.0, 0.0], n_points=5)


def test_blow_up_raises_non_finite():
    # negative damping makes z grow without bound
    p = SystemParams(sigma=10.0, rho=28.0, beta=-500.0)
    with pytest.raises(NonFiniteState):
        integrate([1.0, 1.0, 1.0], p, dt=0.1, n_points=200)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_trajectory_stays_finite_and_consistent(ic):
    tr = integrate(ic, n_points=60)
    assert np.all(np.isfinite(tr.states))
    np.testing.assert_array_equal(tr.derivatives, rhs(tr.states))
    np.testing.assert_array_equal(tr.states[0], ic)
