"""Vector field, chart change, equilibrium, and potential tests.

Frozen literals: 50-digit mpmath solutions of the stated closed-form problems,
re-derived inline at double precision (bisection / direct evaluation) so both
sides of each comparison are checked.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscnet._util import NumericalError, ParameterError, make_rng
from oscnet.network import (
    field_original,
    field_w,
    from_w_coordinates,
    join_state,
    lcosh,
    original_view,
    potential_energy,
    potential_force,
    solve_equilibrium,
    split_state,
    to_w_coordinates,
)
from oscnet.params import OriginalParams, materialized, random_con_params

# root of x + tanh(x + 1) = 0, frozen from 50-digit arithmetic
EQ_ROOT_UNIT_STIFF_BIAS_ONE = -0.47870154299972106
# potential at displacement 0.3 from that root (unit stiffness, bias 1)
POTENTIAL_AT_03 = 0.076277574014656041
# restoring force at the same displacement
FORCE_AT_03 = 0.4970744375440615


def bisect_root(f, lo, hi, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm < 0.0) == (flo < 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_equilibrium_scalar_frozen_value():
    oracle = bisect_root(lambda x: x + math.tanh(x + 1.0), -1.0, 0.0)
    assert oracle == pytest.approx(EQ_ROOT_UNIT_STIFF_BIAS_ONE, abs=1e-14)
    got = solve_equilibrium(np.array([[1.0]]), np.array([1.0]))
    assert got[0] == pytest.approx(EQ_ROOT_UNIT_STIFF_BIAS_ONE, abs=1e-10)


def test_equilibrium_residual_small_on_random_networks():
    for seed in range(25):
        p = random_con_params(seed, n=4, m=1)
        mats = materialized(p)
        eq = solve_equilibrium(mats.stiffness, p.bias)
        residual = mats.stiffness @ eq + np.tanh(eq + p.bias)
        assert np.max(np.abs(residual)) < 1e-10


def test_equilibrium_is_start_independent():
    p = random_con_params(77, n=6, m=1)
    mats = materialized(p)
    rng = make_rng(77, stream=3)
    starts = rng.uniform(-50.0, 50.0, size=(10, 6))
    roots = solve_equilibrium(mats.stiffness, p.bias, x0=starts)
    ref = solve_equilibrium(mats.stiffness, p.bias)
    assert np.max(np.abs(roots - ref)) < 1e-8


def test_lcosh_matches_naive_and_is_overflow_safe():
    a = np.linspace(-20.0, 20.0, 101)
    np.testing.assert_allclose(lcosh(a), np.log(np.cosh(a)), rtol=0, atol=1e-12)
    assert lcosh(800.0) == pytest.approx(800.0 - math.log(2.0), rel=1e-15)
    assert lcosh(-800.0) == lcosh(800.0)
    assert lcosh(0.0) == 0.0


def test_potential_energy_frozen_value():
    stiffness = np.array([[1.0]])
    bias = np.array([1.0])
    eq = solve_equilibrium(stiffness, bias)
    # inline oracle: lcosh terms plus the quadratic, stdlib math only
    a0 = eq[0] + 1.0
    a1 = a0 + 0.3
    oracle = (
        math.log(math.cosh(a1))
        - math.log(math.cosh(a0))
        - math.tanh(a0) * 0.3
        + 0.5 * 0.3**2
    )
    assert oracle == pytest.approx(POTENTIAL_AT_03, abs=1e-12)
    got = potential_energy(stiffness, bias, eq, np.array([0.3]))
    assert got == pytest.approx(POTENTIAL_AT_03, abs=1e-10)
    force = potential_force(stiffness, bias, eq, np.array([0.3]))
    assert force[0] == pytest.approx(FORCE_AT_03, abs=1e-10)


def test_potential_zero_at_rest():
    p = random_con_params(5, n=5, m=1)
    mats = materialized(p)
    eq = solve_equilibrium(mats.stiffness, p.bias)
    assert potential_energy(mats.stiffness, p.bias, eq, np.zeros(5)) == 0.0
    assert np.max(np.abs(potential_force(mats.stiffness, p.bias, eq, np.zeros(5)))) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_potential_force_is_gradient_of_energy(seed, n):
    p = random_con_params(seed, n=n, m=1, stream=11)
    mats = materialized(p)
    eq = solve_equilibrium(mats.stiffness, p.bias)
    rng = make_rng(seed, stream=12)
    disp = rng.uniform(-2.0, 2.0, size=n)
    force = potential_force(mats.stiffness, p.bias, eq, disp)
    h = 1e-6
    for i in range(n):
        step = np.zeros(n)
        step[i] = h
        fd = (
            potential_energy(mats.stiffness, p.bias, eq, disp + step)
            - potential_energy(mats.stiffness, p.bias, eq, disp - step)
        ) / (2.0 * h)
        assert fd == pytest.approx(force[i], rel=1e-6, abs=1e-6)


def test_potential_is_positive_away_from_rest():
    p = random_con_params(21, n=4, m=1)
    mats = materialized(p)
    eq = solve_equilibrium(mats.stiffness, p.bias)
    rng = make_rng(21, stream=4)
    for _ in range(50):
        disp = rng.uniform(-3.0, 3.0, size=4)
        if np.linalg.norm(disp) < 1e-6:
            continue
        assert potential_energy(mats.stiffness, p.bias, eq, disp) > 0.0


def test_fields_agree_through_the_chart_change():
    rng = make_rng(99, stream=5)
    for seed in range(10):
        p = random_con_params(seed, n=3, m=2, stream=6)
        op = original_view(p)
        mats = materialized(p)
        y = rng.uniform(-2.0, 2.0, size=6)
        u = rng.uniform(-1.0, 1.0, size=2)
        y_w = to_w_coordinates(op, y)
        dy = field_original(op, y, u)
        dy_w = field_w(p, y_w, forcing=p.input_matrix @ u, mats=mats)
        # the chart change is linear, so fields map by the same block matrix
        dx, dxd = split_state(dy)
        expected = join_state(op.coupling @ dx, op.coupling @ dxd)
        np.testing.assert_allclose(dy_w, expected, rtol=1e-10, atol=1e-12)


def test_chart_roundtrip_identity():
    p = random_con_params(3, n=4, m=1)
    op = original_view(p)
    rng = make_rng(3, stream=8)
    y = rng.normal(size=(7, 8))
    back = from_w_coordinates(op, to_w_coordinates(op, y))
    np.testing.assert_allclose(back, y, rtol=1e-10, atol=1e-12)


def test_chart_change_refuses_singular_coupling():
    op = OriginalParams(
        stiffness=np.eye(2),
        damping=np.eye(2),
        coupling=np.array([[1.0, 1.0], [1.0, 1.0 + 1e-15]]),
        bias=np.zeros(2),
        input_matrix=np.zeros((2, 1)),
    )
    with pytest.raises(NumericalError):
        to_w_coordinates(op, np.zeros(4))


def test_field_batching_matches_loop():
    p = random_con_params(8, n=3, m=1)
    mats = materialized(p)
    rng = make_rng(8, stream=9)
    batch = rng.normal(size=(5, 6))
    taus = rng.normal(size=(5, 3))
    batched = field_w(p, batch, forcing=taus, mats=mats)
    for i in range(5):
        single = field_w(p, batch[i], forcing=taus[i], mats=mats)
        np.testing.assert_allclose(batched[i], single, rtol=0, atol=0)


def test_split_state_rejects_odd_length():
    with pytest.raises(ParameterError):
        split_state(np.zeros(5))
