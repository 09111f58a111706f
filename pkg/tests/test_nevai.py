import functools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import FREUD2
from opnevai import jacobi_core as jc
from opnevai import nevai as nv
from opnevai import quadrature as q
from opnevai.errors import ConvergenceError

ONE = nv.BATTERY["one"]
CAUCHY = nv.BATTERY["cauchy"]
RATIO = nv.BATTERY["ratio"]


def test_battery_bounds():
    y = np.linspace(-50, 50, 1001)
    for f in nv.BATTERY.values():
        assert np.max(np.abs(f(y))) <= f.bound
    assert ONE.kind == "polynomial(0)"
    assert CAUCHY.kind == "general-continuous"


def test_bound_violation_is_error():
    f = nv.TestFunction(lambda y: 2 * y, 1.0, "twice")
    with pytest.raises(ValueError):
        f(np.array([0.0, 3.0]))
    with pytest.raises(ValueError):
        nv.TestFunction(lambda y: y, 0.0)


@pytest.mark.parametrize("n", [1, 30, 128])
def test_g_of_one_is_one(meixner, n):
    # grid points at atoms of the meixner measure are the hard case
    assert np.allclose(nv.nevai_values(meixner, n, ONE, [0.0, 0.5, 2.0, 10.0]), 1.0, atol=1e-12)


def test_n1_gives_integral(freud2):
    dm = q.gauss_rule(freud2, 64)
    val = nv.nevai_apply(freud2, 1, CAUCHY, 0.3, dm)
    assert val == pytest.approx(q.integrate(dm, CAUCHY), rel=1e-14)


def test_second_moment_example(freud2):
    square = nv.TestFunction(lambda y: y * y, math.inf, "square", degree=2)
    assert nv.nevai_apply(freud2, 2, square, 0.0) == pytest.approx(0.5, rel=1e-14)


def test_adaptive_default(freud2):
    dm = q.gauss_rule(freud2, 512)
    ref = nv.nevai_apply(freud2, 8, CAUCHY, 0.5, dm)
    assert nv.nevai_apply(freud2, 8, CAUCHY, 0.5) == pytest.approx(ref, rel=1e-8)


def test_exactness_guard(freud2):
    square = nv.TestFunction(lambda y: y * y, math.inf, "square", degree=2)
    with pytest.raises(ValueError):
        nv.nevai_values(freud2, 10, square, [0.0], q.gauss_rule(freud2, 5))


def test_nonconvergence_reported(freud2, monkeypatch):
    monkeypatch.setattr(nv, "adaptive", functools.partial(q.adaptive, cap=512))
    wild = nv.TestFunction(lambda y: np.sin(1e4 * y), 1.0, "wild")
    with pytest.raises(ConvergenceError, match="quadrature not converged"):
        nv.nevai_values(freud2, 16, wild, [0.0])


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 60), x=st.floats(-3, 3), name=st.sampled_from(sorted(nv.BATTERY)))
def test_contractive_and_positive(n, x, name):
    params = jc.jacobi_parameters(FREUD2)
    f = nv.BATTERY[name]
    dm = q.gauss_rule(params, max(4 * n, 16))
    val = nv.nevai_apply(params, n, f, x, dm)
    assert abs(val) <= f.bound + 1e-10
    if np.all(f(dm.nodes) >= 0):
        assert val >= -1e-12


def test_omega_rows_sum_to_one(genhermite):
    dm = q.gauss_rule(genhermite, 200)
    W = nv.omega_weights(genhermite, 50, np.linspace(-2, 2, 9), dm)
    assert np.all(W >= 0)
    assert np.allclose(W.sum(axis=1), 1.0, atol=1e-12)


def test_concentration_examples(freud2):
    dm = q.gauss_rule(freud2, 64)
    assert nv.concentration(freud2, 16, 0.0, 100.0, dm) == pytest.approx(1.0, abs=1e-10)
    inside = np.abs(dm.nodes - 0.4) <= 0.7
    assert nv.concentration(freud2, 1, 0.4, 0.7, dm) == pytest.approx(math.fsum(dm.weights[inside]), rel=1e-13)
    masses = [nv.concentration(freud2, n, 0.0, 0.5) for n in (4, 16, 64, 256)]
    assert all(b > a for a, b in zip(masses, masses[1:]))


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 40), x=st.floats(-2, 2), e1=st.floats(0.01, 3), e2=st.floats(0.01, 3))
def test_concentration_monotone_in_eta(n, x, e1, e2):
    params = jc.jacobi_parameters(FREUD2)
    dm = q.gauss_rule(params, 160)
    lo, hi = sorted((e1, e2))
    m_lo = nv.concentration(params, n, x, lo, dm)
    m_hi = nv.concentration(params, n, x, hi, dm)
    assert 0 <= m_lo <= m_hi + 1e-15 <= 1 + 1e-10


def test_trace_one_and_cauchy(freud2):
    grid = np.linspace(-1, 1, 21)
    flat = nv.uniform_trace(freud2, ONE, grid, [8, 32])
    assert flat.sup.max() <= 1e-10
    trace = nv.uniform_trace(freud2, CAUCHY, grid, [8, 32, 128, 512])
    assert np.all(np.diff(trace.sup) < 0)
    assert np.array_equal(trace.sup, trace.deviations.max(axis=1))


def test_trace_generalized_hermite_away_from_zero(genhermite):
    grid = nv.make_grid(-1, 1, 21, exclude=[0.0], radius=0.29)
    assert np.all(np.abs(grid) >= 0.3)
    trace = nv.uniform_trace(genhermite, CAUCHY, grid, [8, 32, 128])
    assert np.all(np.diff(trace.sup) < 0)


def test_trace_csv(freud2):
    trace = nv.uniform_trace(freud2, ONE, [0.0, 0.5], [2, 4])
    lines = trace.to_csv().splitlines()
    assert lines[0] == "n,x,deviation" and len(lines) == 5
    assert trace.summary_csv().splitlines()[0] == "n,sup_deviation"
    with pytest.raises(ValueError):
        nv.uniform_trace(freud2, ONE, [0.0], [4, 2])


def test_ratio_constant_density(freud2):
    const = nv.TestFunction(lambda y: np.full_like(y, 3.0), 3.0, "three")
    assert np.allclose(nv.ratio_bounds(freud2, ONE, 16, 0.5), 1.0, rtol=1e-12)
    assert np.allclose(nv.ratio_bounds(freud2, const, 16, 0.5, normalize=True), 1.0, rtol=1e-12)


@pytest.mark.parametrize("n", [16, 64, 256])
def test_ratio_sandwich(freud2, n):
    dm = q.gauss_rule(freud2, 4 * n)
    lo, ratio, hi = nv.ratio_bounds(freud2, RATIO, n, 1.0, dm)
    hard_lo, hard_hi = nv.hard_bounds(RATIO, dm)
    assert lo - 1e-8 <= ratio <= hi + 1e-8
    assert hard_lo - 1e-8 <= ratio <= hard_hi + 1e-8
    assert abs(ratio * RATIO(1.0) - 1) <= 0.05


def test_ratio_against_gram_oracle(freud2):
    # K_n(1, 1; g mu) from the monomial Gram matrix of the modified measure
    n = 8
    dm = q.gauss_rule(freud2, 64)
    g = RATIO(dm.nodes)
    ref = oracles.gram_kernel_diagonal(dm.nodes, dm.weights * g, n, 1.0)
    ref /= oracles.gram_kernel_diagonal(dm.nodes, dm.weights, n, 1.0)
    assert nv.ratio_bounds(freud2, RATIO, n, 1.0, dm).ratio == pytest.approx(ref, rel=1e-8)


def test_atom_two_points():
    dm = q.DiscretizedMeasure([-1.0, 1.0], [0.5, 0.5])
    assert nv.atom_limit_check(dm, 1, [1, 2]) == pytest.approx([0.5, 1.0], rel=1e-14)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_atom_random_eight(seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-3, 3, size=8))
    if np.min(np.diff(x)) < 0.05:
        return
    w = rng.uniform(0.05, 1, size=8)
    dm = q.DiscretizedMeasure(x, w)
    atom = int(rng.integers(8))
    vals = nv.atom_limit_check(dm, atom, range(1, 9))
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(1.0, abs=1e-10)
    assert vals[0] <= 1.0
    wn = w / w.sum()
    for n in (3, 6):
        ref = oracles.gram_kernel_diagonal(x, wn, n, x[atom]) * wn[atom]
        assert vals[n - 1] == pytest.approx(ref, rel=1e-8)
