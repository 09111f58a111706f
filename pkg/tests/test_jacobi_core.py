import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import FREUD2, MEIXNER
from opnevai import jacobi_core as jc
from opnevai.errors import InsufficientResolution
from opnevai.jacobi_core import FamilySpec, JacobiParameters, PeriodicProfile


# ---- coefficients


def test_meixner_first_coefficients():
    a0, b0 = jc.coefficients(MEIXNER, 0)
    assert a0 == pytest.approx(2 / 3, rel=1e-15)
    assert b0 == pytest.approx(1 / 3, rel=1e-15)


def test_freud2_closed_form():
    a, b = jc.coefficients(FREUD2, 0)
    assert b == 0.0
    # a_3 = sqrt(2), confirmed against an independent Stieltjes run on 200 Hermite nodes
    assert jc.coefficients(FREUD2, 3)[0] == pytest.approx(math.sqrt(2), rel=1e-15)


def test_freud4_satisfies_string_equation():
    params = jc.jacobi_parameters(FamilySpec("freud", gamma=4.0), 200)
    a, _ = params.arrays(101)
    assert np.max(np.abs(jc.freud4_string_residual(a)) / np.arange(1, 101)) < 1e-10


@pytest.mark.parametrize("spec", [
    FamilySpec("freud", gamma=3.0),
    FamilySpec("generalized-hermite", t=1.0),
    FamilySpec("laguerre-type", gamma=-0.5, kappa=2),
    FamilySpec("meixner", s=2.0, p=0.5),
    FamilySpec("periodic-modulated", profile=PeriodicProfile((1.0, 2.0), (0.0, 1.0))),
    FamilySpec("periodic-blend", profile=PeriodicProfile((1.0,), (0.0,))),
])
def test_coefficients_positive(spec):
    a, b = jc.jacobi_parameters(spec).arrays(300)
    assert np.all(a > 0)
    assert np.all(np.isfinite(b))


def test_generalized_hermite_t0_is_hermite():
    # t = 0 is the weight exp(-x^2): the closed form must be recovered
    a, _ = jc.jacobi_parameters(FamilySpec("generalized-hermite", t=0.0), 200).arrays(100)
    assert np.max(np.abs(a - np.sqrt((np.arange(100) + 1) / 2)) / a) < 1e-12


def test_laguerre_type_moments():
    # moments of x^gamma exp(-x^2) on (0, inf) are ratios of gamma functions
    g = 1.5
    params = jc.jacobi_parameters(FamilySpec("laguerre-type", gamma=g, kappa=2), 200)
    a, b = params.arrays(20)
    m = oracles.moments(a, b, 6)
    exact = [math.gamma((g + 1 + k) / 2) / math.gamma((g + 1) / 2) for k in range(6)]
    assert np.allclose(m, exact, rtol=1e-12)


def test_repeated_queries_identical(freud2, genhermite):
    for params in (freud2, genhermite):
        assert params(17) == params(17)
        a1, b1 = params.arrays(50)
        a2, b2 = params.arrays(50)
        assert np.array_equal(a1, a2) and np.array_equal(b1, b2)


@pytest.mark.parametrize("kwargs", [
    dict(family="freud", gamma=0.5),
    dict(family="meixner", s=1.0, p=1.0),
    dict(family="meixner", s=-1.0, p=0.5),
    dict(family="generalized-hermite", t=-1.0),
    dict(family="laguerre-type", gamma=1.0, kappa=1),
    dict(family="laguerre-type", gamma=-2.0, kappa=2),
    dict(family="laguerre-type", gamma=0.0, kappa=2.5),
    dict(family="periodic-modulated"),
    dict(family="custom-table"),
    dict(family="nope"),
])
def test_family_spec_rejects(kwargs):
    with pytest.raises(ValueError):
        FamilySpec(**kwargs)


def test_profile_rejects_nonpositive_alpha():
    with pytest.raises(ValueError):
        PeriodicProfile((1.0, 0.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        PeriodicProfile((1.0,), (0.0, 1.0))


def test_table_round_trip(tmp_path):
    path = tmp_path / "coeffs.txt"
    a = np.array([0.5, 1.0 / 3, 2.0])
    b = np.array([0.1, -0.25, 1e-300])
    jc.write_table(path, a, b)
    params = JacobiParameters.from_file(path)
    a2, b2 = params.arrays(3)
    assert np.array_equal(a, a2) and np.array_equal(b, b2)
    with pytest.raises(InsufficientResolution):
        params(3)


@pytest.mark.parametrize("text", ["0 1 0\n2 1 0\n", "0 -1 0\n", "0 1\n", "0 1 0\n0 1 0\n", "0 x 0\n", ""])
def test_table_rejects_malformed(tmp_path, text):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ValueError):
        jc.read_table(path)


# ---- evaluation


def test_eval_pair_small_n(freud2):
    a0, _ = freud2(0)
    a1, _ = freud2(1)
    pair = jc.eval_pair(freud2, 1, 1.0)
    assert pair.prev == pytest.approx(1.0, abs=0)
    assert pair.value == pytest.approx(1 / a0, rel=1e-15)
    p2 = (1.0 * (1 / a0) - a0 * 1.0) / a1
    assert jc.eval_pair(freud2, 2, 1.0).value == pytest.approx(p2, rel=1e-15)


def test_eval_pair_p0_exact(meixner):
    for x in (-3.0, 0.0, 17.5):
        pair = jc.eval_pair(meixner, 1, x)
        assert pair.u * math.exp(pair.log_scale) == 1.0


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 150), x=st.floats(-30, 30))
def test_eval_pair_matches_unscaled(n, x):
    params = jc.jacobi_parameters(MEIXNER)
    a, b = params.arrays(n + 1)
    ref = oracles.unscaled_polynomials(a, b, n, x)
    pair = jc.eval_pair(params, n, x)
    scale = math.exp(pair.log_scale)
    if np.all(np.isfinite(ref)) and np.max(np.abs(ref)) < 1e300:
        tol = 1e-12 * np.max(np.abs(ref[: n + 1]))
        assert abs(pair.v * scale - ref[n]) <= tol + 1e-12 * abs(ref[n])
        assert abs(pair.u * scale - ref[n - 1]) <= tol + 1e-12 * abs(ref[n - 1])


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 3000), x=st.floats(-1e3, 1e3))
def test_scaled_pair_invariant(n, x):
    pair = jc.eval_pair(jc.jacobi_parameters(FREUD2), n, x)
    big = max(abs(pair.u), abs(pair.v))
    assert big > 0
    assert big < jc.RESCALE_BOUND
    if pair.log_scale != 0.0:
        assert big >= 1.0


def test_eval_pair_deep_tail_finite(freud2):
    pair = jc.eval_pair(freud2, 5000, 1e4)
    assert np.isfinite(pair.log_scale) and pair.log_scale > 700


def test_polynomial_table_matches_unscaled(freud2):
    x = np.linspace(-3, 3, 7)
    table = jc.polynomial_table(freud2, 10, x)
    a, b = freud2.arrays(11)
    ref = np.array([oracles.unscaled_polynomials(a, b, 9, t) for t in x])
    assert np.allclose(table, ref, rtol=1e-13, atol=1e-13)


def test_log_square_sum_matches_direct(meixner):
    a, b = meixner.arrays(41)
    for x in (0.0, 2.5, 11.0):
        direct = np.sum(oracles.unscaled_polynomials(a, b, 39, x) ** 2)
        assert float(jc.log_square_sum(meixner, 40, x)) == pytest.approx(math.log(direct), rel=1e-13)


# ---- transfer matrices


def test_transfer_matrix_example(freud2):
    a0, _ = freud2(0)
    a1, b1 = freud2(1)
    m = jc.transfer_matrix(freud2, 1, 0.0)
    assert np.allclose(m, [[0, 1], [-a0 / a1, -b1 / a1]], rtol=0, atol=1e-16)
    assert b1 == 0


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 400), x=st.floats(-50, 50))
def test_transfer_determinant(n, x):
    params = jc.jacobi_parameters(MEIXNER)
    m = jc.transfer_matrix(params, n, x)
    assert np.linalg.det(m) == pytest.approx(params(n - 1)[0] / params(n)[0], rel=1e-12)


def test_transfer_product_advances_pair(meixner):
    n, N, x = 5, 3, 1.7
    start = jc.eval_pair(meixner, n, x)
    m, ls = jc.transfer_product(meixner, n, N, x)
    moved = m @ np.array([start.u, start.v]) * math.exp(ls + start.log_scale)
    end = jc.eval_pair(meixner, n + N, x)
    assert np.allclose(moved, np.array([end.u, end.v]) * math.exp(end.log_scale), rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 500), x=st.floats(-5, 5))
def test_transfer_step_consistency(n, x):
    params = jc.jacobi_parameters(FREUD2)
    pair = jc.eval_pair(params, n, x)
    nxt = jc.eval_pair(params, n + 1, x)
    step = jc.transfer_matrix(params, n, x) @ np.array([pair.u, pair.v])
    ref = np.array([nxt.u, nxt.v]) * math.exp(nxt.log_scale - pair.log_scale)
    assert np.allclose(step, ref, rtol=1e-13, atol=1e-13 * np.max(np.abs(ref)))


def test_periodic_transfer_freud_profile():
    prof = PeriodicProfile((1.0,), (0.0,))
    for x in (-1.0, 0.0, 0.7):
        m, dm = jc.periodic_transfer(prof, 0, x, with_derivative=True)
        assert np.allclose(m, [[0, 1], [-1, x]])
        assert np.trace(dm) == pytest.approx(1.0)


def test_periodic_transfer_laguerre_profile():
    m = jc.periodic_transfer(PeriodicProfile((1.0,), (2.0,)), 0, 0.0)
    assert np.allclose(m, [[0, 1], [-1, -2]])
    assert np.trace(m) == -2.0
    assert jc.discriminant(m) == pytest.approx(0.0, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(
    alpha=st.lists(st.floats(0.2, 3), min_size=1, max_size=4),
    seed=st.integers(0, 2**16),
    n=st.integers(0, 40),
)
def test_periodic_step_is_periodic(alpha, seed, n):
    rng = np.random.default_rng(seed)
    beta = rng.normal(size=len(alpha))
    prof = PeriodicProfile(tuple(alpha), tuple(beta))
    x = float(rng.normal())
    assert np.array_equal(jc.periodic_step(prof, n, x), jc.periodic_step(prof, n + prof.period, x))
    det = np.linalg.det(jc.periodic_step(prof, n, x))
    assert det == pytest.approx(prof.alpha_at(n - 1) / prof.alpha_at(n), rel=1e-12)


def test_periodic_derivative_matches_finite_difference():
    prof = PeriodicProfile((1.0, 2.0, 0.5), (0.3, -1.0, 0.2))
    _, dm = jc.periodic_transfer(prof, 0, 0.0, with_derivative=True)
    h = 1e-5
    fd = (np.trace(jc.periodic_transfer(prof, 0, h)) - np.trace(jc.periodic_transfer(prof, 0, -h))) / (2 * h)
    assert np.trace(dm) == pytest.approx(fd, rel=1e-6)


# ---- regularity diagnostics


def test_variation_sums_constant_and_telescoping():
    assert np.all(jc.variation_sums(np.full(50, 3.0), 3) == 0)
    k = np.arange(1, 10001)
    s = jc.variation_sums(1.0 / k, 1)
    assert s[0, 0] == pytest.approx(1 - 1 / 10000, rel=1e-12)


def test_meixner_carleman_grows(meixner):
    rep = jc.regularity_diagnostics(meixner, 1, 1, 10**4)
    assert rep.carleman_growing
    vals = [v for _, v in rep.carleman_checkpoints]
    assert vals[-1] - vals[-2] > 0.1  # no plateau: roughly log 2 per doubling


def test_regularity_rejects_bad_arguments(meixner):
    with pytest.raises(ValueError):
        jc.regularity_diagnostics(meixner, 2, 1, 2)
