"""Spectral classification of periodically modulated Jacobi parameters.

The label comes from the N-step periodic transfer matrix X at 0:

    |tr X(0)| < 2             case I    (absolutely continuous on R)
    |tr X(0)| = 2, X = +-Id   case IIa
    |tr X(0)| = 2, otherwise  case IIb  (non-diagonalizable)
    |tr X(0)| > 2             case III  (purely discrete)

For IIa and IIb the limit h(x) of the rescaled discriminants of the finite
transfer matrices decides the absolutely continuous zone {h < 0}.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln

from .cd_kernel import kernel_diagonal
from .errors import ConvergenceError
from .jacobi_core import (
    FamilySpec,
    JacobiParameters,
    PeriodicProfile,
    discriminant,
    periodic_step,
    periodic_transfer,
)
from .nevai import TestFunction
from .quadrature import DiscretizedMeasure, features, gauss_rule, modify_measure, stieltjes_from_discrete

TOL = 1e-9
H_JS = tuple(2**k for k in range(4, 11))
SCAN_POINTS = 1000


@dataclass
class CaseReport:
    trace: float
    discriminant: float
    label: str
    epsilon: int | None = None
    h_coeffs: list | None = None
    lambda_minus: list = field(default_factory=list)
    boundary_roots: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def end(v):
            return None if not math.isfinite(v) else v

        return {
            "trace": self.trace,
            "discriminant": self.discriminant,
            "label": self.label,
            "epsilon": self.epsilon,
            "h_coeffs": self.h_coeffs,
            "lambda_minus": [[end(lo), end(hi)] for lo, hi in self.lambda_minus],
            "boundary_roots": list(self.boundary_roots),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def family_profile(spec: FamilySpec) -> PeriodicProfile:
    """The periodic profile (alpha, beta) each built-in family is modulated by."""
    fam = spec.family
    if fam == "freud":
        return PeriodicProfile((1.0,), (0.0,))
    if fam == "meixner":
        root = math.sqrt(spec.p)
        return PeriodicProfile((1.0,), (root + 1.0 / root,))
    if fam == "generalized-hermite":
        return PeriodicProfile((1.0, 1.0), (0.0, 0.0))
    if fam == "laguerre-type":
        return PeriodicProfile((1.0,), (2.0,))
    if fam in ("periodic-modulated", "periodic-blend"):
        return spec.profile
    raise ValueError(f"family {fam} has no built-in periodic profile")


def classify(profile: PeriodicProfile, tol: float = TOL) -> CaseReport:
    """Case label from the trace and diagonalizability of X_0(0).

    A trace within ``tol`` of +-2 that is measurably off +-2 in floating point,
    or a defect from +-Id close to ``tol``, is reported as borderline.
    """
    m = periodic_transfer(profile, 0, 0.0)
    tr = float(np.trace(m))
    report = CaseReport(trace=tr, discriminant=discriminant(m), label="")
    gap = abs(tr) - 2.0
    exact = 64 * np.finfo(float).eps * max(1.0, float(np.abs(m).max()))
    if gap < -tol:
        report.label = "I"
        report.lambda_minus = [(-math.inf, math.inf)]
    elif gap > tol:
        report.label = "III"
    else:
        eps = 1 if tr > 0 else -1
        report.epsilon = eps
        defect = float(np.abs(m - eps * np.eye(2)).max())
        if abs(gap) > exact or tol / 10 <= defect <= tol * 10:
            report.label = "borderline"
        else:
            report.label = "IIa" if defect < tol else "IIb"
    return report


# --------------------------------------------------------------------------
# h limits


@dataclass
class HLimit:
    x: float
    j_list: list
    values: list
    stabilized: bool

    @property
    def estimate(self) -> float:
        return self.values[-1]


def _scaled_discriminant(params, profile, case, j, x, gamma):
    N = profile.period
    start = j * N
    a, b = params.arrays(start + N)
    m = np.eye(2)
    for k in range(start, start + N):
        m = np.array([[0.0, 1.0], [-a[k - 1] / a[k], (x - b[k]) / a[k]]]) @ m
    det = a[start - 1] / a[start + N - 1]  # product of a_{k-1}/a_k
    disc = np.trace(m) ** 2 - 4 * det
    last = start + N - 1
    if case == "IIa":
        return a[last] ** 2 * disc
    weight = a[last] if gamma is None else gamma(last)
    return weight * disc


def h_limit(params: JacobiParameters, profile: PeriodicProfile, x: float, j_list=H_JS,
            case: str | None = None, gamma: Callable | None = None) -> HLimit:
    """a_{jN+N-1}^2 discr X_{jN}(x) (IIa) or gamma_{jN+N-1} discr X_{jN}(x) (IIb).

    ``gamma`` is the IIb envelope as a function of the index; by default
    gamma_n = a_n.  Stabilization means the last two values agree to 1%.
    """
    case = case or classify(profile).label
    if case not in ("IIa", "IIb"):
        raise ValueError(f"h-limit is defined for cases IIa and IIb, not {case}")
    j_list = [int(j) for j in j_list]
    if min(j_list) < 1 or any(b <= a for a, b in zip(j_list, j_list[1:])):
        raise ValueError("j_list must be ascending positive integers")
    vals = [float(_scaled_discriminant(params, profile, case, j, x, gamma)) for j in j_list]
    stable = len(vals) > 1 and abs(vals[-1] - vals[-2]) <= 0.01 * max(abs(vals[-1]), abs(vals[-2]))
    return HLimit(float(x), j_list, vals, bool(stable))


def largest_j(params: JacobiParameters, period: int) -> int:
    """Largest j in the default list with coefficients up to (j + 1) N available."""
    top = params.max_index
    if top is None:
        return H_JS[-1]
    fits = [j for j in H_JS if (j + 1) * period <= top + 1]
    if fits:
        return fits[-1]
    if top + 1 < 2 * period:
        raise ValueError("parameter table too short for any h estimate")
    return (top + 1) // period - 1


def sign_bands(func: Callable[[float], float], window: tuple[float, float], points: int = SCAN_POINTS,
               xtol: float = 1e-12):
    """Intervals where func < 0 inside the window and the sign-change roots.

    Scans ``points`` equispaced samples then bisects each bracket.  Bands
    touching the window edge are left open toward infinity.
    """
    lo, hi = window
    xs = np.linspace(lo, hi, points)
    vals = np.array([func(x) for x in xs])
    roots = []
    for k in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        roots.append(float(optimize.bisect(func, xs[k], xs[k + 1], xtol=xtol)))
    for k in np.flatnonzero(vals == 0):
        roots.append(float(xs[k]))
    roots.sort()
    edges = [-math.inf] + roots + [math.inf]
    bands = []
    for left, right in zip(edges[:-1], edges[1:]):
        probe_lo = lo if left == -math.inf else left
        probe_hi = hi if right == math.inf else right
        if func(0.5 * (probe_lo + probe_hi)) < 0:
            bands.append((left, right))
    return bands, roots


def h_report(params: JacobiParameters, profile: PeriodicProfile, case: str, window=(-4.0, 4.0),
             j: int | None = None, gamma=None, fit_points: Sequence[float] | None = None):
    """Polynomial fit of h, its negative bands and roots at the final j.

    The fit has degree 2 (IIa) or 1 (IIb) over ``fit_points``.  Bands and
    roots come from the finite-j function itself, which converges to h.
    By default j is the largest of 2^4..2^10 the parameter table covers.
    """
    if j is None:
        j = largest_j(params, profile.period)
    degree = 2 if case == "IIa" else 1
    if fit_points is None:
        fit_points = np.linspace(-1.0, 1.0, 5)

    def h_j(x):
        return float(_scaled_discriminant(params, profile, case, j, x, gamma))

    coeffs = np.polyfit(fit_points, [h_j(x) for x in fit_points], degree)[::-1]
    bands, roots = sign_bands(h_j, window)
    return [float(c) for c in coeffs], bands, roots


def _negative_bands(func, roots):
    """Intervals between consecutive roots on which func is negative."""
    edges = [-math.inf] + list(roots) + [math.inf]
    bands = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if math.isfinite(lo) and math.isfinite(hi):
            probe = 0.5 * (lo + hi)
        elif math.isfinite(lo):
            probe = lo + 1.0
        elif math.isfinite(hi):
            probe = hi - 1.0
        else:
            probe = 0.0
        if func(probe) < 0:
            bands.append((lo, hi))
    return bands


# --------------------------------------------------------------------------
# Asymptotic profiles


@dataclass
class AsymptoticProfile:
    """rho_n and upsilon for one of the cases; w(x) = 1 + x^2."""

    case: str
    rho: Callable[[int], float]
    upsilon: Callable
    support: list
    exceptional: list = field(default_factory=list)

    @staticmethod
    def w(x):
        return 1.0 + np.asarray(x, dtype=float) ** 2

    def nu_integral(self, f: Callable, limit: int = 200) -> float:
        """int f upsilon dlambda over the support, by adaptive quadrature."""
        total = 0.0
        for lo, hi in self.support:
            breaks = [p for p in self.exceptional if lo < p < hi]
            pieces = [lo] + breaks + [hi]
            for a, b in zip(pieces[:-1], pieces[1:]):
                with warnings.catch_warnings():
                    warnings.simplefilter("error", integrate.IntegrationWarning)
                    try:
                        val, err = integrate.quad(lambda t: float(f(t) * self.upsilon(t)), a, b, limit=limit)
                    except integrate.IntegrationWarning as exc:
                        raise ConvergenceError(f"integral over ({a}, {b}) diverges or did not converge: {exc}") from None
                if not err <= 1e-8 * max(1.0, abs(val)):
                    raise ConvergenceError(f"integral over ({a}, {b}) not converged (error {err:.2e})")
                total += val
        return total


def _rho_factory(params, terms):
    cache = {}

    def rho(n: int) -> float:
        if n not in cache:
            cache[n] = math.fsum(terms(np.arange(n), *params.arrays(n)))
        return cache[n]

    return rho


def asymptotic_profile(params: JacobiParameters, profile: PeriodicProfile, case: str,
                       h_coeffs: Sequence[float] | None = None, gamma: Callable | None = None,
                       window=(-4.0, 4.0)) -> AsymptoticProfile:
    """rho_n and upsilon per case.

    I:    rho_n = sum alpha_j/a_j, upsilon = |tr X'| / (pi N sqrt(-discr X)) at 0
    IIa:  rho_n = sum alpha_j/a_j, upsilon = |h'| / (4 pi N alpha_{N-1} sqrt(-h)) on {h<0}
    IIb:  rho_n = sum sqrt(alpha_j gamma_j)/a_j, upsilon = sqrt(alpha_{N-1}) |tr X'| / (pi N sqrt(-h))
    blend: rho_n = n, upsilon from the blend transfer matrix.

    ``h_coeffs`` (ascending) replaces the numerically fitted h.
    """
    N = profile.period
    alpha = np.array(profile.alpha)
    if case == "III":
        raise ValueError("no a.c. profile: case III measures are purely discrete")
    if case == "blend":
        bands, roots = blend_bands(profile)

        def ups_blend(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            flat = x.ravel()
            for i, xv in enumerate(flat):
                m, dm = blend_transfer(profile, xv, with_derivative=True)
                disc = discriminant(m)
                if disc < 0:
                    out.ravel()[i] = abs(np.trace(dm)) / (math.pi * (N + 2) * math.sqrt(-disc))
            return out if out.ndim else float(out)

        return AsymptoticProfile("blend", lambda n: float(n), ups_blend, bands, roots)
    if case not in ("I", "IIa", "IIb"):
        raise ValueError(f"unknown case {case!r}")
    m0, dm0 = periodic_transfer(profile, 0, 0.0, with_derivative=True)
    tr_prime = abs(float(np.trace(dm0)))

    def plain(idx, a, b):
        return alpha[idx % N] / a

    if case == "I":
        value = tr_prime / (math.pi * N * math.sqrt(-discriminant(m0)))
        return AsymptoticProfile(
            "I", _rho_factory(params, plain), lambda x: value + 0.0 * np.asarray(x, dtype=float),
            [(-math.inf, math.inf)],
        )
    if h_coeffs is None:
        h_coeffs, _, _ = h_report(params, profile, case, window, gamma=gamma)
    poly = np.polynomial.Polynomial(h_coeffs)
    deriv = poly.deriv()
    roots = sorted(float(r.real) for r in poly.roots() if abs(r.imag) <= 1e-9 * max(1.0, abs(r)))
    support = _negative_bands(poly, roots)

    if case == "IIa":
        scale = 4 * math.pi * N * alpha[N - 1]

        def ups(x):
            x = np.asarray(x, dtype=float)
            hx = poly(x)
            neg = hx < 0
            return np.where(neg, np.abs(deriv(x)) / (scale * np.sqrt(np.where(neg, -hx, 1.0))), 0.0)

        rho = _rho_factory(params, plain)
    else:
        scale = math.sqrt(alpha[N - 1]) * tr_prime / (math.pi * N)

        def ups(x):
            x = np.asarray(x, dtype=float)
            hx = poly(x)
            neg = hx < 0
            return np.where(neg, scale / np.sqrt(np.where(neg, -hx, 1.0)), 0.0)

        def iib(idx, a, b):
            env = a if gamma is None else np.array([gamma(int(i)) for i in idx])
            return np.sqrt(alpha[idx % N] * env) / a

        rho = _rho_factory(params, iib)
    return AsymptoticProfile(case, rho, ups, support, roots)


def freud_rho_reference(gamma: float, n: int) -> float:
    """The comparison sequence (1/2) (Gamma(g/2) Gamma(1/2) / Gamma((1+g)/2))^(1/g) sum j^(-1/g)."""
    const = 0.5 * math.exp((gammaln(gamma / 2) + gammaln(0.5) - gammaln((1 + gamma) / 2)) / gamma)
    return const * math.fsum(np.arange(1, n + 1) ** (-1.0 / gamma))


def family_density(spec: FamilySpec) -> Callable:
    """Density of the absolutely continuous weight families, normalized."""
    fam = spec.family
    if fam == "freud":
        g = spec.gamma
        c = math.exp(math.log(g) - math.log(2.0) - gammaln(1 / g))

        def dens(x):
            return c * np.exp(-np.abs(x) ** g)

    elif fam == "generalized-hermite":
        t = spec.t
        c = math.exp(-gammaln((1 + t) / 2))

        def dens(x):
            x = np.asarray(x, dtype=float)
            return c * np.abs(x) ** t * np.exp(-x * x)

    elif fam == "laguerre-type":
        s, k = spec.gamma, spec.kappa
        c = math.exp(math.log(k) - gammaln((s + 1) / k))

        def dens(x):
            x = np.asarray(x, dtype=float)
            pos = x > 0
            xp = np.where(pos, x, 1.0)
            return np.where(pos, c * xp**s * np.exp(-(xp**k)), 0.0)

    else:
        raise ValueError(f"family {fam} has no closed-form density")
    return dens


# --------------------------------------------------------------------------
# Limit checks


def kernel_limit_check(params: JacobiParameters, asym: AsymptoticProfile, x: float, n_list,
                       density: Callable, radius: float = 0.1) -> list[dict]:
    """r_n = K_n(x,x) mu'(x) / rho_n against upsilon(x), per n."""
    for p in asym.exceptional:
        if abs(x - p) < radius:
            raise ValueError(
                f"x={x} lies within {radius} of the exceptional point {p}; move x or shrink the radius"
            )
    if not any(lo < x < hi for lo, hi in asym.support):
        raise ValueError(f"x={x} lies outside the absolutely continuous region")
    target = float(asym.upsilon(x))
    dens = float(density(x))
    rows = []
    for n in n_list:
        r_n = float(kernel_diagonal(params, int(n), x)) * dens / asym.rho(int(n))
        rows.append({"n": int(n), "r_n": r_n, "target": target, "rel_error": abs(r_n / target - 1)})
    return rows


@dataclass(frozen=True)
class WeakLimit:
    lhs: float
    rhs: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)


def weak_lhs(params: JacobiParameters, rho_n: float, f: TestFunction, n: int,
             dm: DiscretizedMeasure) -> float:
    """(1/rho_n) int f K_n(x,x) / (1+x^2) dmu on the discretization."""
    phi = features(params, n, dm)
    kw = np.sum(phi**2, axis=1)  # w_i K_n(x_i, x_i)
    return math.fsum(f(dm.nodes) * kw / (1 + dm.nodes**2)) / rho_n


def weak_limit_check(params: JacobiParameters, asym: AsymptoticProfile, f: TestFunction, n: int,
                     dm_big: DiscretizedMeasure | None = None, g: TestFunction | None = None) -> WeakLimit:
    """Both sides of the weak convergence of K_n(x,x)/(rho_n (1+x^2)) dmu.

    With ``g`` the left side uses the kernel of g mu (its normalization does
    not matter: the kernel scales inversely to the mass).  The default
    discretization is the 4n-point Gauss rule.
    """
    if dm_big is None:
        dm_big = gauss_rule(params, 4 * n)
    if dm_big.size < 4 * n:
        raise ValueError(f"discretization has {dm_big.size} nodes; at least {4 * n} required")
    rho_n = asym.rho(n)
    if g is None:
        lhs = weak_lhs(params, rho_n, f, n, dm_big)
    else:
        mod = modify_measure(dm_big, g)
        a, b = stieltjes_from_discrete(mod, n)
        lhs = weak_lhs(JacobiParameters.from_table(a, b, "modified"), rho_n, f, n, mod)
    rhs = asym.nu_integral(lambda t: f(np.array(t)) / (1 + t * t))
    return WeakLimit(lhs, rhs)


# --------------------------------------------------------------------------
# Periodic blend


def blend_transfer(profile: PeriodicProfile, x: float, with_derivative: bool = False):
    """Limit of the (N+2)-step transfer matrices of an N-periodic blend.

    [[0, -1], [a_{N-1}/a_0, -(2x - b_0)/a_0]] times B_{N-1}(x) ... B_1(x),
    with (a, b) the profile.  The lower-left sign makes det = 1; this was
    checked against long products of the actual one-step matrices.
    """
    N = profile.period
    al0, be0 = profile.alpha[0], profile.beta[0]
    m = np.eye(2)
    dm = np.zeros((2, 2))
    for n in range(1, N):
        step = periodic_step(profile, n, x)
        dstep = np.array([[0.0, 0.0], [0.0, 1.0 / profile.alpha_at(n)]])
        m, dm = step @ m, dstep @ m + step @ dm
    head = np.array([[0.0, -1.0], [profile.alpha[N - 1] / al0, -(2 * x - be0) / al0]])
    dhead = np.array([[0.0, 0.0], [0.0, -2.0 / al0]])
    out = head @ m
    if with_derivative:
        return out, dhead @ m + head @ dm
    return out


def blend_window(profile: PeriodicProfile) -> tuple[float, float]:
    reach = 2.0 * max(abs(b) for b in profile.beta) + 4.0 * max(profile.alpha) + 2.0
    return -reach, reach


def blend_bands(profile: PeriodicProfile, window=None, points: int = SCAN_POINTS):
    """Bands of {discr X_1 < 0} and the roots bounding them."""
    window = window or blend_window(profile)
    bands, roots = sign_bands(lambda x: discriminant(blend_transfer(profile, x)), window, points)
    return bands, roots
