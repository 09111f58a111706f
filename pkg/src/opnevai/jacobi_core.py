"""Jacobi parameters, orthonormal polynomial evaluation and transfer matrices.

Orthonormal polynomials are generated by the three-term recurrence

    p_0 = 1,  p_1 = (x - b_0) / a_0,
    x p_n = a_{n-1} p_{n-1} + b_n p_n + a_n p_{n+1}.

Values of p_n grow or decay geometrically away from the bulk of the measure,
so evaluation carries a separate log-scale and rescales by exact powers of two.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InsufficientResolution

RESCALE_BOUND = 2.0**512
_LOG2 = math.log(2.0)

FAMILIES = (
    "freud",
    "meixner",
    "generalized-hermite",
    "laguerre-type",
    "periodic-modulated",
    "periodic-blend",
    "custom-table",
)

# coefficient count resolved for weight-defined families unless overridden
DEFAULT_RESOLUTION = 384


@dataclass(frozen=True)
class PeriodicProfile:
    """N-periodic sequences alpha (positive) and beta (real), indexed over Z."""

    alpha: tuple
    beta: tuple

    def __post_init__(self):
        alpha = tuple(float(v) for v in np.atleast_1d(self.alpha))
        beta = tuple(float(v) for v in np.atleast_1d(self.beta))
        if len(alpha) == 0 or len(alpha) != len(beta):
            raise ValueError("alpha and beta must be non-empty and of equal length")
        if any(not (v > 0) or not math.isfinite(v) for v in alpha):
            raise ValueError("all alpha must be positive and finite")
        if any(not math.isfinite(v) for v in beta):
            raise ValueError("all beta must be finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def period(self) -> int:
        return len(self.alpha)

    def alpha_at(self, n: int) -> float:
        return self.alpha[n % self.period]

    def beta_at(self, n: int) -> float:
        return self.beta[n % self.period]

    def scaled(self, c: float) -> "PeriodicProfile":
        return PeriodicProfile(tuple(c * v for v in self.alpha), tuple(c * v for v in self.beta))


@dataclass(frozen=True)
class FamilySpec:
    """A named family of Jacobi parameters together with its parameters.

    ``gamma``: freud exponent (>= 1) or laguerre-type power (> -1).
    ``s``, ``p``: meixner parameters.  ``t``: generalized Hermite power.
    ``kappa``: laguerre-type exponent (integer >= 2).
    ``profile`` and ``exponent``: periodic families, with envelope (n+1)**exponent.
    ``path``: custom table file.
    """

    family: str
    gamma: float | None = None
    s: float | None = None
    p: float | None = None
    t: float | None = None
    kappa: int | None = None
    profile: PeriodicProfile | None = None
    exponent: float | None = None
    path: str | None = None

    def __post_init__(self):
        fam = self.family
        if fam not in FAMILIES:
            raise ValueError(f"unknown family {fam!r}; expected one of {', '.join(FAMILIES)}")

        def need(name):
            value = getattr(self, name)
            if value is None:
                raise ValueError(f"family {fam} requires parameter {name}")
            return value

        if fam == "freud":
            if not need("gamma") >= 1:
                raise ValueError("freud requires gamma >= 1")
        elif fam == "meixner":
            if not need("s") > 0:
                raise ValueError("meixner requires s > 0")
            if not 0 < need("p") < 1:
                raise ValueError("meixner requires 0 < p < 1")
        elif fam == "generalized-hermite":
            if not need("t") > -1:
                raise ValueError("generalized-hermite requires t > -1")
        elif fam == "laguerre-type":
            if not need("gamma") > -1:
                raise ValueError("laguerre-type requires gamma > -1")
            kappa = need("kappa")
            if int(kappa) != kappa or kappa < 2:
                raise ValueError("laguerre-type requires integer kappa >= 2")
            object.__setattr__(self, "kappa", int(kappa))
        elif fam in ("periodic-modulated", "periodic-blend"):
            if not isinstance(need("profile"), PeriodicProfile):
                raise ValueError(f"{fam} requires a PeriodicProfile")
            if self.exponent is None:
                object.__setattr__(self, "exponent", 1.0)
            if not self.exponent > 0:
                raise ValueError("envelope exponent must be positive")
        elif fam == "custom-table":
            need("path")

    @property
    def weight_defined(self) -> bool:
        if self.family == "freud":
            return self.gamma != 2
        return self.family in ("generalized-hermite", "laguerre-type")


class JacobiParameters:
    """Immutable supplier of Jacobi parameters (a_n, b_n).

    Either backed by a vectorized closed form ``fn(indices) -> (a, b)`` or by a
    finite table.  Tables expose ``max_index``; asking beyond it raises
    :class:`InsufficientResolution`.
    """

    def __init__(self, name, *, fn=None, a=None, b=None, spec=None):
        if (fn is None) == (a is None):
            raise ValueError("provide exactly one of a closed form or a table")
        self.name = name
        self.spec = spec
        self._fn = fn
        if a is not None:
            a = np.array(a, dtype=float)
            b = np.array(b, dtype=float)
            if a.ndim != 1 or a.shape != b.shape or a.size == 0:
                raise ValueError("coefficient table must be two equal-length 1-d arrays")
            if not np.all(a > 0):
                bad = int(np.flatnonzero(~(a > 0))[0])
                raise ValueError(f"a_{bad} = {a[bad]!r} is not positive")
            if not np.all(np.isfinite(b)):
                raise ValueError("b table contains non-finite values")
            a.flags.writeable = False
            b.flags.writeable = False
        self._a = a
        self._b = b

    @classmethod
    def from_table(cls, a, b, name="table", spec=None):
        return cls(name, a=a, b=b, spec=spec)

    @classmethod
    def from_file(cls, path):
        a, b = read_table(path)
        return cls(f"custom-table:{path}", a=a, b=b)

    @property
    def max_index(self) -> int | None:
        return None if self._a is None else self._a.size - 1

    def arrays(self, count: int):
        """Return (a_0..a_{count-1}, b_0..b_{count-1}) as arrays."""
        if count <= 0:
            return np.zeros(0), np.zeros(0)
        if self._a is not None:
            if count > self._a.size:
                raise InsufficientResolution(count - 1, self.max_index)
            return self._a[:count], self._b[:count]
        a, b = self._fn(np.arange(count))
        return np.asarray(a, dtype=float), np.asarray(b, dtype=float)

    def __call__(self, n: int):
        if n < 0:
            raise ValueError("index must be non-negative")
        if self._a is not None:
            if n > self.max_index:
                raise InsufficientResolution(n, self.max_index)
            return float(self._a[n]), float(self._b[n])
        a, b = self._fn(np.array([n]))
        return float(a[0]), float(b[0])

    def __repr__(self):
        return f"JacobiParameters({self.name!r})"


# --------------------------------------------------------------------------
# Families


def _freud2(idx):
    return np.sqrt((idx + 1) / 2.0), np.zeros(idx.shape)


def _meixner(s, p):
    def fn(idx):
        n = idx.astype(float)
        a = np.sqrt((n + 1) * (n + s) * p) / (1 - p)
        b = (n + (n + s) * p) / (1 - p)
        return a, b

    return fn


def _modulated(profile, exponent):
    alpha = np.array(profile.alpha)
    beta = np.array(profile.beta)

    def fn(idx):
        env = (idx + 1.0) ** exponent
        r = idx % profile.period
        return alpha[r] * env, beta[r] * env

    return fn


def _blended(profile, exponent):
    period = profile.period
    alpha = np.array(profile.alpha + (1.0, 1.0))
    beta = np.array(profile.beta + (0.0, 0.0))

    def fn(idx):
        j, r = np.divmod(idx, period + 2)
        grow = r >= period
        a = np.where(grow, (j + 1.0) ** exponent, alpha[r])
        return a, np.where(grow, 0.0, beta[r])

    return fn


@functools.lru_cache(maxsize=64)
def jacobi_parameters(spec: FamilySpec, resolution: int = DEFAULT_RESOLUTION) -> JacobiParameters:
    """Build the parameter supplier for a family.

    Weight-defined families are resolved once, here, to ``resolution``
    coefficients by the discretized Stieltjes procedure; results are cached
    so repeated construction is free.
    """
    fam = spec.family
    if fam == "freud" and spec.gamma == 2:
        return JacobiParameters("freud(2)", fn=_freud2, spec=spec)
    if fam == "meixner":
        return JacobiParameters(f"meixner({spec.s}, {spec.p})", fn=_meixner(spec.s, spec.p), spec=spec)
    if fam == "periodic-modulated":
        return JacobiParameters("periodic-modulated", fn=_modulated(spec.profile, spec.exponent), spec=spec)
    if fam == "periodic-blend":
        return JacobiParameters("periodic-blend", fn=_blended(spec.profile, spec.exponent), spec=spec)
    if fam == "custom-table":
        a, b = read_table(spec.path)
        return JacobiParameters(f"custom-table:{spec.path}", a=a, b=b, spec=spec)

    from .quadrature import stieltjes_from_discrete, weight_measure

    dm = weight_measure(spec, resolution)
    a, b = stieltjes_from_discrete(dm, resolution)
    if fam in ("freud", "generalized-hermite"):
        b = np.zeros_like(b)  # even weight
    label = {"freud": f"freud({spec.gamma})", "generalized-hermite": f"generalized-hermite({spec.t})"}
    name = label.get(fam, f"laguerre-type({spec.gamma}, {spec.kappa})")
    return JacobiParameters(name, a=a, b=b, spec=spec)


def coefficients(spec: FamilySpec, n: int, resolution: int = DEFAULT_RESOLUTION):
    """Jacobi parameters (a_n, b_n) of the family's orthonormality measure."""
    if n < 0:
        raise ValueError("index must be non-negative")
    if spec.weight_defined and n >= resolution:
        resolution = max(resolution, 2 * (n + 1))
    return jacobi_parameters(spec, resolution)(n)


def ensure_resolution(params: JacobiParameters, count: int) -> JacobiParameters:
    """Return a supplier holding at least ``count`` coefficients.

    Weight-defined families are re-resolved at a larger size; other tables
    raise :class:`InsufficientResolution`.
    """
    top = params.max_index
    if top is None or count <= top + 1:
        return params
    spec = params.spec
    if spec is not None and spec.weight_defined:
        return jacobi_parameters(spec, max(count, 2 * (top + 1)))
    raise InsufficientResolution(count - 1, top)


def freud4_string_residual(a) -> np.ndarray:
    """Residuals of the Freud string equation for the weight exp(-x**4).

    With orthonormal a_n the equation reads
    4 a_n^2 (a_{n-1}^2 + a_n^2 + a_{n+1}^2) = n + 1  (a_{-1} = 0).
    """
    a2 = np.asarray(a, dtype=float) ** 2
    prev = np.concatenate(([0.0], a2[:-2]))
    n = np.arange(a2.size - 1)
    return 4 * a2[:-1] * (prev + a2[:-1] + a2[1:]) - (n + 1)


def read_table(path):
    """Parse a custom coefficient file with lines ``n a_n b_n``."""
    rows = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 columns 'n a_n b_n'")
        try:
            n = int(parts[0])
            a_n, b_n = (Decimal(v) for v in parts[1:])
        except (ValueError, InvalidOperation):
            raise ValueError(f"{path}:{lineno}: malformed number") from None
        if n in rows:
            raise ValueError(f"{path}:{lineno}: duplicate index {n}")
        if not a_n.is_finite() or not b_n.is_finite():
            raise ValueError(f"{path}:{lineno}: non-finite value")
        if a_n <= 0:
            raise ValueError(f"{path}:{lineno}: a_{n} must be positive")
        rows[n] = (float(a_n), float(b_n))
    if not rows:
        raise ValueError(f"{path}: no coefficients")
    if sorted(rows) != list(range(len(rows))):
        missing = min(set(range(max(rows) + 1)) - set(rows))
        raise ValueError(f"{path}: indices must be contiguous from 0 (missing {missing})")
    a = [rows[i][0] for i in range(len(rows))]
    b = [rows[i][1] for i in range(len(rows))]
    return np.array(a), np.array(b)


def write_table(path, a, b):
    with open(path, "w") as fh:
        fh.write("# n a_n b_n\n")
        for n, (an, bn) in enumerate(zip(a, b)):
            fh.write(f"{n} {float(an)!r} {float(bn)!r}\n")


# --------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True)
class ScaledPair:
    """(p_{n-1}(x), p_n(x)) = (u, v) * exp(log_scale).

    Fields are floats for scalar x and arrays for array x.
    """

    u: float | np.ndarray
    v: float | np.ndarray
    log_scale: float | np.ndarray

    @property
    def prev(self):
        return self.u * np.exp(self.log_scale)

    @property
    def value(self):
        return self.v * np.exp(self.log_scale)


def _renormalize(u, v, ls):
    """Rescale rows with max(|u|,|v|) outside [1, B) back into [1, 2)."""
    big = np.maximum(np.abs(u), np.abs(v))
    bad = (big >= RESCALE_BOUND) | (big < 1.0)
    if bad.any():
        _, e = np.frexp(big[bad])
        e = e - 1
        u[bad] = np.ldexp(u[bad], -e)
        v[bad] = np.ldexp(v[bad], -e)
        ls[bad] += e * _LOG2
    return u, v, ls


def _step(u, v, x, a_prev, a_n, b_n):
    return v, ((x - b_n) * v - a_prev * u) / a_n


def eval_pair(params: JacobiParameters, n: int, x) -> ScaledPair:
    """Evaluate (p_{n-1}(x), p_n(x)) in scaled form, n >= 1."""
    if n < 1:
        raise ValueError("eval_pair requires n >= 1")
    scalar = np.ndim(x) == 0
    a, b = params.arrays(n)
    xs = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    u = np.zeros_like(xs)
    v = np.ones_like(xs)
    ls = np.zeros_like(xs)
    for k in range(n):
        u, v = _step(u, v, xs, a[k - 1] if k else 0.0, a[k], b[k])
        u, v, ls = _renormalize(u, v, ls)
    if not np.all(np.maximum(np.abs(u), np.abs(v)) > 0):
        raise ArithmeticError("consecutive orthonormal polynomials vanished together")
    if scalar:
        return ScaledPair(float(u[0]), float(v[0]), float(ls[0]))
    return ScaledPair(u, v, ls)


def polynomial_table(params: JacobiParameters, n: int, x, log_weight=None) -> np.ndarray:
    """Matrix T[i, j] = p_j(x_i) * exp(log_weight_i / 2) for j < n.

    With Gauss weights this is the feature matrix whose rows are
    sqrt(w_i) (p_0(x_i), ..., p_{n-1}(x_i)); entries stay bounded even where
    p_j itself overflows.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    half = np.zeros_like(xs) if log_weight is None else 0.5 * np.asarray(log_weight, dtype=float)
    out = np.empty((xs.size, n))
    if n == 0:
        return out
    a, b = params.arrays(max(n - 1, 1))
    u = np.zeros_like(xs)
    v = np.ones_like(xs)
    ls = np.zeros_like(xs)
    out[:, 0] = np.exp(half)
    for k in range(n - 1):
        u, v = _step(u, v, xs, a[k - 1] if k else 0.0, a[k], b[k])
        u, v, ls = _renormalize(u, v, ls)
        out[:, k + 1] = v * np.exp(ls + half)
    return out


def scaled_table(params: JacobiParameters, n: int, x):
    """Rows p_j(x_i) * exp(-L_i), j < n, with per-row scales L_i.

    Each row's largest entry is O(1); ratios of bilinear forms in a row,
    such as the Nevai operator, do not depend on the scale.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    vals = np.empty((xs.size, n))
    logs = np.empty((xs.size, n))
    vals[:, 0], logs[:, 0] = 1.0, 0.0
    if n > 1:
        a, b = params.arrays(n - 1)
        u, v, ls = np.zeros_like(xs), np.ones_like(xs), np.zeros_like(xs)
        for k in range(n - 1):
            u, v = _step(u, v, xs, a[k - 1] if k else 0.0, a[k], b[k])
            u, v, ls = _renormalize(u, v, ls)
            vals[:, k + 1], logs[:, k + 1] = v, ls
    top = logs.max(axis=1)
    return vals * np.exp(logs - top[:, None]), top


def scaled_vector(params: JacobiParameters, n: int, x: float):
    """(p_0(x), ..., p_{n-1}(x)) * exp(-L) and L, for a single point x."""
    vals, top = scaled_table(params, n, [x])
    return vals[0], float(top[0])


def log_square_sum(params: JacobiParameters, n: int, x) -> np.ndarray:
    """log sum_{j<n} p_j(x)^2, computed in scaled arithmetic."""
    x = np.asarray(x, dtype=float)
    if n < 1:
        raise ValueError("need at least one term")
    a, b = params.arrays(n - 1)
    u = np.zeros_like(x)
    v = np.ones_like(x)
    ls = np.zeros_like(x)  # log scale of (u, v)
    acc = np.ones_like(x)  # running sum, in units of exp(2 * ls)
    for k in range(n - 1):
        u, v = v, ((x - b[k]) * v - (a[k - 1] if k else 0.0) * u) / a[k]
        acc = acc + v * v
        big = np.maximum(np.abs(v), np.sqrt(acc))
        bad = big > 2.0**256
        if np.any(bad):
            _, ex = np.frexp(np.where(bad, big, 1.0))
            ex = np.where(bad, ex, 0)
            u = np.ldexp(u, -ex)
            v = np.ldexp(v, -ex)
            acc = np.ldexp(acc, -2 * ex)
            ls = ls + ex * _LOG2
    return np.log(acc) + 2 * ls


# --------------------------------------------------------------------------
# Transfer matrices


def transfer_matrix(params: JacobiParameters, n: int, x: float) -> np.ndarray:
    """One-step transfer matrix B_n(x) mapping (p_{n-1}, p_n) to (p_n, p_{n+1})."""
    if n < 1:
        raise ValueError("transfer_matrix requires n >= 1")
    a_prev, _ = params(n - 1)
    a_n, b_n = params(n)
    return np.array([[0.0, 1.0], [-a_prev / a_n, (x - b_n) / a_n]])


def transfer_product(params: JacobiParameters, start: int, count: int, x: float):
    """B_{start+count-1}(x) ... B_start(x), scaled; returns (matrix, log_scale)."""
    a, b = params.arrays(start + count)
    m = np.eye(2)
    ls = 0.0
    for k in range(start, start + count):
        step = np.array([[0.0, 1.0], [-a[k - 1] / a[k], (x - b[k]) / a[k]]])
        m = step @ m
        top = np.abs(m).max()
        if top >= RESCALE_BOUND or top < 1.0 / RESCALE_BOUND:
            _, e = math.frexp(top)
            m = np.ldexp(m, -(e - 1))
            ls += (e - 1) * _LOG2
    return m, ls


def periodic_step(profile: PeriodicProfile, n: int, x: float) -> np.ndarray:
    al = profile.alpha_at(n)
    return np.array([[0.0, 1.0], [-profile.alpha_at(n - 1) / al, (x - profile.beta_at(n)) / al]])


def periodic_transfer(profile: PeriodicProfile, i: int, x: float, with_derivative: bool = False):
    """N-step periodic transfer matrix and optionally its x-derivative.

    The derivative is exact: each factor has derivative [[0, 0], [0, 1/alpha_n]].
    """
    N = profile.period
    if not 0 <= i < N:
        raise ValueError(f"index must satisfy 0 <= i < {N}")
    m = np.eye(2)
    dm = np.zeros((2, 2))
    for n in range(i, N + i):
        step = periodic_step(profile, n, x)
        dstep = np.array([[0.0, 0.0], [0.0, 1.0 / profile.alpha_at(n)]])
        m, dm = step @ m, dstep @ m + step @ dm
    if with_derivative:
        return m, dm
    return m


def discriminant(m) -> float:
    m = np.asarray(m)
    return float(np.trace(m) ** 2 - 4.0 * np.linalg.det(m))


# --------------------------------------------------------------------------
# Regularity diagnostics


def variation_sums(seq: Sequence[float], order: int, period: int = 1) -> np.ndarray:
    """S[i, j-1] = sum_k |Delta^j y_k|^(order/j) for y_k = seq[k period + i]."""
    x = np.asarray(seq, dtype=float)
    out = np.zeros((period, order))
    for i in range(period):
        sub = x[i::period]
        for j in range(1, order + 1):
            if sub.size > j:
                out[i, j - 1] = np.sum(np.abs(np.diff(sub, j)) ** (order / j))
    return out


@dataclass
class RegularityReport:
    order: int
    period: int
    n_max: int
    sums: dict = field(default_factory=dict)
    carleman_checkpoints: list = field(default_factory=list)
    carleman_growing: bool = False


def regularity_diagnostics(params: JacobiParameters, order: int, period: int, n_max: int) -> RegularityReport:
    """Finite partial sums behind the bounded-variation conditions and the Carleman sum.

    Sequences checked: a_{n-1}/a_n, b_n/a_n and 1/a_n for 1 <= n <= n_max,
    each split into ``period`` residue classes with differences up to ``order``.
    Nothing here is a verdict on membership or determinacy.
    """
    if order < 1 or period < 1 or n_max < order + 1:
        raise ValueError("require order >= 1, period >= 1 and n_max >= order + 1")
    a, b = params.arrays(n_max + 1)
    seqs = {
        "a_prev/a": a[:-1] / a[1:],
        "b/a": b[1:] / a[1:],
        "1/a": 1.0 / a[1:],
    }
    report = RegularityReport(order=order, period=period, n_max=n_max)
    report.sums = {name: variation_sums(s, order, period) for name, s in seqs.items()}
    partial = np.cumsum(1.0 / a)
    marks = sorted({min(2**k, n_max) for k in range(int(math.log2(n_max)) + 2)})
    report.carleman_checkpoints = [(m, float(partial[m])) for m in marks]
    vals = [v for _, v in report.carleman_checkpoints]
    report.carleman_growing = all(d > 0 for d in np.diff(vals)) if len(vals) > 1 else False
    return report


