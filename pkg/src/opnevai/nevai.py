"""Nevai operators G_n[f], the measures omega_n^x and related diagnostics.

    G_n[f](x) = (1 / K_n(x, x)) int K_n(x, y)^2 f(y) dmu(y)

On a discretized measure this is a weighted average of f over the nodes with
weights omega_i = w_i K_n(x, x_i)^2 / K_n(x, x), which sum to one.  Rows of
the feature matrix sqrt(w_i) p_j(x_i) and a scaled vector p_j(x) give these
weights without ever forming p_j itself, so the common scale cancels.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .cd_kernel import kernel_diagonal
from .errors import ConvergenceError
from .jacobi_core import JacobiParameters, log_square_sum, scaled_table
from .quadrature import (
    DiscretizedMeasure,
    adaptive,
    features,
    gauss_rule,
    modify_measure,
    rule_for_polynomial,
    stieltjes_from_discrete,
)

GRID_DENSITY = 41
EXCLUSION_RADIUS = 0.1


@dataclass(frozen=True)
class TestFunction:
    """A bounded test function with its declared sup-norm.

    ``degree`` is set for polynomials (which are then integrated exactly);
    ``bound`` may be infinite for unbounded polynomials such as y.
    """

    func: Callable
    bound: float
    name: str = "f"
    degree: int | None = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not self.bound > 0:
            raise ValueError("declared sup-norm bound must be positive")

    @property
    def kind(self) -> str:
        return "general-continuous" if self.degree is None else f"polynomial({self.degree})"

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.broadcast_to(np.asarray(self.func(y), dtype=float), y.shape)
        if math.isfinite(self.bound):
            over = np.abs(out) > self.bound * (1 + 1e-12)
            if np.any(over):
                i = int(np.flatnonzero(over.ravel())[0])
                raise ValueError(
                    f"test function {self.name} exceeds its bound {self.bound} at y={y.ravel()[i]!r}"
                )
        return out


def _one(y):
    return np.ones_like(y)


BATTERY = {
    "one": TestFunction(_one, 1.0, "one", degree=0),
    "cauchy": TestFunction(lambda y: 1.0 / (1.0 + y * y), 1.0, "cauchy"),
    "sin": TestFunction(np.sin, 1.0, "sin"),
    "arctan": TestFunction(np.arctan, math.pi / 2, "arctan"),
    "ratio": TestFunction(lambda y: (2.0 + y * y) / (1.0 + y * y), 2.0, "ratio"),
}


# --------------------------------------------------------------------------
# Core evaluation


def omega_weights(params: JacobiParameters, n: int, x, dm: DiscretizedMeasure) -> np.ndarray:
    """Matrix W[k, i] = w_i K_n(x_k, x_i)^2 / K_n(x_k, x_k); rows sum to 1."""
    phi = features(params, n, dm)
    rows, _ = scaled_table(params, n, x)
    proj = rows @ phi.T
    return proj**2 / np.sum(rows**2, axis=1)[:, None]


def _rule_for(params, n, f: TestFunction):
    if f.degree is not None:
        return rule_for_polynomial(params, 2 * n - 2 + f.degree)
    return None


def nevai_values(params: JacobiParameters, n: int, f: TestFunction, xs, dm=None) -> np.ndarray:
    """G_n[f] at every point of xs.

    Without ``dm`` a polynomial f gets an exact Gauss rule and any other f
    goes through the doubling policy.
    """
    if n < 1:
        raise ValueError("Nevai operator requires n >= 1")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))

    def evaluate(rule):
        return omega_weights(params, n, xs, rule) @ f(rule.nodes)

    if dm is None:
        dm = _rule_for(params, n, f)
    if dm is None:
        try:
            value, _ = adaptive(params, n, evaluate)
        except ConvergenceError as exc:
            raise ConvergenceError(f"quadrature not converged: {exc}") from None
        return value
    if f.degree is not None and dm.exact_degree is not None and dm.exact_degree < 2 * n - 2 + f.degree:
        raise ValueError(
            f"quadrature exact to degree {dm.exact_degree}; G_n needs {2 * n - 2 + f.degree}"
        )
    return evaluate(dm)


def nevai_apply(params: JacobiParameters, n: int, f: TestFunction, x: float, dm=None) -> float:
    """G_n[f](x)."""
    return float(nevai_values(params, n, f, [x], dm)[0])


def concentration(params: JacobiParameters, n: int, x: float, eta: float, dm=None) -> float:
    """omega_n^x([x - eta, x + eta]) on the discretized measure.

    The default discretization is the 4n-point Gauss rule.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    if dm is None:
        dm = gauss_rule(params, max(4 * n, 8))
    om = omega_weights(params, n, [x], dm)[0]
    inside = np.abs(dm.nodes - x) <= eta
    return min(math.fsum(om[inside]), 1.0) if inside.any() else 0.0


def make_grid(lo: float, hi: float, density: int = GRID_DENSITY, exclude: Sequence[float] = (),
              radius: float = EXCLUSION_RADIUS) -> np.ndarray:
    """Uniform grid on [lo, hi] with ``density`` points per unit length.

    Points within ``radius`` of an excluded location are dropped.
    """
    count = max(2, int(round((hi - lo) * density)) + 1)
    grid = np.linspace(lo, hi, count)
    for point in exclude:
        grid = grid[np.abs(grid - point) > radius]
    return grid


@dataclass
class NevaiTrace:
    grid: np.ndarray
    n_list: list
    deviations: np.ndarray  # shape (len(n_list), len(grid))
    sup: np.ndarray = field(init=False)

    def __post_init__(self):
        self.sup = self.deviations.max(axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["n", "x", "deviation"])
        for n, row in zip(self.n_list, self.deviations):
            for x, dev in zip(self.grid, row):
                out.writerow([n, repr(float(x)), repr(float(dev))])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["n", "sup_deviation"])
        for n, s in zip(self.n_list, self.sup):
            out.writerow([n, repr(float(s))])
        return buf.getvalue()


def uniform_trace(params: JacobiParameters, f: TestFunction, grid, n_list, dm=None) -> NevaiTrace:
    """|G_n[f](x) - f(x)| over a grid for each n (trend data, no verdict)."""
    grid = np.asarray(grid, dtype=float)
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly ascending")
    target = f(grid)
    dev = np.array([np.abs(nevai_values(params, n, f, grid, dm) - target) for n in n_list])
    return NevaiTrace(grid, n_list, dev)


# --------------------------------------------------------------------------
# Christoffel ratio under a density change


class RatioBounds(NamedTuple):
    lower: float
    ratio: float
    upper: float


def ratio_bounds(params: JacobiParameters, g: TestFunction, n: int, x: float, dm=None,
                 normalize: bool = False) -> RatioBounds:
    """Sandwich 1/G_n[g](x) <= K_n(x,x; g mu) / K_n(x,x; mu) <= G_n[1/g](x).

    By default g mu is taken as it stands (mass int g dmu), so the ratio tends
    to 1/g(x).  With ``normalize`` g is first divided by its mean, which makes
    constant g give (1, 1, 1).  The default discretization is the 4n-point
    Gauss rule of mu.
    """
    if dm is None:
        dm = gauss_rule(params, max(4 * n, 16))
    gx = g(dm.nodes)
    if not np.all(gx > 0):
        raise ValueError("g must be positive at every node")
    scale = math.fsum(dm.weights * gx) / dm.total_mass if normalize else 1.0
    om = omega_weights(params, n, [x], dm)[0]
    lower = 1.0 / math.fsum(om * gx / scale)
    upper = math.fsum(om * scale / gx)
    mod = modify_measure(dm, lambda y: g(y) / scale)
    mass = math.fsum(dm.weights * gx / scale)  # total mass of g mu / scale
    a, b = stieltjes_from_discrete(mod, max(n - 1, 1))
    params_g = JacobiParameters.from_table(a, b, name="modified")
    log_kg = log_square_sum(params_g, n, x) - math.log(mass)
    log_k = log_square_sum(params, n, x)
    return RatioBounds(lower, math.exp(log_kg - log_k), upper)


def hard_bounds(g: TestFunction, dm: DiscretizedMeasure) -> tuple[float, float]:
    """(1 / sup g, sup 1/g) over the nodes."""
    gx = g(dm.nodes)
    return 1.0 / float(gx.max()), 1.0 / float(gx.min())


# --------------------------------------------------------------------------
# Atoms


def atom_limit_check(dm: DiscretizedMeasure, atom: int, n_list) -> list[float]:
    """K_n(x*, x*) mu({x*}) for each n, with dm taken as the true measure.

    ``atom`` indexes the node x*.  Since lambda_n(x*) >= mu({x*}) the values
    never exceed 1, and at n = M they equal 1.
    """
    dm = dm.normalized()
    M = dm.size
    n_list = [int(n) for n in n_list]
    if not 0 <= atom < M:
        raise ValueError(f"atom index must lie in [0, {M})")
    if min(n_list) < 1 or max(n_list) > M:
        raise ValueError(f"n must satisfy 1 <= n <= {M} for a {M}-node measure")
    top = max(n_list)
    if top > 1:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # n_max > M/2 is intended here
            a, b = stieltjes_from_discrete(dm, top - 1)
    else:
        a, b = np.ones(1), np.zeros(1)
    params = JacobiParameters.from_table(a, b, name="atoms")
    x, w = dm.nodes[atom], dm.weights[atom]
    return [float(kernel_diagonal(params, n, x) * w) for n in n_list]
