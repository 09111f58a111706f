"""Christoffel-Darboux kernels and the Christoffel function.

K_n(x, y) = sum_{j<n} p_j(x) p_j(y).  Off the diagonal the Christoffel-Darboux
quotient

    K_n(x, y) = a_{n-1} (p_n(x) p_{n-1}(y) - p_{n-1}(x) p_n(y)) / (x - y)

costs O(n) per point and is built from scaled pairs.  Near the diagonal the
quotient cancels badly, so the direct sum takes over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .jacobi_core import JacobiParameters, eval_pair, log_square_sum, scaled_vector
from .quadrature import DiscretizedMeasure, features

SWITCH = 1e-3


@dataclass(frozen=True)
class KernelValue:
    value: float
    method: str  # "cd-formula" or "direct-sum"


def _use_quotient(x: float, y: float) -> bool:
    return abs(x - y) >= SWITCH * (1 + abs(x) + abs(y))


def kernel(params: JacobiParameters, n: int, x: float, y: float) -> KernelValue:
    """K_n(x, y), choosing the CD quotient or the direct sum by separation."""
    if n < 1:
        raise ValueError("kernel requires n >= 1")
    x, y = float(x), float(y)
    if n > 1 and _use_quotient(x, y):
        px = eval_pair(params, n, x)
        py = eval_pair(params, n, y)
        a_last, _ = params(n - 1)
        cross = px.v * py.u - px.u * py.v
        value = a_last * cross / (x - y) * math.exp(px.log_scale + py.log_scale)
        return KernelValue(value, "cd-formula")
    if x == y:
        return KernelValue(float(np.exp(log_square_sum(params, n, x))), "direct-sum")
    vx, lx = scaled_vector(params, n, x)
    vy, ly = scaled_vector(params, n, y)
    return KernelValue(math.fsum(vx * vy) * math.exp(lx + ly), "direct-sum")


def kernel_diagonal(params: JacobiParameters, n: int, x) -> np.ndarray:
    """K_n(x, x) for scalar or array x (inf beyond the double range)."""
    with np.errstate(over="ignore"):
        return np.exp(log_square_sum(params, n, x))


def christoffel(params: JacobiParameters, n: int, x) -> np.ndarray:
    """Christoffel function 1 / K_n(x, x)."""
    if n < 1:
        raise ValueError("christoffel requires n >= 1")
    return np.exp(-log_square_sum(params, n, x))


def identity_residuals(
    params: JacobiParameters, n: int, x: float, p, dm: DiscretizedMeasure
) -> tuple[float, float]:
    """Residuals of the reproducing and mass identities at x.

    reproducing: |int K_n(x, y) p(y) dmu(y) - p(x)|
    mass:        |int K_n(x, y)^2 dmu(y) - K_n(x, x)|

    ``p`` is a numpy Polynomial (or anything with ``degree()``) of degree < n.
    ``dm`` must integrate degree 2n - 2 + deg p exactly; a measure without a
    recorded exact degree is taken to be the measure itself.
    """
    deg = int(p.degree())
    if deg >= n:
        raise ValueError(f"polynomial degree {deg} must be below n={n}")
    need = max(2 * n - 2, n - 1 + deg)
    if dm.exact_degree is not None and dm.exact_degree < need:
        raise ValueError(
            f"quadrature exact to degree {dm.exact_degree}, identities need degree {need}"
        )
    phi = features(params, n, dm)  # sqrt(w_i) p_j(y_i)
    vals, scale = scaled_vector(params, n, x)
    k_row = phi @ vals  # sqrt(w_i) K_n(x, y_i) exp(-scale)
    root_w = np.exp(0.5 * dm.log_weights)
    reproduced = math.fsum(k_row * root_w * p(dm.nodes)) * math.exp(scale)
    mass = math.fsum(k_row**2) * math.exp(2 * scale)
    diag = float(kernel_diagonal(params, n, x))
    return abs(reproduced - float(p(x))), abs(mass - diag)
