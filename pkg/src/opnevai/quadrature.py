"""Discretized measures: Gauss rules, Stieltjes recovery and density modification."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from decimal import Decimal, localcontext

import numpy as np
from numba import njit
from scipy.special import gammaln, logsumexp, roots_jacobi

from .errors import ConvergenceError, OrthogonalityLoss
from .jacobi_core import FamilySpec, JacobiParameters, ensure_resolution, log_square_sum, polynomial_table

SWEEP_CAP = 50


@dataclass(frozen=True)
class SymTridiag:
    """Symmetric tridiagonal matrix with diagonal d and off-diagonal e."""

    d: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        d = np.array(self.d, dtype=float, ndmin=1)
        e = np.array(self.e, dtype=float, ndmin=1) if np.size(self.e) else np.zeros(0)
        if e.size != max(d.size - 1, 0):
            raise ValueError("off-diagonal must have length len(d) - 1")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "e", e)

    @classmethod
    def from_jacobi(cls, params: JacobiParameters, M: int) -> "SymTridiag":
        a, b = params.arrays(M)
        return cls(b.copy(), a[: M - 1].copy())

    @property
    def size(self) -> int:
        return self.d.size

    def dense(self) -> np.ndarray:
        return np.diag(self.d) + np.diag(self.e, 1) + np.diag(self.e, -1)

    def norm(self) -> float:
        """Max-row-sum norm (an upper bound for the 2-norm)."""
        rows = np.abs(self.d).copy()
        rows[:-1] += np.abs(self.e)
        rows[1:] += np.abs(self.e)
        return float(rows.max())


class DiscretizedMeasure:
    """Nodes in increasing order with positive weights.

    Weights are held as logarithms: Gauss rules of Freud-type measures carry
    tail weights far below the smallest double, and those nodes still matter
    for high-degree polynomials.  ``exact_degree`` records the polynomial
    degree the rule integrates exactly, when known.
    """

    __slots__ = ("nodes", "log_weights", "exact_degree")

    def __init__(self, nodes, weights=None, exact_degree=None, *, log_weights=None):
        x = np.array(nodes, dtype=float, ndmin=1)
        if log_weights is None:
            w = np.array(weights, dtype=float, ndmin=1)
            if w.shape != x.shape or not np.all(w > 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be positive, finite and match the nodes")
            lw = np.log(w)
        else:
            lw = np.array(log_weights, dtype=float, ndmin=1)
            if lw.shape != x.shape or not np.all(np.isfinite(lw)):
                raise ValueError("log-weights must be finite and match the nodes")
        if x.ndim != 1 or x.size == 0:
            raise ValueError("nodes must be a non-empty 1-d array")
        if np.any(np.diff(x) <= 0):
            raise ValueError("nodes must be strictly increasing")
        x.flags.writeable = False
        lw.flags.writeable = False
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "exact_degree", exact_degree)

    def __setattr__(self, name, value):
        raise AttributeError("DiscretizedMeasure is immutable")

    def __repr__(self):
        return f"DiscretizedMeasure(size={self.size}, exact_degree={self.exact_degree})"

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def log_mass(self) -> float:
        return float(logsumexp(self.log_weights))

    @property
    def total_mass(self) -> float:
        return math.exp(self.log_mass)

    def normalized(self) -> "DiscretizedMeasure":
        return DiscretizedMeasure(
            self.nodes, exact_degree=self.exact_degree, log_weights=self.log_weights - self.log_mass
        )

    def to_csv(self, path=None) -> str:
        """CSV with header ``x,w`` and 17 significant digits.

        Weights below the double range are written as exact decimals.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "w"])
        with localcontext() as ctx:
            ctx.prec = 17
            for xi, lwi in zip(self.nodes, self.log_weights):
                w = math.exp(lwi)
                ws = f"{w:.17g}" if w > 1e-300 else str(+Decimal(repr(float(lwi))).exp())
                writer.writerow([f"{xi:.17g}", ws])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "DiscretizedMeasure":
        """Read from a path or from CSV text with header ``x,w``."""
        if isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source, newline="") as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["x", "w"]:
            raise ValueError("measure CSV must start with header 'x,w'")
        x, lw = [], []
        for row in rows[1:]:
            if not row:
                continue
            w = Decimal(row[1].strip())
            if not w > 0:
                raise ValueError(f"non-positive weight {row[1]!r}")
            x.append(float(row[0]))
            lw.append(float(w.ln()))
        return cls(x, log_weights=lw)


# --------------------------------------------------------------------------
# Symmetric tridiagonal eigenproblem (implicit-shift QL)


@njit(cache=True)
def _tqli(d, e, z0, Z, vectors, tol, cap):
    n = d.size
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= tol * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > cap:
                return l
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                f = z0[i + 1]
                z0[i + 1] = s * z0[i] + c * f
                z0[i] = c * z0[i] - s * f
                if vectors:
                    for k in range(n):
                        f = Z[k, i + 1]
                        Z[k, i + 1] = s * Z[k, i] + c * f
                        Z[k, i] = c * Z[k, i] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


def eigen_tridiag(T: SymTridiag, tol: float = np.finfo(float).eps, vectors: bool = False):
    """Eigenvalues (ascending) and first eigenvector components of T.

    With ``vectors=True`` the full eigenvector matrix is returned as a third
    value (columns ordered like the eigenvalues); this costs O(M^3).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = T.size
    d = T.d.copy()
    e = np.zeros(M)
    e[: M - 1] = T.e
    z0 = np.zeros(M)
    z0[0] = 1.0
    Z = np.eye(M) if vectors else np.zeros((1, 1))
    stuck = _tqli(d, e, z0, Z, vectors, tol, SWEEP_CAP)
    if stuck >= 0:
        raise ConvergenceError(f"eigenvalue iteration did not converge at index {stuck}")
    order = np.argsort(d, kind="stable")
    if vectors:
        return d[order], z0[order], Z[:, order]
    return d[order], z0[order]


# --------------------------------------------------------------------------
# Gauss rules


def gauss_rule(params: JacobiParameters, M: int) -> DiscretizedMeasure:
    """M-point Gauss rule of the measure with the given Jacobi parameters.

    Nodes are eigenvalues of the truncated Jacobi matrix.  Weights are the
    squared first eigenvector components, evaluated through the identity
    w_i = 1 / sum_{j<M} p_j(x_i)^2 so that tiny tail weights keep their
    relative accuracy (the eigenvector route only gives absolute accuracy).

    Near atoms of a discrete measure p_j is a decaying solution of the
    recurrence and forward evaluation is unstable; when the two routes
    disagree in the bulk, the eigenvector components are used throughout.
    """
    if M < 1:
        raise ValueError("node count must be positive")
    params = ensure_resolution(params, M)
    T = SymTridiag.from_jacobi(params, M)
    nodes, first = eigen_tridiag(T)
    if M == 1:
        return DiscretizedMeasure(nodes, np.ones(1), exact_degree=1)
    logw = -log_square_sum(params, M, nodes)
    bulk = first**2 > 1e-8
    if np.any(np.abs(np.exp(logw[bulk]) - first[bulk] ** 2) > 1e-8):
        with np.errstate(divide="ignore"):
            logw = np.where(first**2 > 0, np.log(first**2), logw)
    logw -= logsumexp(logw)
    return DiscretizedMeasure(nodes, exact_degree=2 * M - 1, log_weights=logw)


FEATURE_TOL = 1e-10
_PROBES = 2  # random directions used to test Phi^T Phi = I in O(n M)


def features(params: JacobiParameters, n: int, dm: DiscretizedMeasure) -> np.ndarray:
    """Feature matrix Phi[i, j] = sqrt(w_i) p_j(x_i) for j < n.

    When dm integrates degree 2n - 2 exactly the columns are orthonormal.  If
    forward evaluation breaks that beyond FEATURE_TOL (nodes sitting at atoms), and dm is
    the Gauss rule of ``params``, the rows come from the eigenvectors of the
    truncated Jacobi matrix instead, which are orthonormal by construction.
    """
    phi = polynomial_table(params, n, dm.nodes, dm.log_weights)
    if dm.exact_degree is None or dm.exact_degree < 2 * n - 2:
        return phi
    err = _gram_error(phi)
    if err <= FEATURE_TOL:
        return phi
    M = dm.size
    if dm.exact_degree == 2 * M - 1 and (params.max_index is None or params.max_index >= M - 1):
        T = SymTridiag.from_jacobi(params, M)
        vals, _, vecs = eigen_tridiag(T, vectors=True)
        if np.max(np.abs(vals - dm.nodes)) <= 1e-12 * max(1.0, T.norm()):
            vecs = vecs * np.where(vecs[0] < 0, -1.0, 1.0)
            return np.ascontiguousarray(vecs[:n].T)
    raise OrthogonalityLoss(
        f"forward recurrence lost orthonormality on the discretization (Gram error {err:.1e})"
    )


def _gram_error(phi):
    """Estimate of max |Phi^T Phi - I|: column norms plus fixed random probes.

    Column norms alone miss cross terms, which is where atoms show first.
    """
    n = phi.shape[1]
    diag = float(np.max(np.abs(np.einsum("ij,ij->j", phi, phi) - 1.0)))
    probe = np.random.default_rng(0).standard_normal((n, _PROBES))
    cross = phi.T @ (phi @ probe) - probe
    return max(diag, float(np.max(np.abs(cross))) / float(np.max(np.abs(probe))))


# --------------------------------------------------------------------------
# Stieltjes / Lanczos


def _drain(Q, row, offset, live):
    """Move per-node offsets into the stored entries as they grow.

    A node joins the inner products once its true entry reaches 2^-600;
    before that its stored entries are kept below 2^400.
    """
    idx = np.flatnonzero(~live)
    _, e = np.frexp(np.abs(Q[row, idx]))
    off = offset[idx]
    full = off - e <= 600
    shift = np.where(full, off, np.where(e > 400, e, 0))
    move = shift > 0
    if move.any():
        cols = idx[move]
        block = np.ldexp(Q[: row + 1, cols], -shift[move])
        block[np.abs(block) < 2.0**-960] = 0.0  # denormals stall the BLAS kernels
        Q[: row + 1, cols] = block
        offset[cols] -= shift[move]
    live[idx[full]] = True


def stieltjes_from_discrete(dm: DiscretizedMeasure, n_max: int):
    """Recover a_0..a_{n_max-1}, b_0..b_{n_max-1} of the normalized measure dm.

    Lanczos on diag(nodes) from the start vector sqrt(w), with full
    re-orthogonalization at every step.  Entries whose true size is below the
    double range carry a per-node power-of-two offset until they grow; the
    recurrence is linear per node, so the offset commutes with every step.
    """
    M = dm.size
    if n_max < 1:
        raise ValueError("n_max must be positive")
    if n_max > M - 1:
        raise OrthogonalityLoss(
            f"n_max={n_max} exhausts a {M}-node measure; use more nodes (at least {2 * n_max})"
        )
    if n_max > M / 2:
        warnings.warn(f"n_max={n_max} exceeds M/2={M / 2}; accuracy not guaranteed", stacklevel=2)
    x = dm.nodes
    half = 0.5 * (dm.log_weights - dm.log_mass)
    offset = np.maximum(0, np.ceil((-half - 500.0) / math.log(2.0))).astype(int)
    Q = np.zeros((n_max + 1, M))
    Q[0] = np.exp(half + offset * math.log(2.0))
    live = offset == 0
    Q[0, live] /= np.linalg.norm(Q[0, live])
    a = np.empty(n_max)
    b = np.empty(n_max)
    mask = live.astype(float)
    for k in range(n_max):
        q = Q[k]
        r = x * q
        rl = r * mask if not live.all() else r
        b[k] = q @ rl
        r -= b[k] * q
        if k:
            r -= a[k - 1] * Q[k - 1]
        rl = r * mask if not live.all() else r
        basis = Q[: k + 1]
        c = basis @ rl
        rnorm = np.linalg.norm(rl)
        if rnorm == 0 or np.linalg.norm(c) > 1e-6 * rnorm:
            raise OrthogonalityLoss(
                f"orthogonality lost at step {k} of {n_max} on {M} nodes; use a larger M"
            )
        r -= c @ basis
        b[k] += c[k]
        a[k] = np.linalg.norm(r * mask if not live.all() else r)
        Q[k + 1] = r / a[k]
        if not live.all():
            _drain(Q, k + 1, offset, live)
            mask = live.astype(float)
    return a, b


def modify_measure(dm: DiscretizedMeasure, g) -> DiscretizedMeasure:
    """Weights w_i g(x_i), renormalized to total mass 1."""
    gx = np.broadcast_to(np.asarray(g(dm.nodes), dtype=float), dm.nodes.shape)
    bad = np.flatnonzero(~(gx > 0) | ~np.isfinite(gx))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"density is not positive at node {i} (x={dm.nodes[i]!r}, g={gx[i]!r})")
    lw = dm.log_weights + np.log(gx)
    return DiscretizedMeasure(dm.nodes, log_weights=lw - logsumexp(lw))


def integrate(dm: DiscretizedMeasure, f) -> float:
    """Sum of w_i f(x_i)."""
    fx = np.broadcast_to(np.asarray(f(dm.nodes), dtype=float), dm.nodes.shape)
    return math.fsum(dm.weights * fx)


# --------------------------------------------------------------------------
# Quadrature policy


MAX_NODES = 2**15


def rule_for_polynomial(params: JacobiParameters, degree: int) -> DiscretizedMeasure:
    """Gauss rule exact for integrands of the given polynomial degree."""
    return gauss_rule(params, max(degree, math.ceil((degree + 1) / 2), 1))


def adaptive(params: JacobiParameters, n: int, evaluate, rtol: float = 1e-9, cap: int = MAX_NODES):
    """Evaluate ``evaluate(dm)`` on Gauss rules of 4n, 8n, ... nodes until stable.

    ``evaluate`` may return a scalar or an array; convergence is judged on the
    max-norm.  Returns (value, dm).
    """
    M = max(4 * n, 8)
    prev = evaluate(gauss_rule(params, M))
    while True:
        M *= 2
        if M > cap:
            raise ConvergenceError(f"quadrature not converged within {cap} nodes")
        dm = gauss_rule(params, M)
        cur = evaluate(dm)
        scale = max(np.max(np.abs(cur)), 1e-300)
        if np.max(np.abs(np.asarray(cur) - np.asarray(prev))) <= rtol * scale:
            return cur, dm
        prev = cur


# --------------------------------------------------------------------------
# Weight-defined families


def half_line_rule(s: float, kappa: float, R: float, panels: int, order: int = 20,
                   levels: int = 24, hard_edge: bool = False):
    """Nodes and log-weights for integrals of f(x) x^s exp(-x^kappa) over [0, R].

    Panels are uniform in x, or uniform in sqrt(x) when 0 is a hard edge of
    the support (zeros of the orthogonal polynomials crowd there).  Below
    the first panel the grid is graded geometrically toward 0, and the
    innermost piece absorbs x^s exactly through a Gauss-Jacobi rule.
    """
    t, wt = np.polynomial.legendre.leggauss(order)
    xs, lws = [], []

    def smooth_panel(lo, hi):
        x = lo + (hi - lo) * (t + 1) / 2
        xs.append(x)
        lws.append(np.log(wt * (hi - lo) / 2) + s * np.log(x) - x**kappa)

    u = np.linspace(0.0, 1.0, panels + 1)[1:]
    edges = R * (u**2 if hard_edge else u)
    for lo, hi in zip(edges[:-1], edges[1:]):
        smooth_panel(lo, hi)
    grade = [edges[0] * 0.15**k for k in range(levels + 1)]
    for hi, lo in zip(grade[:-1], grade[1:]):
        smooth_panel(lo, hi)
    # [0, eps] with weight (1 + t)^s on [-1, 1]
    eps = grade[-1]
    tj, wj = roots_jacobi(order, 0.0, s)
    x = eps * (tj + 1) / 2
    xs.append(x)
    lws.append(np.log(wj) + (s + 1) * np.log(eps / 2) - x**kappa)
    x = np.concatenate(xs)
    lw = np.concatenate(lws)
    idx = np.argsort(x)
    return x[idx], lw[idx]


def mrs_number(degree: float, kappa: float) -> float:
    """Mhaskar-Rakhmanov-Saff number of exp(-|x|^kappa) for the given degree.

    Polynomials P of that degree satisfy |P|^2 w <= max over [-r, r] of |P|^2 w.
    """
    lam = math.exp(gammaln(kappa / 2) + gammaln(0.5) - gammaln((kappa + 1) / 2))
    return 2 ** (1 / kappa) * (degree / lam) ** (1 / kappa)


RANGE_FACTOR = 1.25
PANELS_PER_COEFF = 0.25


def weight_measure(spec: FamilySpec, resolution: int, order: int = 20) -> DiscretizedMeasure:
    """Discretize the weight of a weight-defined family.

    The rule is sized to resolve ``resolution`` Jacobi coefficients: it covers
    a fixed multiple of the Mhaskar-Rakhmanov-Saff range of p_n^2 w and puts a
    fixed number of panels per coefficient.
    """
    fam = spec.family
    degree = 2 * resolution + 2
    if fam == "freud":
        s, kappa, symmetric = 0.0, float(spec.gamma), True
        R = RANGE_FACTOR * mrs_number(degree, kappa)
    elif fam == "generalized-hermite":
        s, kappa, symmetric = float(spec.t), 2.0, True
        R = RANGE_FACTOR * mrs_number(degree + abs(s), kappa)
    elif fam == "laguerre-type":
        s, kappa, symmetric = float(spec.gamma), float(spec.kappa), False
        # x = y^2 maps the half-line weight to an even weight exp(-y^(2 kappa))
        R = (RANGE_FACTOR * mrs_number(2 * degree + 2 * abs(s) + 2, 2 * kappa)) ** 2
    else:
        raise ValueError(f"{fam} is not weight-defined")
    # exponents below 2 crowd the zeros near 0 (log-singular density at kappa = 1)
    density = PANELS_PER_COEFF * max(1.0, (2.0 / kappa) ** 2) * (1 if symmetric else 2)
    panels = max(8, math.ceil(density * resolution))
    x, lw = half_line_rule(s, kappa, R, panels, order, hard_edge=not symmetric)
    if symmetric:
        x = np.concatenate((-x[::-1], x))
        lw = np.concatenate((lw[::-1], lw))
    return DiscretizedMeasure(x, log_weights=lw - logsumexp(lw))


__all__ = [
    "SymTridiag",
    "DiscretizedMeasure",
    "eigen_tridiag",
    "gauss_rule",
    "stieltjes_from_discrete",
    "modify_measure",
    "integrate",
    "rule_for_polynomial",
    "adaptive",
    "weight_measure",
    "half_line_rule",
]
