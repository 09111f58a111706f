"""Orthogonal polynomial ensembles on a discretized measure.

The n-point ensemble restricted to the nodes of a discretization is the
projection determinantal process whose kernel is K_n(x_i, x_j) sqrt(w_i w_j),
that is Phi Phi^T for the feature matrix Phi[i, j] = sqrt(w_i) p_j(x_i).
Samples come from the sequential chain rule: pick a node with probability
proportional to the residual diagonal, project its feature vector out, and
repeat n times.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .jacobi_core import JacobiParameters
from .nevai import TestFunction
from .quadrature import DiscretizedMeasure, features, gauss_rule, stieltjes_from_discrete

EPSILON = 0.1
NODE_FACTOR = 4
_CHUNK_ENTRIES = 2**22  # draws * M * n processed at once


class EnsembleSampler:
    """Projection-kernel feature matrix for the n-point ensemble on dm.

    Without ``params`` the orthonormal polynomials of dm itself are used
    (recovered by the Stieltjes procedure).
    """

    def __init__(self, dm: DiscretizedMeasure, n: int, params: JacobiParameters | None = None):
        dm = dm.normalized()
        M = dm.size
        if not 1 <= n <= M:
            raise ValueError(f"ensemble size must satisfy 1 <= n <= {M}")
        if params is None:
            params = _own_parameters(dm, n)
        self.dm = dm
        self.n = n
        self.features = features(params, n, dm)
        gram = self.features.T @ self.features
        err = float(np.abs(gram - np.eye(n)).max())
        if err > 1e-10:
            raise ValueError(
                f"polynomials are not orthonormal on the discretization (Gram error {err:.1e})"
            )
        self.features.flags.writeable = False
        self.diagonal = np.sum(self.features**2, axis=1)  # w_i K_n(x_i, x_i)

    @property
    def size(self) -> int:
        return self.dm.size


def _own_parameters(dm, n):
    if n == 1:
        return JacobiParameters.from_table([1.0], [0.0], "trivial")
    a, b = stieltjes_from_discrete(dm, n - 1)
    return JacobiParameters.from_table(a, b, "discrete")


def _draw_rng(seed: int, index: int) -> np.random.Generator:
    # keyed by (seed, draw index): any draw can be regenerated on its own
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass
class SampleBatch:
    seed: int
    draws: np.ndarray  # (count, n) sorted node indices
    start: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        n = self.draws.shape[1]
        out.writerow(["draw_index"] + [f"node_{k}" for k in range(n)])
        for d, row in enumerate(self.draws):
            out.writerow([self.start + d] + [int(i) for i in row])
        return buf.getvalue()


def _sample_chunk(features, uniforms):
    """Chain-rule sampling for a block of draws sharing one feature matrix.

    C[b, k, :] holds the k-th conditional kernel column of draw b, so the
    residual diagonal after k picks is K_ii - sum_l C[b, l, i]^2.
    """
    B, n = uniforms.shape
    M = features.shape[0]
    C = np.zeros((B, n, M))
    resid = np.broadcast_to(np.sum(features**2, axis=1), (B, M)).copy()
    picks = np.empty((B, n), dtype=np.int64)
    rows = np.arange(B)
    for k in range(n):
        if resid.min() < -1e-10:
            raise ArithmeticError("residual kernel diagonal became negative; orthogonality lost")
        np.maximum(resid, 0.0, out=resid)
        cum = np.cumsum(resid, axis=1)
        target = uniforms[:, k] * cum[:, -1]
        idx = np.minimum((cum < target[:, None]).sum(axis=1), M - 1)
        # a boundary uniform may land on a node with zero residual
        idx = np.where(resid[rows, idx] > 0, idx, np.argmax(resid > 0, axis=1))
        picks[:, k] = idx
        col = features[idx] @ features.T  # K(x_s, .) for every draw, (B, M)
        if k:
            prev = C[rows, :k, idx]  # (B, k)
            col -= np.matmul(prev[:, None, :], C[:, :k, :])[:, 0, :]
        col /= np.sqrt(resid[rows, idx])[:, None]
        C[:, k, :] = col
        resid -= col**2
        resid[rows, idx] = 0.0
    picks.sort(axis=1)
    return picks


def sample(es: EnsembleSampler, seed: int, count: int, start: int = 0) -> SampleBatch:
    """``count`` independent draws numbered start, start + 1, ...

    Draw d uses its own generator keyed by (seed, d), so batches are
    reproducible and may be split arbitrarily.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    n, M = es.n, es.size
    uniforms = np.array([_draw_rng(seed, start + d).random(n) for d in range(count)]).reshape(count, n)
    chunk = max(1, _CHUNK_ENTRIES // (M * n))
    parts = [_sample_chunk(es.features, uniforms[i : i + chunk]) for i in range(0, count, chunk)]
    draws = np.concatenate(parts) if parts else np.zeros((0, n), dtype=np.int64)
    return SampleBatch(seed, draws, start)


def mean_statistic(es: EnsembleSampler, f) -> float:
    """E[sum f(lambda_i)] = sum_i w_i f(x_i) K_n(x_i, x_i)."""
    return math.fsum(f(es.dm.nodes) * es.diagonal)


def var_statistic(es: EnsembleSampler, f) -> float:
    """Var[sum f(lambda_i)] = sum f^2 w K_n - sum_{i,j} f_i f_j (w_i w_j) K_n(x_i, x_j)^2."""
    fx = f(es.dm.nodes)
    first = math.fsum(fx**2 * es.diagonal)
    cross = es.features.T @ (fx[:, None] * es.features)
    return first - math.fsum((cross**2).ravel())


@dataclass
class StatisticReport:
    exact_mean: float
    exact_variance: float
    mc_mean: float | None = None
    mc_variance: float | None = None
    standard_error: float | None = None
    draws: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "exact_mean": self.exact_mean,
                "exact_variance": self.exact_variance,
                "mc_mean": self.mc_mean,
                "mc_variance": self.mc_variance,
                "standard_error": self.standard_error,
                "draws": self.draws,
            },
            indent=2,
        )


def statistic_report(es: EnsembleSampler, f, seed: int = 0, draws: int = 0) -> StatisticReport:
    """Exact mean and variance, plus Monte Carlo estimates when draws > 0."""
    report = StatisticReport(mean_statistic(es, f), var_statistic(es, f))
    if draws > 0:
        fx = f(es.dm.nodes)
        batch = sample(es, seed, draws)
        values = np.array([math.fsum(fx[row]) for row in batch.draws])
        report.mc_mean = math.fsum(values) / draws
        report.mc_variance = float(np.var(values, ddof=1)) if draws > 1 else 0.0
        report.standard_error = math.sqrt(report.mc_variance / draws)
        report.draws = draws
    return report


@dataclass
class LLNRow:
    n: int
    nodes: int
    rho: float
    mean_over_rho: float
    var_over_rho: float
    target: float
    bound: float
    mc_mean_over_rho: float | None = None
    mc_stderr_over_rho: float | None = None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class LLNTable:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        fields = list(LLNRow.__dataclass_fields__)
        out.writerow(fields)
        for row in self.rows:
            out.writerow(["" if v is None or (isinstance(v, float) and math.isnan(v))
                          else repr(v) if isinstance(v, float) else v
                          for v in (getattr(row, k) for k in fields)])
        return buf.getvalue()


def lln_experiment(params: JacobiParameters, profile, f: TestFunction, n_list, draws: int = 0,
                   seed: int = 0, epsilon: float = EPSILON, node_factor: int = NODE_FACTOR) -> LLNTable:
    """Law-of-large-numbers ingredients per n.

    Each n uses the Gauss rule with node_factor * n nodes.  ``profile`` is an
    AsymptoticProfile supplying rho_n and the limit measure nu = upsilon dx.
    The bound column is 2 exp(-epsilon rho_n / (6 sup|f|)).  The target is NaN
    when f is not integrable against nu (for instance f = 1 in case I).
    """
    if node_factor < 4:
        raise ValueError("each n needs at least 4n nodes")
    if not math.isfinite(f.bound):
        raise ValueError("the law of large numbers needs a bounded test function")
    try:
        target = profile.nu_integral(f)
    except ConvergenceError:
        target = math.nan  # f is not integrable against the limit measure
    table = LLNTable()
    for n in n_list:
        n = int(n)
        dm = gauss_rule(params, node_factor * n)
        es = EnsembleSampler(dm, n, params)
        rho = profile.rho(n)
        row = LLNRow(
            n=n,
            nodes=dm.size,
            rho=rho,
            mean_over_rho=mean_statistic(es, f) / rho,
            var_over_rho=var_statistic(es, f) / rho,
            target=target,
            bound=2 * math.exp(-epsilon * rho / (6 * f.bound)),
        )
        if draws > 0:
            rep = statistic_report(es, f, seed, draws)
            row.mc_mean_over_rho = rep.mc_mean / rho
            row.mc_stderr_over_rho = rep.standard_error / rho
        table.rows.append(row)
    return table
