"""Sample-quality diagnostics: entropic transport distance, CDFs, histograms.

The transport diagnostic couples two weighted point clouds with uniform
marginals through a log-domain Sinkhorn-Knopp iteration on the pairwise
Euclidean cost matrix.  The ``penalty`` knob is the sharpness of the Gibbs
kernel exp(-penalty * C): the coupled plan minimizes
sum P C - (1/penalty) h(P), so large penalties approach the unregularized
optimum while penalty -> 0 spreads the plan toward independence.  The solver
anneals the sharpness upward for speed; convergence is always measured at
the target value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import ks_2samp

try:
    from numba import njit, prange
except ImportError:  # pragma: no cover - numba is a declared dependency
    prange = range

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn


__all__ = [
    "OtConfig",
    "OtResult",
    "entropic_ot",
    "marginal_ot_1d",
    "histogram",
    "empirical_cdf",
    "ks_statistic",
    "count_modes",
]


@dataclass(frozen=True)
class OtConfig:
    """Entropic transport settings; ``penalty`` is the Gibbs sharpness."""

    penalty: float = 100.0
    max_iter: int = 50_000
    tol: float = 1e-9
    cost: str = "euclidean"

    def __post_init__(self):
        if self.penalty <= 0:
            raise ValueError("penalty must be positive")
        if self.cost != "euclidean":
            raise ValueError(f"unsupported cost {self.cost!r}")


@dataclass(frozen=True)
class OtResult:
    """Converged transport diagnostic.

    ``distance`` is the regularized objective sum(P C) - (1/penalty) h(P);
    ``transport_cost`` is the unregularized component sum(P C).
    """

    distance: float
    transport_cost: float
    entropy: float
    plan_residual: float
    iterations: int


@njit(parallel=True, cache=True)
def _lse_rows(cost: np.ndarray, other: np.ndarray, reg: float) -> np.ndarray:
    """Row-wise log-sum-exp of (other_j - cost_ij) / reg."""
    n, m = cost.shape
    out = np.empty(n)
    for i in prange(n):
        peak = -np.inf
        for j in range(m):
            v = (other[j] - cost[i, j]) / reg
            if v > peak:
                peak = v
        acc = 0.0
        for j in range(m):
            acc += np.exp((other[j] - cost[i, j]) / reg - peak)
        out[i] = peak + np.log(acc)
    return out


def _pairwise_euclidean(gen: np.ndarray, ref: np.ndarray) -> np.ndarray:
    from scipy.spatial.distance import cdist

    return cdist(gen.T, ref.T, "euclidean")


def entropic_ot(gen: np.ndarray, ref: np.ndarray, cfg: OtConfig = OtConfig()) -> OtResult:
    """Entropic transport diagnostic between two (d, M) sample matrices.

    Both clouds carry uniform weights (1/Mg per generated sample, 1/Mr per
    reference sample).  Raises ConvergenceError if the marginal residual does
    not reach ``cfg.tol`` within ``cfg.max_iter`` update sweeps.
    """
    from .bridge import ConvergenceError

    gen = np.atleast_2d(np.asarray(gen, dtype=np.float64))
    ref = np.atleast_2d(np.asarray(ref, dtype=np.float64))
    if gen.shape[1] == 0 or ref.shape[1] == 0:
        raise ValueError("both sample sets must be nonempty")
    if gen.shape[0] != ref.shape[0]:
        raise ValueError("sample sets have mismatched dimensions")
    cost = np.ascontiguousarray(_pairwise_euclidean(gen, ref))
    cost_t = np.ascontiguousarray(cost.T)
    mg, mr = cost.shape
    a = 1.0 / mg
    b = 1.0 / mr
    log_a = np.log(a)
    log_b = np.log(b)
    reg = 1.0 / cfg.penalty

    f = np.zeros(mg)
    g = np.zeros(mr)
    iterations = 0

    # Anneal the sharpness upward: warm starts cut the iteration count at the
    # target regularization without changing the converged plan.
    level = max(reg, float(cost.max()) if cost.max() > 0 else reg)
    while level > reg * 1.0001:
        for _ in range(10):
            f = (log_a - _lse_rows(cost, g, level)) * level
            g = (log_b - _lse_rows(cost_t, f, level)) * level
            iterations += 1
        level = max(reg, 0.25 * level)

    residual = np.inf
    while iterations < cfg.max_iter:
        lse = _lse_rows(cost, g, reg)
        residual = float(np.abs(np.exp(f / reg + lse) - a).max())
        if residual <= cfg.tol:
            break
        f = (log_a - lse) * reg
        g = (log_b - _lse_rows(cost_t, f, reg)) * reg
        iterations += 1
    else:
        raise ConvergenceError(
            f"transport marginals did not reach {cfg.tol:g} within {cfg.max_iter} "
            f"iterations (residual {residual:g})",
            residual=residual,
        )

    plan = np.exp((f[:, None] + g[None, :] - cost) / reg)
    transport_cost = float((plan * cost).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(plan > 0, np.log(plan), 0.0)
    entropy = float(-(plan * logp).sum())
    plan_residual = max(
        float(np.abs(plan.sum(axis=1) - a).max()),
        float(np.abs(plan.sum(axis=0) - b).max()),
    )
    return OtResult(
        distance=transport_cost - reg * entropy,
        transport_cost=transport_cost,
        entropy=entropy,
        plan_residual=plan_residual,
        iterations=iterations,
    )


def marginal_ot_1d(gen_coord, ref_coord, cfg: OtConfig = OtConfig()) -> OtResult:
    """Transport diagnostic between two one-dimensional marginals."""
    gen = np.asarray(gen_coord, dtype=np.float64).reshape(1, -1)
    ref = np.asarray(ref_coord, dtype=np.float64).reshape(1, -1)
    return entropic_ot(gen, ref, cfg)


def histogram(samples, n_bins: int, range=None) -> tuple[np.ndarray, np.ndarray]:
    """Bin counts and edges; counts sum to the number of in-range samples."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size == 0:
        raise ValueError("cannot histogram an empty sample")
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    return np.histogram(samples, bins=n_bins, range=range)


def empirical_cdf(samples) -> tuple[np.ndarray, np.ndarray]:
    """Right-continuous empirical CDF as (sorted values, levels in (0, 1])."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size == 0:
        raise ValueError("cannot build a CDF from an empty sample")
    values = np.sort(samples)
    levels = np.arange(1, values.size + 1) / values.size
    return values, levels


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov sup-distance in [0, 1]."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    return float(ks_2samp(a, b).statistic)


def count_modes(
    samples,
    n_bins: int = 50,
    smooth_width: int = 3,
    range=None,
    rel_height: float = 0.1,
) -> np.ndarray:
    """Centers of histogram modes after moving-average smoothing.

    A mode is a local maximum of the smoothed counts that rises above
    ``rel_height`` times the smoothed peak, so sparse single-sample tail bins
    do not register.
    """
    counts, edges = histogram(samples, n_bins, range=range)
    kernel = np.ones(smooth_width) / smooth_width
    smoothed = np.convolve(counts.astype(np.float64), kernel, mode="same")
    floor = rel_height * smoothed.max()
    centers = 0.5 * (edges[:-1] + edges[1:])
    modes = []
    for i in range(smoothed.size):
        left = smoothed[i - 1] if i > 0 else -np.inf
        right = smoothed[i + 1] if i + 1 < smoothed.size else -np.inf
        if smoothed[i] > left and smoothed[i] > right and smoothed[i] >= floor:
            modes.append(centers[i])
    return np.asarray(modes)
