"""Discrete-time Langevin samplers driven by a fitted bridge model.

Four schemes are provided.  Direct schemes move by the drift
dt * (m(x) - x) / eps plus noise; with dt = eps they reduce exactly to
x' = m(x) + noise.  Split schemes add the noise first and then project
through the conditional mean, which keeps every iterate inside the convex
hull of the training samples for any eps.  "Unaware" noise is sqrt(2 K(x))
with the kernel bandwidth matrix; "aware" noise uses the local conditional
covariance C(x).

Noise conventions: direct schemes draw Xi ~ N(0, dt I); split schemes draw
Xi ~ N(0, eps I).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bridge import BridgeModel
from .rng import standard_normal, stream

__all__ = [
    "SamplerConfig",
    "ChainOutput",
    "psd_sqrt",
    "step_unaware_direct",
    "step_aware_direct",
    "step_unaware_split",
    "step_aware_split",
    "run_chain",
]

SCHEMES = ("unaware-direct", "aware-direct", "unaware-split", "aware-split")


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix, clamping negative eigenvalues."""
    mat = np.asarray(mat, dtype=np.float64)
    scale = max(1.0, np.abs(mat).max())
    if np.abs(mat - mat.T).max() > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    w, u = np.linalg.eigh(0.5 * (mat + mat.T))
    np.clip(w, 0.0, None, out=w)
    root = (u * np.sqrt(w)) @ u.T
    return 0.5 * (root + root.T)


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings: scheme, virtual step, length, burn-in, thinning, seed.

    ``delta_tau`` defaults to the model bandwidth eps; ``burn_in`` defaults
    to 60% of ``n_steps``; ``init`` is an explicit start point or None for a
    training point chosen at random from the chain's stream.
    """

    scheme: str
    n_steps: int
    delta_tau: float | None = None
    burn_in: int | None = None
    thin: int = 20
    seed: int = 0
    init: np.ndarray | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.delta_tau is not None and self.delta_tau <= 0:
            raise ValueError("delta_tau must be positive")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        burn = self.resolved_burn_in()
        if burn < 0 or self.n_kept() < 1:
            raise ValueError(
                f"burn_in {burn} leaves no kept samples out of {self.n_steps} steps"
            )
        if self.init is not None:
            object.__setattr__(
                self, "init", np.asarray(self.init, dtype=np.float64).reshape(-1)
            )

    def resolved_burn_in(self) -> int:
        if self.burn_in is not None:
            return self.burn_in
        return int(0.6 * self.n_steps)

    def n_kept(self) -> int:
        return (self.n_steps - self.resolved_burn_in()) // self.thin


@dataclass
class ChainOutput:
    """Kept samples plus per-step diagnostics.

    ``samples`` has one kept state per column.  ``max_weight`` and
    ``entropy`` describe the probability vector used at each step;
    ``in_hull`` flags whether the post-step state lies in the training
    bounding box.  ``pre_projection`` holds the kept noisy half-step states
    for split schemes when requested.
    """

    samples: np.ndarray
    max_weight: np.ndarray
    entropy: np.ndarray
    in_hull: np.ndarray
    rng_seed: int
    pre_projection: np.ndarray | None = None
    kept_steps: np.ndarray = field(default=None, repr=False)


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def _unaware_noise(model: BridgeModel, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    spec = model.spec
    if spec.k_matrix is not None:
        return psd_sqrt(2.0 * spec.k_matrix) @ xi
    if spec.mode == "variable":
        return np.sqrt(2.0 * spec.rho_at(x)) * xi
    return np.sqrt(2.0) * xi


def _drift(x: np.ndarray, mean: np.ndarray, delta_tau: float, eps: float) -> np.ndarray:
    if delta_tau == eps:
        return mean
    return x + (delta_tau / eps) * (mean - x)


def _step_unaware_direct(model, x, delta_tau, rng):
    p, mean = model.query_mean(x)
    xi = standard_normal(rng, x.shape[0]) * np.sqrt(delta_tau)
    nxt = _drift(x, mean, delta_tau, model.epsilon) + _unaware_noise(model, x, xi)
    return nxt, p, None


def _step_aware_direct(model, x, delta_tau, rng):
    p, mean, cov = model.query_mean_cov(x)
    xi = standard_normal(rng, x.shape[0]) * np.sqrt(delta_tau)
    nxt = _drift(x, mean, delta_tau, model.epsilon) + psd_sqrt(cov) @ xi
    return nxt, p, None


def _step_unaware_split(model, x, delta_tau, rng):
    xi = standard_normal(rng, x.shape[0]) * np.sqrt(model.epsilon)
    half = x + _unaware_noise(model, x, xi)
    p, mean = model.query_mean(half)
    return mean, p, half


def _step_aware_split(model, x, delta_tau, rng):
    _, _, cov = model.query_mean_cov(x)
    xi = standard_normal(rng, x.shape[0]) * np.sqrt(model.epsilon)
    half = x + psd_sqrt(cov) @ xi
    p, mean = model.query_mean(half)
    return mean, p, half


_STEPS = {
    "unaware-direct": _step_unaware_direct,
    "aware-direct": _step_aware_direct,
    "unaware-split": _step_unaware_split,
    "aware-split": _step_aware_split,
}


def step_unaware_direct(model, x_n, delta_tau, rng) -> np.ndarray:
    """x' = x + dt (m(x)-x)/eps + sqrt(2 K(x)) Xi with Xi ~ N(0, dt I)."""
    x_n = np.asarray(x_n, dtype=np.float64).reshape(-1)
    return _step_unaware_direct(model, x_n, float(delta_tau), rng)[0]


def step_aware_direct(model, x_n, delta_tau, rng) -> np.ndarray:
    """x' = x + dt (m(x)-x)/eps + sqrt(C(x)) Xi with Xi ~ N(0, dt I)."""
    x_n = np.asarray(x_n, dtype=np.float64).reshape(-1)
    return _step_aware_direct(model, x_n, float(delta_tau), rng)[0]


def step_unaware_split(model, x_n, rng) -> np.ndarray:
    """Noise first, then project: x' = m(x + sqrt(2 K(x)) Xi), Xi ~ N(0, eps I)."""
    x_n = np.asarray(x_n, dtype=np.float64).reshape(-1)
    return _step_unaware_split(model, x_n, model.epsilon, rng)[0]


def step_aware_split(model, x_n, rng) -> np.ndarray:
    """Noise first, then project: x' = m(x + sqrt(C(x)) Xi), Xi ~ N(0, eps I)."""
    x_n = np.asarray(x_n, dtype=np.float64).reshape(-1)
    return _step_aware_split(model, x_n, model.epsilon, rng)[0]


def run_chain(
    model: BridgeModel,
    cfg: SamplerConfig,
    record_pre_projection: bool = False,
) -> ChainOutput:
    """Run one chain; deterministic given (model, cfg).

    Burn-in and thinning follow the kept-index rule n = burn_in + thin,
    burn_in + 2 thin, ...; the number of kept samples is
    (n_steps - burn_in) // thin.
    """
    rng = stream(cfg.seed, "sample")
    if cfg.init is not None:
        x = cfg.init.copy()
        if x.shape[0] != model.dim:
            raise ValueError("explicit init has the wrong dimension")
    else:
        x = model.training.data[:, int(rng.integers(model.count))].copy()

    step = _STEPS[cfg.scheme]
    delta_tau = model.epsilon if cfg.delta_tau is None else cfg.delta_tau
    burn = cfg.resolved_burn_in()
    n_kept = cfg.n_kept()
    split = cfg.scheme.endswith("split")

    samples = np.empty((model.dim, n_kept))
    halves = np.empty((model.dim, n_kept)) if (record_pre_projection and split) else None
    max_weight = np.empty(cfg.n_steps)
    entropy = np.empty(cfg.n_steps)
    in_hull = np.empty(cfg.n_steps, dtype=bool)
    kept_steps = np.empty(n_kept, dtype=np.int64)
    lo, hi = model.bounding_box()
    tol = 1e-12 * max(1.0, float(np.abs(lo).max()), float(np.abs(hi).max()))

    kept = 0
    for n in range(1, cfg.n_steps + 1):
        x, p, half = step(model, x, delta_tau, rng)
        if not np.isfinite(x).all():
            raise RuntimeError(f"non-finite state produced at step {n}")
        idx = n - 1
        max_weight[idx] = p.max()
        entropy[idx] = _entropy(p)
        in_hull[idx] = bool(((x >= lo - tol) & (x <= hi + tol)).all())
        if n > burn and (n - burn) % cfg.thin == 0 and kept < n_kept:
            samples[:, kept] = x
            if halves is not None:
                halves[:, kept] = half
            kept_steps[kept] = n
            kept += 1

    return ChainOutput(
        samples=samples,
        max_weight=max_weight,
        entropy=entropy,
        in_hull=in_hull,
        rng_seed=cfg.seed,
        pre_projection=halves,
        kept_steps=kept_steps,
    )
