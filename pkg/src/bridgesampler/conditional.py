"""Potential-tilted, clamped and sequential sampling workflows.

Builds on the split-step sampler: a known potential V tilts the invariant
law toward exp(-V) times the data distribution; clamping a coordinate block
to an observed value turns the sampler into a conditional generator; and the
same clamped chain drives a stochastic closure term for slow-fast systems as
well as sequential trajectory generation from consecutive-state pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bridge import BridgeModel
from .kernel import TrainingSet
from .rng import standard_normal, stream
from .sampler import ChainOutput, SamplerConfig, _entropy, _unaware_noise, psd_sqrt

__all__ = [
    "PotentialSpec",
    "ConditionalSpec",
    "ClosureModel",
    "clamped_split_step",
    "bayesian_chain",
    "regularized_minimize",
    "conditional_chain",
    "extract_closure_samples",
    "surrogate_simulate",
    "trajectory_generate",
]


@dataclass(frozen=True)
class PotentialSpec:
    """A potential V and its gradient.

    ``validate_at`` cross-checks the gradient against central finite
    differences before a chain or minimization consumes it.
    """

    v_fn: callable
    grad_v_fn: callable

    def gradient(self, x: np.ndarray) -> np.ndarray:
        g = np.asarray(self.grad_v_fn(x), dtype=np.float64).reshape(-1)
        if not np.isfinite(g).all():
            raise FloatingPointError(f"potential gradient is non-finite at {x!r}")
        return g

    def validate_at(self, x: np.ndarray, rel_tol: float = 1e-5) -> None:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        g = self.gradient(x)
        fd = np.empty_like(x)
        for k in range(x.shape[0]):
            h = 1e-6 * (1.0 + abs(x[k]))
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            fd[k] = (self.v_fn(xp) - self.v_fn(xm)) / (2.0 * h)
        scale = max(np.abs(g).max(), np.abs(fd).max())
        slack = rel_tol * scale + 1e-8 * (1.0 + abs(float(self.v_fn(x))))
        if np.abs(fd - g).max() > slack:
            raise ValueError(
                "registered gradient disagrees with finite differences of the "
                f"potential (max deviation {np.abs(fd - g).max():g}, allowed {slack:g})"
            )


@dataclass(frozen=True)
class ConditionalSpec:
    """Index split for clamped sampling: y-block held at y_star, z-block free."""

    y_indices: np.ndarray
    y_star: np.ndarray
    n_inner: int = 100
    noise_mode: str = "unaware"
    z_indices: np.ndarray | None = None
    reset_inner: bool = False

    def __post_init__(self):
        y_idx = np.asarray(self.y_indices, dtype=np.intp).reshape(-1)
        y_star = np.asarray(self.y_star, dtype=np.float64).reshape(-1)
        if y_star.shape[0] != y_idx.shape[0]:
            raise ValueError(
                f"y_star has {y_star.shape[0]} entries for {y_idx.shape[0]} clamped indices"
            )
        if len(set(y_idx.tolist())) != y_idx.shape[0]:
            raise ValueError("clamped indices contain duplicates")
        if self.n_inner < 1:
            raise ValueError("n_inner must be at least 1")
        if self.noise_mode not in ("unaware", "aware"):
            raise ValueError(f"noise_mode must be 'unaware' or 'aware', got {self.noise_mode!r}")
        object.__setattr__(self, "y_indices", y_idx)
        object.__setattr__(self, "y_star", y_star)
        if self.z_indices is not None:
            object.__setattr__(
                self, "z_indices", np.asarray(self.z_indices, dtype=np.intp).reshape(-1)
            )

    def resolved_z_indices(self, dim: int) -> np.ndarray:
        y_set = set(self.y_indices.tolist())
        if any(i < 0 or i >= dim for i in y_set):
            raise ValueError(f"clamped indices out of range for dimension {dim}")
        complement = np.array([i for i in range(dim) if i not in y_set], dtype=np.intp)
        if self.z_indices is None:
            return complement
        z_set = set(self.z_indices.tolist())
        if z_set & y_set:
            raise ValueError("y and z index blocks overlap")
        if z_set | y_set != set(range(dim)):
            raise ValueError("y and z index blocks must cover all coordinates")
        return self.z_indices


@dataclass(frozen=True)
class ClosureModel:
    """Bridge over (state, closure) pairs plus the known slow drift and step."""

    bridge: BridgeModel
    drift_fn: callable
    dt: float

    def __post_init__(self):
        if self.bridge.dim % 2 != 0:
            raise ValueError("closure bridge dimension must be even (state/closure pairs)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def slow_dim(self) -> int:
        return self.bridge.dim // 2


def clamped_split_step(model, x, y_indices, y_star, rng, noise_mode="unaware", eps=None):
    """One inner step: clamp the y-block, add noise to all components, project.

    Returns (next state, probability vector, noisy half state).  Noise is
    drawn as Xi ~ N(0, eps I) with eps the model bandwidth unless overridden.
    """
    x = np.array(x, dtype=np.float64)
    x[y_indices] = y_star
    eps_noise = model.epsilon if eps is None else float(eps)
    xi = standard_normal(rng, x.shape[0]) * np.sqrt(eps_noise)
    if noise_mode == "aware":
        half = x + psd_sqrt(model.conditional_covariance(x)) @ xi
    else:
        half = x + _unaware_noise(model, x, xi)
    p, mean = model.query_mean(half)
    return mean, p, half


def _initial_state(model: BridgeModel, cfg: SamplerConfig, rng) -> np.ndarray:
    if cfg.init is not None:
        x = cfg.init.copy()
        if x.shape[0] != model.dim:
            raise ValueError("explicit init has the wrong dimension")
        return x
    return model.training.data[:, int(rng.integers(model.count))].copy()


def bayesian_chain(model: BridgeModel, pot: PotentialSpec, cfg: SamplerConfig) -> ChainOutput:
    """Split-step chain targeting exp(-V(x)) times the data distribution.

    Half step x - eps grad V(x) + sqrt(2) Xi with Xi ~ N(0, eps I), then the
    conditional-mean projection; requires the fixed bandwidth K = I.
    """
    if model.spec.mode != "fixed" or model.spec.k_matrix is not None:
        raise ValueError("the potential-tilted chain requires the fixed bandwidth K = I")
    rng = stream(cfg.seed, "sample")
    x = _initial_state(model, cfg, rng)
    pot.validate_at(x)
    eps = model.epsilon
    burn, n_kept = cfg.resolved_burn_in(), cfg.n_kept()

    samples = np.empty((model.dim, n_kept))
    max_weight = np.empty(cfg.n_steps)
    entropy = np.empty(cfg.n_steps)
    in_hull = np.empty(cfg.n_steps, dtype=bool)
    lo, hi = model.bounding_box()
    tol = 1e-12 * max(1.0, float(np.abs(lo).max()), float(np.abs(hi).max()))

    kept = 0
    for n in range(1, cfg.n_steps + 1):
        xi = standard_normal(rng, model.dim) * np.sqrt(eps)
        half = (x - eps * pot.gradient(x)) + np.sqrt(2.0) * xi
        p, x = model.query_mean(half)
        idx = n - 1
        max_weight[idx] = p.max()
        entropy[idx] = _entropy(p)
        in_hull[idx] = bool(((x >= lo - tol) & (x <= hi + tol)).all())
        if n > burn and (n - burn) % cfg.thin == 0 and kept < n_kept:
            samples[:, kept] = x
            kept += 1

    return ChainOutput(
        samples=samples,
        max_weight=max_weight,
        entropy=entropy,
        in_hull=in_hull,
        rng_seed=cfg.seed,
    )


def regularized_minimize(model: BridgeModel, pot: PotentialSpec, x0, n_iter: int) -> np.ndarray:
    """Noise-free iteration x <- m(x - eps grad V(x)).

    Approximates the minimizer of V(x) - log pi(x); every iterate after the
    first lies in the convex hull of the training samples.
    """
    x = np.asarray(x0, dtype=np.float64).reshape(-1).copy()
    pot.validate_at(x)
    eps = model.epsilon
    for _ in range(n_iter):
        x = model.conditional_mean(x - eps * pot.gradient(x))
    return x


def conditional_chain(model: BridgeModel, spec: ConditionalSpec, cfg: SamplerConfig) -> ChainOutput:
    """Sample the free block given the clamped block held at y_star.

    Each outer step runs ``spec.n_inner`` clamped split-steps (clamping is
    re-applied before every inner step); the kept output is the free block of
    the final inner state, thinned by the outer chain settings.
    """
    z_idx = spec.resolved_z_indices(model.dim)
    rng = stream(cfg.seed, "sample")
    x = _initial_state(model, cfg, rng)
    burn, n_kept = cfg.resolved_burn_in(), cfg.n_kept()

    samples = np.empty((z_idx.shape[0], n_kept))
    max_weight = np.empty(cfg.n_steps)
    entropy = np.empty(cfg.n_steps)
    in_hull = np.empty(cfg.n_steps, dtype=bool)
    z_data = model.training.data[z_idx]
    lo = z_data.min(axis=1) if z_idx.size else np.empty(0)
    hi = z_data.max(axis=1) if z_idx.size else np.empty(0)
    tol = 1e-12 * max(1.0, float(np.abs(lo).max(initial=0.0)), float(np.abs(hi).max(initial=0.0)))

    kept = 0
    for n in range(1, cfg.n_steps + 1):
        if spec.reset_inner:
            x = model.training.data[:, int(rng.integers(model.count))].copy()
        p = None
        for _ in range(spec.n_inner):
            x, p, _half = clamped_split_step(
                model, x, spec.y_indices, spec.y_star, rng, noise_mode=spec.noise_mode
            )
        z = x[z_idx]
        idx = n - 1
        max_weight[idx] = p.max()
        entropy[idx] = _entropy(p)
        in_hull[idx] = bool(((z >= lo - tol) & (z <= hi + tol)).all())
        if n > burn and (n - burn) % cfg.thin == 0 and kept < n_kept:
            samples[:, kept] = z
            kept += 1

    return ChainOutput(
        samples=samples,
        max_weight=max_weight,
        entropy=entropy,
        in_hull=in_hull,
        rng_seed=cfg.seed,
    )


def extract_closure_samples(z_series: np.ndarray, drift_fn, dt: float) -> TrainingSet:
    """Closure residuals psi_i = z_i - z_{i-1} - F(z_{i-1}) dt paired with z_{i-1}.

    ``z_series`` has shape (d_s, M+1) with columns at equidistant times dt;
    the returned set stacks (z_{i-1}, psi_i) into 2 d_s rows and M columns so
    that z_i = z_{i-1} + F(z_{i-1}) dt + psi_i reconstructs the series.
    """
    z = np.asarray(z_series, dtype=np.float64)
    if z.ndim == 1:
        z = z.reshape(1, -1)
    if z.shape[1] < 2:
        raise ValueError("need at least two columns to form closure pairs")
    prev = z[:, :-1]
    drift = np.stack([np.asarray(drift_fn(prev[:, i]), dtype=np.float64).reshape(-1)
                      for i in range(prev.shape[1])], axis=1)
    psi = z[:, 1:] - prev - drift * dt
    return TrainingSet(np.vstack([prev, psi]))


def surrogate_simulate(
    cm: ClosureModel,
    z0: np.ndarray,
    n_outer: int,
    n_inner: int = 100,
    eps: float | None = None,
    rng=None,
    reset_inner: bool = False,
) -> np.ndarray:
    """Simulate z_k = z_{k-1} + F(z_{k-1}) dt + psi_k with sampled closures.

    Each psi_k comes from ``n_inner`` clamped split-steps with the first
    block held at z_{k-1}; the inner state carries over between outer steps
    unless ``reset_inner`` is set.
    """
    if rng is None:
        raise ValueError("an explicitly seeded generator is required")
    model = cm.bridge
    ds = cm.slow_dim
    z = np.asarray(z0, dtype=np.float64).reshape(-1).copy()
    if z.shape[0] != ds:
        raise ValueError(f"z0 has dimension {z.shape[0]}, expected {ds}")
    y_idx = np.arange(ds)
    x = model.training.data[:, int(rng.integers(model.count))].copy()
    out = np.empty((ds, n_outer))
    for k in range(n_outer):
        if reset_inner:
            x = model.training.data[:, int(rng.integers(model.count))].copy()
        for _ in range(n_inner):
            x, _p, _half = clamped_split_step(model, x, y_idx, z, rng, eps=eps)
        psi = x[ds:]
        drift = np.asarray(cm.drift_fn(z), dtype=np.float64).reshape(-1)
        if not np.isfinite(drift).all():
            raise FloatingPointError(f"non-finite drift at outer step {k} (z = {z!r})")
        z = z + drift * cm.dt + psi
        out[:, k] = z
    return out


def trajectory_generate(
    model: BridgeModel,
    y0: np.ndarray,
    y1: np.ndarray,
    n_steps: int,
    n_inner: int = 20,
    eps: float | None = None,
    rng=None,
    reset_inner: bool = False,
) -> np.ndarray:
    """Generate a trajectory from a bridge fitted on consecutive-state pairs.

    The model couples pairs (y_{k-1}, y_k); each new state is the second
    block of the inner chain after ``n_inner`` clamped steps with the first
    block held at the current state.  Returns the generated states (one per
    column), starting with the successor of ``y1``.
    """
    if rng is None:
        raise ValueError("an explicitly seeded generator is required")
    if model.dim % 2 != 0:
        raise ValueError("trajectory model dimension must be even (state pairs)")
    ds = model.dim // 2
    y0 = np.asarray(y0, dtype=np.float64).reshape(-1)
    y1 = np.asarray(y1, dtype=np.float64).reshape(-1)
    if y0.shape[0] != ds or y1.shape[0] != ds:
        raise ValueError(f"seed states must have dimension {ds}")
    y_idx = np.arange(ds)
    x = np.concatenate([y0, y1])
    y_curr = y1.copy()
    out = np.empty((ds, n_steps))
    for k in range(n_steps):
        if reset_inner:
            x = model.training.data[:, int(rng.integers(model.count))].copy()
        for _ in range(n_inner):
            x, _p, _half = clamped_split_step(model, x, y_idx, y_curr, rng, eps=eps)
        y_curr = x[ds:].copy()
        out[:, k] = y_curr
    return out
