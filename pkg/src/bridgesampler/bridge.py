"""Symmetric entropic coupling over training samples and its query functions.

Offline, ``sinkhorn_fit`` balances the kernel matrix T into a symmetric
Markov matrix P = D(v) T D(v) with unit row sums by solving v_i (Tv)_i = 1
for a positive scaling vector v (cost O(M^2) per iteration).  Online queries
cost O(dM): the probability vector p(x) = D(v) t(x) / (v' t(x)), the
conditional mean m(x) = X p(x), the scaled conditional covariance, the score
(m(x) - x)/eps, and the log-density proxy log (v' t(x))^2.

Above ``materialize_limit`` samples T is never stored; the balancing matvec
streams over row blocks recomputed from the data.  Row reductions always run
in the same blockwise order, so results are reproducible run to run.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .kernel import (
    DensityEstimate,
    KernelSpec,
    TrainingSet,
    _DENORMAL_FLOOR,
    _ROW_BLOCK,
    _kernel_block,
    kernel_matrix,
)

__all__ = [
    "ConvergenceError",
    "BridgeModel",
    "ProbabilityVector",
    "sinkhorn_scaling",
    "sinkhorn_fit",
    "save_model",
    "load_model",
]

_SBMD_MAGIC = b"SBMD"
_SBMD_VERSION = 1
# magic, version, d, mode, flags, M, epsilon, beta, z_norm, kde bandwidth,
# kde normalizer, residual, iterations, pad
_SBMD_HEADER = struct.Struct("<4sHHBBIddddddII")
_FLAG_K_MATRIX = 1


class ConvergenceError(RuntimeError):
    """Balancing or transport iteration failed to reach tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class ProbabilityVector:
    """Nonnegative weights over the training samples summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if (w < 0).any():
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)

    def entropy(self) -> float:
        w = self.weights[self.weights > 0]
        return float(-(w * np.log(w)).sum())


def sinkhorn_scaling(matvec, m: int, tol: float = 1e-10, max_iter: int = 10_000):
    """Solve v_i (Tv)_i = 1 by the damped fixed point v <- v / sqrt(v * (Tv)).

    ``matvec`` computes Tv for the symmetric positive matrix T.  Returns
    (v, residual, iterations).  The fixed point makes D(v) T D(v) row- and,
    by symmetry, column-stochastic.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.ones(m)
    tv = matvec(v)
    if tv.min() < _DENORMAL_FLOOR:
        raise ConvergenceError(
            "kernel matrix has a (numerically) zero row sum; the kernel graph is "
            "disconnected at this bandwidth - increase epsilon"
        )
    residual = np.inf
    for iteration in range(max_iter + 1):
        r = v * tv
        residual = float(np.abs(r - 1.0).max())
        if residual <= tol:
            return v, residual, iteration
        v = v / np.sqrt(r)
        tv = matvec(v)
    raise ConvergenceError(
        f"scaling did not reach tolerance {tol:g} within {max_iter} iterations "
        f"(last residual {residual:g})",
        residual=residual,
    )


def _streaming_matvec(ts: TrainingSet, spec: KernelSpec):
    """Row-blocked Tv product recomputing kernel entries from the data."""
    pts = spec.whiten(ts.data).T if spec.k_matrix is not None else ts.data.T
    rho = spec.rho_for(ts)
    m = ts.count

    def matvec(v: np.ndarray) -> np.ndarray:
        out = np.empty(m)
        for start in range(0, m, _ROW_BLOCK):
            stop = min(start + _ROW_BLOCK, m)
            block = _kernel_block(pts[start:stop], pts, rho[start:stop], rho, spec)
            np.fill_diagonal(block[:, start:stop], 1.0)
            out[start:stop] = block @ v
        return out

    return matvec


def sinkhorn_fit(
    ts: TrainingSet,
    spec: KernelSpec,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    materialize_limit: int = 20_000,
) -> "BridgeModel":
    """Fit the scaling weights for the kernel defined by ``spec``."""
    if ts.count <= materialize_limit:
        t_mat = kernel_matrix(ts, spec)
        matvec = lambda v: t_mat @ v  # noqa: E731
    else:
        matvec = _streaming_matvec(ts, spec)
    v, residual, iterations = sinkhorn_scaling(matvec, ts.count, tol=tol, max_iter=max_iter)
    return BridgeModel(
        training=ts,
        spec=spec,
        v=v,
        residual=residual,
        iterations_used=iterations,
        tol=tol,
        max_iter=max_iter,
    )


class BridgeModel:
    """Frozen fit artifact answering p(x), m(x), C(x), score and density queries.

    Instances are immutable after construction and safe to share across
    concurrent readers.
    """

    def __init__(self, training, spec, v, residual, iterations_used, tol=1e-10, max_iter=10_000):
        v = np.asarray(v, dtype=np.float64)
        if (v <= 0).any():
            raise ValueError("scaling weights must be positive")
        self.training = training
        self.spec = spec
        self.v = v
        self.residual = float(residual)
        self.iterations_used = int(iterations_used)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self._log_v = np.log(v)
        self._rho = spec.rho_for(training)
        if spec.k_matrix is not None:
            self._pts = spec.whiten(training.data)
        else:
            self._pts = training.data
        self._sq_norms = np.einsum("ij,ij->j", self._pts, self._pts)
        self._box = training.bounding_box()

    @property
    def dim(self) -> int:
        return self.training.dim

    @property
    def count(self) -> int:
        return self.training.count

    @property
    def epsilon(self) -> float:
        return self.spec.epsilon

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self._box

    # -- low level -----------------------------------------------------

    def _log_kernel(self, x: np.ndarray) -> np.ndarray:
        """Exponents log t_i(x) via the squared-distance expansion."""
        if self.spec.k_matrix is not None:
            x = self.spec.whiten(x.reshape(-1, 1)).ravel()
            sq = self._sq_norms - 2.0 * (x @ self._pts) + x @ x
            np.maximum(sq, 0.0, out=sq)
            return sq / (-2.0 * self.spec.epsilon)
        sq = self._sq_norms - 2.0 * (x @ self._pts) + x @ x
        np.maximum(sq, 0.0, out=sq)
        if self.spec.mode == "fixed":
            return sq / (-4.0 * self.spec.epsilon)
        denom = 2.0 * self.spec.epsilon * (self.spec.rho_at(x) + self._rho)
        return sq / (-denom)

    def _weights(self, x: np.ndarray) -> np.ndarray:
        w = self._log_v + self._log_kernel(x)
        peak = w.max()
        if not np.isfinite(peak):
            raise FloatingPointError(
                "v' t(x) underflowed to zero; the query point is too far from the "
                "data at this bandwidth - increase epsilon"
            )
        p = np.exp(w - peak)
        p /= p.sum()
        return p

    def query_mean(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (p(x), m(x)) sharing one kernel evaluation."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        p = self._weights(x)
        return p, self.training.data @ p

    def query_mean_cov(self, x: np.ndarray):
        """Return (p(x), m(x), C(x)) sharing one kernel evaluation."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        p = self._weights(x)
        mean = self.training.data @ p
        centered = self.training.data - mean[:, None]
        cov = (centered * p) @ centered.T / self.spec.epsilon
        cov = 0.5 * (cov + cov.T)
        return p, mean, cov

    # -- public queries --------------------------------------------------

    def probability_vector(self, x: np.ndarray) -> ProbabilityVector:
        """Transition probabilities from x to the training samples."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return ProbabilityVector(self._weights(x))

    def conditional_mean(self, x: np.ndarray) -> np.ndarray:
        """Barycentric projection X p(x); always inside the convex hull."""
        return self.query_mean(x)[1]

    def conditional_covariance(self, x: np.ndarray) -> np.ndarray:
        """Scaled covariance of p(x): (X - m 1') D(p) (X - m 1')' / eps."""
        return self.query_mean_cov(x)[2]

    def score(self, x: np.ndarray) -> np.ndarray:
        """Drift estimate (m(x) - x) / eps."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return (self.conditional_mean(x) - x) / self.spec.epsilon

    def log_density_proxy(self, x: np.ndarray) -> float:
        """log (v' t(x))^2, defined for the plain fixed bandwidth K = I only."""
        if self.spec.mode != "fixed" or self.spec.k_matrix is not None:
            raise ValueError("log-density proxy requires the fixed bandwidth K = I")
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        w = self._log_v + self._log_kernel(x)
        peak = w.max()
        if not np.isfinite(peak):
            raise FloatingPointError("v' t(x) underflowed to zero; increase epsilon")
        return 2.0 * float(peak + np.log(np.exp(w - peak).sum()))

    def transition_probabilities(self, j: int) -> ProbabilityVector:
        """Column j of P = D(v) T D(v); 0-based sample index."""
        j = int(j)
        if not 0 <= j < self.count:
            raise IndexError(f"sample index {j} out of range [0, {self.count})")
        diff = self._pts - self._pts[:, j : j + 1]
        sq = np.einsum("ij,ij->j", diff, diff)
        if self.spec.k_matrix is not None:
            exponents = sq / (-2.0 * self.spec.epsilon)
        else:
            exponents = sq / (-2.0 * self.spec.epsilon * (self._rho[j] + self._rho))
        t_col = np.exp(exponents)
        t_col[t_col < _DENORMAL_FLOOR] = 0.0
        t_col[j] = 1.0
        return ProbabilityVector(self.v * t_col * self.v[j])

    def diffusion_distance(self, i: int, j: int) -> float:
        """Squared distance between the transition laws of samples i and j."""
        if i == j:
            self.transition_probabilities(i)  # index validation
            return 0.0
        p_i = self.transition_probabilities(i).weights
        p_j = self.transition_probabilities(j).weights
        return float(((p_i - p_j) ** 2).sum())


# -- serialization -------------------------------------------------------


def save_model(model: BridgeModel, path) -> None:
    """Write the binary model file and a JSON sidecar with fit metadata."""
    spec = model.spec
    flags = _FLAG_K_MATRIX if spec.k_matrix is not None else 0
    kde = spec.density_estimator
    header = _SBMD_HEADER.pack(
        _SBMD_MAGIC,
        _SBMD_VERSION,
        model.dim,
        0 if spec.mode == "fixed" else 1,
        flags,
        model.count,
        spec.epsilon,
        spec.beta,
        spec.z_norm,
        kde.bandwidth if kde is not None else 0.0,
        kde.normalizer if kde is not None else 0.0,
        model.residual,
        model.iterations_used,
        0,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(model.v, dtype="<f8").tobytes())
        fh.write(np.asarray(model.training.data, dtype="<f8").ravel(order="F").tobytes())
        fh.write(np.asarray(spec.rho_for(model.training), dtype="<f8").tobytes())
        if spec.k_matrix is not None:
            fh.write(np.asarray(spec.k_matrix, dtype="<f8").ravel(order="F").tobytes())
    sidecar = {
        "d": model.dim,
        "m": model.count,
        "epsilon": spec.epsilon,
        "mode": spec.mode,
        "beta": spec.beta,
        "z_norm": spec.z_norm,
        "residual": model.residual,
        "iterations": model.iterations_used,
        "tol": model.tol,
        "max_iter": model.max_iter,
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> BridgeModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    (
        magic,
        version,
        d,
        mode_code,
        flags,
        m,
        epsilon,
        beta,
        z_norm,
        kde_bandwidth,
        kde_normalizer,
        residual,
        iterations,
        _pad,
    ) = _SBMD_HEADER.unpack_from(raw, 0)
    if magic != _SBMD_MAGIC:
        raise ValueError(f"bad magic {magic!r}; expected {_SBMD_MAGIC!r}")
    if version != _SBMD_VERSION:
        raise ValueError(f"unsupported model version {version}")
    offset = _SBMD_HEADER.size
    v = np.frombuffer(raw, dtype="<f8", count=m, offset=offset).copy()
    offset += 8 * m
    data = (
        np.frombuffer(raw, dtype="<f8", count=d * m, offset=offset)
        .reshape((d, m), order="F")
        .copy()
    )
    offset += 8 * d * m
    rho = np.frombuffer(raw, dtype="<f8", count=m, offset=offset).copy()
    offset += 8 * m
    k_matrix = None
    if flags & _FLAG_K_MATRIX:
        k_matrix = (
            np.frombuffer(raw, dtype="<f8", count=d * d, offset=offset)
            .reshape((d, d), order="F")
            .copy()
        )
    ts = TrainingSet(data)
    if mode_code == 0:
        spec = KernelSpec(epsilon=epsilon, mode="fixed", k_matrix=k_matrix)
    else:
        kde = DensityEstimate(
            bandwidth=kde_bandwidth, reference_points=ts.data, normalizer=kde_normalizer
        )
        spec = KernelSpec(
            epsilon=epsilon,
            mode="variable",
            beta=beta,
            rho=rho,
            z_norm=z_norm,
            density_estimator=kde,
        )
    meta = {}
    try:
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        pass
    return BridgeModel(
        training=ts,
        spec=spec,
        v=v,
        residual=residual,
        iterations_used=iterations,
        tol=meta.get("tol", 1e-10),
        max_iter=meta.get("max_iter", 10_000),
    )
