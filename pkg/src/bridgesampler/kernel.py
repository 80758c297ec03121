"""Gaussian reference kernels over training samples.

Conventions:
  - the data matrix has shape (d, M); columns are samples
  - kernel entries are exp(-delta' (K_i + K_j)^{-1} delta / (2 eps)) where
    delta is the pairwise difference and K is the local bandwidth matrix
  - with K = rho I the entry reduces to exp(-||delta||^2 / (2 eps (rho_i + rho_j)))

Entries are always computed as exponents first and exponentiated at the end;
sub-normal results are flushed to zero so that very small bandwidths cannot
stall downstream balancing iterations on denormal arithmetic.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.spatial.distance import cdist

__all__ = [
    "DegenerateDataError",
    "TrainingSet",
    "DensityEstimate",
    "KernelSpec",
    "fit_kde",
    "bandwidth_profile",
    "kernel_matrix",
    "kernel_vector",
    "kernel_log_vector",
    "variable_bandwidth_spec",
]

_SBTS_MAGIC = b"SBTS"
_SBTS_HEADER = struct.Struct("<4sHH")  # magic, d, reserved

_DENORMAL_FLOOR = 1e-300
_ROW_BLOCK = 4096


class DegenerateDataError(ValueError):
    """Raised when the training data has zero spread."""


@dataclass(frozen=True)
class TrainingSet:
    """Training samples stored column-wise in a (d, M) matrix."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if data.ndim != 2:
            raise ValueError(f"expected a (d, M) matrix, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"need d >= 1 and M >= 1, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("training data contains non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def count(self) -> int:
        return self.data.shape[1]

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Componentwise (min, max) over the samples."""
        return self.data.min(axis=1), self.data.max(axis=1)

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "TrainingSet":
        """Build from an (M, d) array with one sample per row."""
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        return cls(rows.T.copy())

    @classmethod
    def load_csv(cls, path, header: bool = False) -> "TrainingSet":
        """Load samples from CSV, one sample per row, d columns."""
        rows = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2)
        return cls.from_rows(rows)

    def save_csv(self, path) -> None:
        """Write one sample per row; floats use shortest round-trip decimals."""
        write_csv_rows(path, self.data.T)

    @classmethod
    def load_binary(cls, path) -> "TrainingSet":
        """Load the column-major float64 dump with an 8-byte SBTS header."""
        with open(path, "rb") as fh:
            raw = fh.read()
        magic, d, _reserved = _SBTS_HEADER.unpack_from(raw, 0)
        if magic != _SBTS_MAGIC:
            raise ValueError(f"bad magic {magic!r}; expected {_SBTS_MAGIC!r}")
        payload = np.frombuffer(raw, dtype="<f8", offset=_SBTS_HEADER.size)
        if d == 0 or payload.size % d != 0:
            raise ValueError("payload length is not a multiple of the sample dimension")
        data = payload.reshape((d, payload.size // d), order="F").copy()
        return cls(data)

    def save_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_SBTS_HEADER.pack(_SBTS_MAGIC, self.dim, 0))
            fh.write(np.asarray(self.data, dtype="<f8").ravel(order="F").tobytes())


def write_csv_rows(path, rows, header: list[str] | None = None) -> None:
    """RFC-4180 CSV writer with float64 round-trip via repr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in np.atleast_2d(rows):
            writer.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class DensityEstimate:
    """Isotropic Gaussian-product KDE used as a cheap density proxy.

    Evaluations are floored at the smallest normal double so the estimate is
    strictly positive for any finite query.
    """

    bandwidth: float
    reference_points: np.ndarray
    normalizer: float

    def __call__(self, x: np.ndarray) -> float:
        return float(self.evaluate(np.asarray(x, dtype=np.float64).reshape(-1, 1))[0])

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Density at each column of ``points`` (shape (d, N))."""
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        sq = cdist(points.T, self.reference_points.T, "sqeuclidean")
        vals = self.normalizer * np.exp(-sq / (2.0 * self.bandwidth**2)).sum(axis=1)
        return np.maximum(vals, np.finfo(np.float64).tiny)


def fit_kde(ts: TrainingSet) -> DensityEstimate:
    """Fit the density proxy with a Silverman rule-of-thumb bandwidth.

    The bandwidth is h = sigma * (4 / ((d + 2) M))^(1/(d+4)) with sigma the
    root-mean-square of the per-dimension sample standard deviations.
    """
    if ts.count < 2:
        raise ValueError("need at least two samples to fit a density estimate")
    d, m = ts.dim, ts.count
    sigma = float(np.sqrt(np.mean(np.var(ts.data, axis=1, ddof=1))))
    if sigma == 0.0:
        raise DegenerateDataError("all samples identical: zero spread")
    bandwidth = sigma * (4.0 / ((d + 2) * m)) ** (1.0 / (d + 4))
    normalizer = (2.0 * np.pi) ** (-d / 2.0) * bandwidth ** (-d) / m
    return DensityEstimate(bandwidth=bandwidth, reference_points=ts.data, normalizer=normalizer)


def bandwidth_profile(ts: TrainingSet, kde, beta: float) -> tuple[np.ndarray, float]:
    """Per-sample scaling rho_i = (pi_i / Z)^beta with Z the mean density.

    ``kde`` is any object with an ``evaluate`` method over (d, N) columns.
    The Z-normalization makes rho invariant under rescaling of the density
    and keeps rho = 1 for uniform densities regardless of beta.
    """
    if beta > 0:
        raise ValueError(f"beta must be <= 0, got {beta}")
    pi = np.asarray(kde.evaluate(ts.data), dtype=np.float64)
    z_norm = float(pi.mean())
    rho = (pi / z_norm) ** beta
    if not (np.isfinite(rho).all() and (rho > 0).all()):
        raise ValueError("bandwidth profile produced non-finite or non-positive scalings")
    return rho, z_norm


@dataclass(frozen=True)
class KernelSpec:
    """Bandwidth specification for the reference kernel.

    mode "fixed" uses K = I (optionally a constant SPD matrix ``k_matrix``,
    e.g. the empirical covariance); mode "variable" uses K(x) = rho(x) I with
    rho(x) = (pi(x)/Z)^beta evaluated through ``density_estimator``.
    """

    epsilon: float
    mode: str = "fixed"
    beta: float = 0.0
    rho: np.ndarray | None = None
    z_norm: float = 1.0
    density_estimator: DensityEstimate | None = None
    k_matrix: np.ndarray | None = None
    _chol: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.mode not in ("fixed", "variable"):
            raise ValueError(f"mode must be 'fixed' or 'variable', got {self.mode!r}")
        if self.beta > 0:
            raise ValueError(f"beta must be <= 0, got {self.beta}")
        if self.mode == "fixed":
            if self.rho is not None and not np.all(np.asarray(self.rho) == 1.0):
                raise ValueError("fixed mode requires rho = 1 everywhere")
            if self.z_norm != 1.0:
                raise ValueError("fixed mode requires z_norm = 1")
        else:
            if self.k_matrix is not None:
                raise ValueError("k_matrix is only supported in fixed mode")
            if self.rho is None or self.density_estimator is None:
                raise ValueError("variable mode requires rho and a density estimator")
            rho = np.asarray(self.rho, dtype=np.float64)
            if not (np.isfinite(rho).all() and (rho > 0).all()):
                raise ValueError("rho entries must be positive and finite")
            object.__setattr__(self, "rho", rho)
        if self.k_matrix is not None:
            k = np.asarray(self.k_matrix, dtype=np.float64)
            if k.ndim != 2 or k.shape[0] != k.shape[1]:
                raise ValueError("k_matrix must be a square matrix")
            if np.abs(k - k.T).max() > 1e-10 * max(1.0, np.abs(k).max()):
                raise ValueError("k_matrix must be symmetric")
            object.__setattr__(self, "k_matrix", k)
            # Lower Cholesky factor of (K + K); distances are taken in the
            # whitened coordinates L^{-1} x.
            object.__setattr__(self, "_chol", cholesky(2.0 * k, lower=True))

    def rho_for(self, ts: TrainingSet) -> np.ndarray:
        if self.rho is not None:
            return self.rho
        return np.ones(ts.count)

    def rho_at(self, x: np.ndarray) -> float:
        """Local scaling rho(x), re-evaluated through the KDE per query."""
        if self.mode == "fixed":
            return 1.0
        pi = self.density_estimator(x)
        return float((pi / self.z_norm) ** self.beta)

    def whiten(self, points: np.ndarray) -> np.ndarray:
        """Map points into the coordinates where the constant K is identity-like."""
        return solve_triangular(self._chol, points, lower=True)


def variable_bandwidth_spec(ts: TrainingSet, epsilon: float, beta: float) -> KernelSpec:
    """Convenience constructor: fit the KDE and bandwidth profile in one go."""
    kde = fit_kde(ts)
    rho, z_norm = bandwidth_profile(ts, kde, beta)
    return KernelSpec(
        epsilon=epsilon,
        mode="variable",
        beta=beta,
        rho=rho,
        z_norm=z_norm,
        density_estimator=kde,
    )


def _check_spec(ts: TrainingSet, spec: KernelSpec) -> None:
    if spec.rho is not None and len(spec.rho) != ts.count:
        raise ValueError(f"rho length {len(spec.rho)} does not match M = {ts.count}")
    if spec.k_matrix is not None and spec.k_matrix.shape[0] != ts.dim:
        raise ValueError("k_matrix dimension does not match the data")


def kernel_matrix(ts: TrainingSet, spec: KernelSpec) -> np.ndarray:
    """Symmetric (M, M) kernel matrix with unit diagonal.

    Rows are filled block by block so the peak memory overhead beyond the
    result stays bounded; entries below the denormal floor are flushed to 0.
    """
    _check_spec(ts, spec)
    m = ts.count
    pts = spec.whiten(ts.data).T if spec.k_matrix is not None else ts.data.T
    rho = spec.rho_for(ts)
    out = np.empty((m, m))
    for start in range(0, m, _ROW_BLOCK):
        stop = min(start + _ROW_BLOCK, m)
        block = _kernel_block(pts[start:stop], pts, rho[start:stop], rho, spec)
        out[start:stop] = block
    np.fill_diagonal(out, 1.0)
    return out


def _kernel_block(rows, pts, rho_rows, rho, spec) -> np.ndarray:
    sq = cdist(rows, pts, "sqeuclidean")
    if spec.k_matrix is not None:
        sq /= 2.0 * spec.epsilon
    else:
        sq /= 2.0 * spec.epsilon * (rho_rows[:, None] + rho[None, :])
    np.negative(sq, out=sq)
    np.exp(sq, out=sq)
    sq[sq < _DENORMAL_FLOOR] = 0.0
    return sq


def kernel_log_vector(ts: TrainingSet, spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    """Log kernel entries log t_i(x) for an out-of-sample point."""
    _check_spec(ts, spec)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != ts.dim:
        raise ValueError(f"query dimension {x.shape[0]} does not match data dimension {ts.dim}")
    if not np.isfinite(x).all():
        raise ValueError("query point contains non-finite entries")
    if spec.k_matrix is not None:
        u = spec.whiten(x.reshape(-1, 1))
        sq = cdist(u.T, spec.whiten(ts.data).T, "sqeuclidean")[0]
        return -sq / (2.0 * spec.epsilon)
    sq = cdist(x.reshape(1, -1), ts.data.T, "sqeuclidean")[0]
    rho = spec.rho_for(ts)
    return -sq / (2.0 * spec.epsilon * (spec.rho_at(x) + rho))


def kernel_vector(ts: TrainingSet, spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    """Kernel entries t_i(x) in (0, 1]; at x = x^(j) this is column j of T."""
    t = np.exp(kernel_log_vector(ts, spec, x))
    t[t < _DENORMAL_FLOOR] = 0.0
    return t
