"""Seeded generators for the synthetic datasets and dynamical systems.

The slow-fast generator integrates a double-well slow variable coupled to a
fast Lorenz-63 subsystem; at strong time-scale separation the stiff system is
advanced with a fixed-step RK4 whose internal step tracks the fast time scale
(compiled with numba when available).  General systems go through an adaptive
RK45 with configurable tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .kernel import TrainingSet
from .rng import standard_normal, stream

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn


__all__ = [
    "IntegrationError",
    "OdeSystem",
    "lorenz63",
    "singular_gaussian_2d",
    "gaussian_ring",
    "hyper_semisphere",
    "integrate_ode",
    "multiscale_l63",
    "double_well_drift",
]


class IntegrationError(RuntimeError):
    """Raised when the ODE integrator cannot reach the requested time."""


@dataclass(frozen=True)
class OdeSystem:
    """Right-hand side with its dimension and time-scale parameter."""

    dim: int
    rhs: callable
    stiffness_scale: float = 1.0


def lorenz63(eps_sep: float = 1.0) -> OdeSystem:
    """Lorenz-63 with rates scaled by 1/eps_sep^2 (plain system at 1)."""
    inv = 1.0 / eps_sep**2

    def rhs(t, y):
        return (
            inv * 10.0 * (y[1] - y[0]),
            inv * (28.0 * y[0] - y[1] - y[0] * y[2]),
            inv * (-(8.0 / 3.0) * y[2] + y[0] * y[1]),
        )

    return OdeSystem(dim=3, rhs=rhs, stiffness_scale=eps_sep)


def singular_gaussian_2d(m: int, nu: float, seed: int = 0) -> TrainingSet:
    """Near-singular 2D Gaussian: x1 ~ N(0, 1+nu), x2 ~ N(0, nu), independent."""
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    rng = stream(seed, "dataset")
    x1 = np.sqrt(1.0 + nu) * standard_normal(rng, m)
    x2 = np.sqrt(nu) * standard_normal(rng, m)
    return TrainingSet(np.vstack([x1, x2]))


def gaussian_ring(
    m: int, sigma_r: float = 0.06, sigma_theta: float = 0.6, seed: int = 0
) -> TrainingSet:
    """Arc samples with radius 1 + sigma_r xi and angle pi/4 + sigma_theta xi."""
    if sigma_r < 0 or sigma_theta < 0:
        raise ValueError("sigmas must be nonnegative")
    rng = stream(seed, "dataset")
    r = 1.0 + sigma_r * standard_normal(rng, m)
    theta = np.pi / 4.0 + sigma_theta * standard_normal(rng, m)
    return TrainingSet(np.vstack([r * np.cos(theta), r * np.sin(theta)]))


def hyper_semisphere(
    m: int,
    d: int,
    alpha: float = 5.0,
    radial_noise: float = 0.01,
    seed: int = 0,
    full_sphere: bool = False,
) -> TrainingSet:
    """Non-uniform samples near the unit sphere, concentrated along the last axis.

    Gaussian directions with the last coordinate stretched by ``alpha`` are
    normalized, the last coordinate is reflected to be nonnegative unless
    ``full_sphere``, and radii are perturbed multiplicatively by
    1 + U(0, radial_noise).
    """
    if d < 2:
        raise ValueError("need d >= 2")
    if radial_noise < 0:
        raise ValueError("radial_noise must be nonnegative")
    rng = stream(seed, "dataset")
    y = standard_normal(rng, (d, m))
    y[d - 1] *= alpha
    u = y / np.linalg.norm(y, axis=0)
    if not full_sphere:
        u[d - 1] = np.abs(u[d - 1])
    r = 1.0 + radial_noise * rng.random(m)
    return TrainingSet(u * r)


def integrate_ode(
    sys: OdeSystem,
    state0,
    t_end: float,
    dt_out: float,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> np.ndarray:
    """Adaptive RK45 integration sampled at multiples of ``dt_out``.

    Returns a (dim, N) matrix covering t = 0, dt_out, ..., up to t_end.
    """
    if dt_out <= 0:
        raise ValueError("dt_out must be positive")
    state0 = np.asarray(state0, dtype=np.float64).reshape(-1)
    n_out = int(math.floor(t_end / dt_out + 1e-9)) + 1
    t_eval = np.arange(n_out) * dt_out
    sol = solve_ivp(
        sys.rhs,
        (0.0, t_end),
        state0,
        method="RK45",
        t_eval=t_eval,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        reached = sol.t[-1] if sol.t.size else 0.0
        raise IntegrationError(f"integration failed at t = {reached:g}: {sol.message}")
    return sol.y


def double_well_drift(z: np.ndarray) -> np.ndarray:
    """Slow drift z (1 - z^2) of the coupled system."""
    z = np.asarray(z, dtype=np.float64)
    return z * (1.0 - z * z)


@njit(inline="always", cache=True)
def _ms_rhs(z, y1, y2, y3, inv_eps2, ccoef, multiplicative, freeze_slow):
    h = z if multiplicative else 1.0
    dz = 0.0 if freeze_slow else z * (1.0 - z * z) + ccoef * h * y2
    d1 = inv_eps2 * 10.0 * (y2 - y1)
    d2 = inv_eps2 * (28.0 * y1 - y2 - y1 * y3)
    d3 = inv_eps2 * (-(8.0 / 3.0) * y3 + y1 * y2)
    return dz, d1, d2, d3


@njit(cache=True)
def _ms_run(z, y1, y2, y3, dt, n_total, stride, inv_eps2, ccoef, multiplicative, freeze_slow, out):
    idx = 0
    half = 0.5 * dt
    sixth = dt / 6.0
    for k in range(n_total):
        az, a1, a2, a3 = _ms_rhs(z, y1, y2, y3, inv_eps2, ccoef, multiplicative, freeze_slow)
        bz, b1, b2, b3 = _ms_rhs(
            z + half * az, y1 + half * a1, y2 + half * a2, y3 + half * a3,
            inv_eps2, ccoef, multiplicative, freeze_slow,
        )
        cz, c1, c2, c3 = _ms_rhs(
            z + half * bz, y1 + half * b1, y2 + half * b2, y3 + half * b3,
            inv_eps2, ccoef, multiplicative, freeze_slow,
        )
        dz, d1, d2, d3 = _ms_rhs(
            z + dt * cz, y1 + dt * c1, y2 + dt * c2, y3 + dt * c3,
            inv_eps2, ccoef, multiplicative, freeze_slow,
        )
        z = z + sixth * (az + 2.0 * bz + 2.0 * cz + dz)
        y1 = y1 + sixth * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
        y2 = y2 + sixth * (a2 + 2.0 * b2 + 2.0 * c2 + d2)
        y3 = y3 + sixth * (a3 + 2.0 * b3 + 2.0 * c3 + d3)
        if stride > 0 and (k + 1) % stride == 0:
            out[idx] = z
            idx += 1
    return z, y1, y2, y3


def multiscale_l63(
    h_mode: str = "additive",
    eps_sep: float = 0.01,
    t_end: float = 200.0,
    dt_out: float = 0.1,
    seed_state: int = 0,
    transient: float = 100.0,
    fast_prerun: float = 10.0,
    coupling_scale: float = 1.0,
    dt_factor: float = 0.01,
) -> np.ndarray:
    """Slow series of the double-well variable driven by a fast Lorenz-63.

    Integrates dz/dt = z(1-z^2) + coupling_scale * (4/(90 eps_sep)) h(z) y2
    with the fast subsystem running at rate 1/eps_sep^2; h(z) is 1 in
    "additive" mode and z in "multiplicative" mode.  The fast state is
    pre-run with z frozen, the joint transient is discarded, and the slow
    variable is returned sampled at dt_out over [transient, t_end] as a
    (1, N) matrix.
    """
    if h_mode not in ("additive", "multiplicative"):
        raise ValueError(f"h_mode must be 'additive' or 'multiplicative', got {h_mode!r}")
    if eps_sep <= 0:
        raise ValueError("eps_sep must be positive")
    if t_end <= transient:
        raise ValueError("t_end must exceed the transient")
    rng = stream(seed_state, "dataset")
    xi = standard_normal(rng, 4)
    z = 0.5 * xi[0]
    y1 = 1.0 + 2.0 * xi[1]
    y2 = 1.0 + 2.0 * xi[2]
    y3 = 24.0 + 2.0 * xi[3]

    inv_eps2 = 1.0 / eps_sep**2
    ccoef = coupling_scale * 4.0 / (90.0 * eps_sep)
    multiplicative = h_mode == "multiplicative"
    dt = dt_out / math.ceil(dt_out / (dt_factor * eps_sep**2))
    stride = round(dt_out / dt)
    empty = np.empty(0)

    n_pre = round(fast_prerun / dt)
    z, y1, y2, y3 = _ms_run(
        z, y1, y2, y3, dt, n_pre, 0, inv_eps2, ccoef, multiplicative, True, empty
    )
    n_trans = round(transient / dt)
    z, y1, y2, y3 = _ms_run(
        z, y1, y2, y3, dt, n_trans, 0, inv_eps2, ccoef, multiplicative, False, empty
    )
    n_keep = int(math.floor((t_end - transient) / dt_out + 1e-9))
    out = np.empty(n_keep + 1)
    out[0] = z
    z, y1, y2, y3 = _ms_run(
        z, y1, y2, y3, dt, n_keep * stride, stride, inv_eps2, ccoef, multiplicative, False, out[1:]
    )
    if not np.isfinite(out).all():
        raise IntegrationError("slow-fast integration produced non-finite values")
    return out.reshape(1, -1)
