"""Discrete-time state-space models with additive Gaussian noise.

Models have the form

    x_k = transition(k, x_{k-1}) + w_k,   w_k ~ N(0, Q_k),   k = 1..T
    z_k = measure(k, x_k) + v_k,          v_k ~ N(0, R_k)

with a Gaussian prior on x_0.  Time indices are explicit: the ``k`` passed to
``transition`` is the index of the state being produced, and the ``k`` passed
to ``measure`` is the index of the state being observed.  Noise covariances
are time-constant matrices by default, with callable hooks for time
dependence.

First and second derivatives of both maps belong to the model interface.
Factories for the built-in models attach analytic derivatives; models built
without them fall back to central finite differences of the maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linalg import symmetrize

__all__ = [
    "GaussianPrior",
    "SystemModel",
    "Trajectory",
    "fd_jacobian",
    "fd_hessians",
    "sample_trajectory",
    "ungm_model",
    "linear_gaussian_model",
]

_EPS = np.finfo(float).eps
_JAC_STEP = _EPS ** (1.0 / 3.0)
_HESS_STEP = _EPS ** 0.25


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                step: Optional[float] = None) -> np.ndarray:
    """Central-difference Jacobian of a vector map.

    Per-coordinate steps are ``step`` if given, else cbrt(eps) * max(1, |x_i|),
    the usual balance between truncation and rounding error for first
    derivatives.

    Args:
        fn: map from shape (n,) to shape (m,).
        x: evaluation point, shape (n,).
        step: optional fixed step overriding the relative policy.

    Returns:
        Jacobian matrix, shape (m, n).
    """
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fn(x), dtype=float)
    jac = np.empty((f0.shape[0], x.shape[0]))
    for i in range(x.shape[0]):
        h = step if step is not None else _JAC_STEP * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (np.asarray(fn(xp), dtype=float) - np.asarray(fn(xm), dtype=float)) / (2.0 * h)
    return jac


def fd_hessians(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                step: Optional[float] = None) -> np.ndarray:
    """Central-difference Hessians of each output component of a vector map.

    Steps scale with the fourth root of machine epsilon, appropriate for
    second derivatives.

    Args:
        fn: map from shape (n,) to shape (m,).
        x: evaluation point, shape (n,).
        step: optional fixed step overriding the relative policy.

    Returns:
        Stacked Hessians, shape (m, n, n); entry [c, i, j] is the (i, j)
        second derivative of output component c.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    f0 = np.asarray(fn(x), dtype=float)
    m = f0.shape[0]
    h = np.array([step if step is not None else _HESS_STEP * max(1.0, abs(x[i]))
                  for i in range(n)])
    hess = np.empty((m, n, n))

    def _at(*bumps: tuple[int, float]) -> np.ndarray:
        xv = x.copy()
        for idx, delta in bumps:
            xv[idx] += delta
        return np.asarray(fn(xv), dtype=float)

    for i in range(n):
        hess[:, i, i] = (_at((i, h[i])) - 2.0 * f0 + _at((i, -h[i]))) / (h[i] * h[i])
        for j in range(i + 1, n):
            mixed = (_at((i, h[i]), (j, h[j])) - _at((i, h[i]), (j, -h[j]))
                     - _at((i, -h[i]), (j, h[j])) + _at((i, -h[i]), (j, -h[j])))
            val = mixed / (4.0 * h[i] * h[j])
            hess[:, i, j] = val
            hess[:, j, i] = val
    return hess


@dataclass(frozen=True)
class GaussianPrior:
    """Gaussian prior on the initial state x_0."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValueError(f"prior cov shape {cov.shape} does not match mean {mean.shape}")
        if not np.allclose(cov, cov.T):
            raise ValueError("prior covariance must be symmetric")
        if np.any(np.linalg.eigvalsh(cov) <= 0.0):
            raise ValueError("prior covariance must be positive definite")


@dataclass
class SystemModel:
    """A state-space model plus derivative information.

    ``transition_fn(k, x)`` and ``measurement_fn(k, x)`` accept a single state
    of shape (n,).  When ``vectorized`` is true they also accept a batch of
    shape (N, n) and return the mapped batch, which the particle filter
    exploits.  Derivative callables are always pointwise.
    """

    state_dim: int
    meas_dim: int
    transition_fn: Callable[[int, np.ndarray], np.ndarray]
    measurement_fn: Callable[[int, np.ndarray], np.ndarray]
    process_cov: np.ndarray
    meas_cov: np.ndarray
    prior: GaussianPrior
    transition_jacobian_fn: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    transition_hessian_fn: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    measurement_jacobian_fn: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    measurement_hessian_fn: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    process_cov_fn: Optional[Callable[[int], np.ndarray]] = None
    meas_cov_fn: Optional[Callable[[int], np.ndarray]] = None
    vectorized: bool = False
    name: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.process_cov = np.atleast_2d(np.asarray(self.process_cov, dtype=float))
        self.meas_cov = np.atleast_2d(np.asarray(self.meas_cov, dtype=float))
        for label, cov, dim in (("process_cov", self.process_cov, self.state_dim),
                                ("meas_cov", self.meas_cov, self.meas_dim)):
            if cov.shape != (dim, dim):
                raise ValueError(f"{label} shape {cov.shape}, expected ({dim}, {dim})")
            if not np.allclose(cov, cov.T):
                raise ValueError(f"{label} must be symmetric")
            if np.any(np.linalg.eigvalsh(cov) <= 0.0):
                raise ValueError(f"{label} must be positive definite")
        if self.prior.mean.shape[0] != self.state_dim:
            raise ValueError("prior dimension does not match state_dim")

    # -- maps ------------------------------------------------------------

    def _checked_state(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and x.shape[0] == self.state_dim:
            return x
        # vectorized models also take (N, n) batches, see class docstring
        if self.vectorized and x.ndim == 2 and x.shape[1] == self.state_dim:
            return x
        raise ValueError(
            f"state shape {x.shape} incompatible with state_dim {self.state_dim}")

    def transition(self, k: int, x: np.ndarray) -> np.ndarray:
        """Noise-free state at time k from the state at time k-1."""
        return np.asarray(self.transition_fn(k, self._checked_state(x)), dtype=float)

    def measure(self, k: int, x: np.ndarray) -> np.ndarray:
        """Noise-free measurement of the state at time k."""
        return np.asarray(self.measurement_fn(k, self._checked_state(x)), dtype=float)

    # -- derivatives -----------------------------------------------------

    def transition_jacobian(self, k: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.transition_jacobian_fn is not None:
            return np.asarray(self.transition_jacobian_fn(k, x), dtype=float)
        return fd_jacobian(lambda v: self.transition(k, v), x)

    def transition_hessians(self, k: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.transition_hessian_fn is not None:
            hess = np.asarray(self.transition_hessian_fn(k, x), dtype=float)
        else:
            hess = fd_hessians(lambda v: self.transition(k, v), x)
        return np.stack([symmetrize(h) for h in hess])

    def measurement_jacobian(self, k: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.measurement_jacobian_fn is not None:
            return np.asarray(self.measurement_jacobian_fn(k, x), dtype=float)
        return fd_jacobian(lambda v: self.measure(k, v), x)

    def measurement_hessians(self, k: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.measurement_hessian_fn is not None:
            hess = np.asarray(self.measurement_hessian_fn(k, x), dtype=float)
        else:
            hess = fd_hessians(lambda v: self.measure(k, v), x)
        return np.stack([symmetrize(h) for h in hess])

    # -- noise covariances -----------------------------------------------

    def process_cov_at(self, k: int) -> np.ndarray:
        if self.process_cov_fn is not None:
            return np.atleast_2d(np.asarray(self.process_cov_fn(k), dtype=float))
        return self.process_cov

    def meas_cov_at(self, k: int) -> np.ndarray:
        if self.meas_cov_fn is not None:
            return np.atleast_2d(np.asarray(self.meas_cov_fn(k), dtype=float))
        return self.meas_cov


@dataclass(frozen=True)
class Trajectory:
    """One sampled state/measurement history.

    states has shape (T+1, n) with row 0 the initial state; measurements has
    shape (T, m) with row k-1 the measurement of state k.
    """

    states: np.ndarray
    measurements: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.states.shape[0] != self.measurements.shape[0] + 1:
            raise ValueError("states must have exactly one more row than measurements")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.measurements))):
            raise ValueError("trajectory contains non-finite values")


def sample_trajectory(model: SystemModel, horizon: int, seed) -> Trajectory:
    """Draw one trajectory of the model over ``horizon`` steps.

    Args:
        model: the system to simulate.
        horizon: number of transitions T; the trajectory holds T+1 states.
        seed: integer seed or numpy Generator.

    Returns:
        Trajectory with states (T+1, n) and measurements (T, m).
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    rng = np.random.default_rng(seed)
    n, m = model.state_dim, model.meas_dim
    states = np.empty((horizon + 1, n))
    measurements = np.empty((horizon, m))
    chol_prior = np.linalg.cholesky(model.prior.cov)
    states[0] = model.prior.mean + chol_prior @ rng.standard_normal(n)
    for k in range(1, horizon + 1):
        chol_q = np.linalg.cholesky(model.process_cov_at(k))
        chol_r = np.linalg.cholesky(model.meas_cov_at(k))
        states[k] = model.transition(k, states[k - 1]) + chol_q @ rng.standard_normal(n)
        measurements[k - 1] = model.measure(k, states[k]) + chol_r @ rng.standard_normal(m)
    return Trajectory(states=states, measurements=measurements,
                      seed=seed if isinstance(seed, (int, np.integer)) else None)


def ungm_model(process_var: float = 1.0, meas_var: float = 5.0,
               prior_mean: float = 0.0, prior_var: float = 20.0,
               forcing_amplitude: float = 8.0, forcing_rate: float = 1.2) -> SystemModel:
    """Scalar univariate nonlinear growth model.

    Dynamics and measurement:

        x_k = 0.5 x + 25 x / (1 + x^2) + 8 cos(1.2 (k - 1)) + w_k
        z_k = x_k^2 / 20 + v_k

    with x the previous state.  The cosine forcing depends on time only, so
    state derivatives of the transition are time-invariant.  Analytic
    derivatives through third order ride along: first and second order on the
    model interface, third order in ``extras`` for use as a test oracle.
    """

    def f(k: int, x: np.ndarray) -> np.ndarray:
        drift = forcing_amplitude * np.cos(forcing_rate * (k - 1))
        return 0.5 * x + 25.0 * x / (1.0 + x * x) + drift

    def h(k: int, x: np.ndarray) -> np.ndarray:
        return x * x / 20.0

    def f_jac(k: int, x: np.ndarray) -> np.ndarray:
        v = 1.0 + x[0] * x[0]
        return np.array([[0.5 + 25.0 * (1.0 - x[0] * x[0]) / (v * v)]])

    def f_hess(k: int, x: np.ndarray) -> np.ndarray:
        s = x[0]
        v = 1.0 + s * s
        return np.array([[[25.0 * (2.0 * s ** 3 - 6.0 * s) / v ** 3]]])

    def f_third(x: float) -> float:
        v = 1.0 + x * x
        return 150.0 * (-x ** 4 + 6.0 * x * x - 1.0) / v ** 4

    def h_jac(k: int, x: np.ndarray) -> np.ndarray:
        return np.array([[x[0] / 10.0]])

    def h_hess(k: int, x: np.ndarray) -> np.ndarray:
        return np.array([[[0.1]]])

    prior = GaussianPrior(mean=np.array([prior_mean]), cov=np.array([[prior_var]]))
    return SystemModel(
        state_dim=1,
        meas_dim=1,
        transition_fn=f,
        measurement_fn=h,
        process_cov=np.array([[process_var]]),
        meas_cov=np.array([[meas_var]]),
        prior=prior,
        transition_jacobian_fn=f_jac,
        transition_hessian_fn=f_hess,
        measurement_jacobian_fn=h_jac,
        measurement_hessian_fn=h_hess,
        vectorized=True,
        name="ungm",
        extras={"transition_third_derivative": f_third,
                "measurement_third_derivative": lambda x: 0.0},
    )


def linear_gaussian_model(a, h, process_cov, meas_cov, prior_mean, prior_cov,
                          name: str = "linear") -> SystemModel:
    """Linear time-invariant Gaussian model x_k = A x_{k-1} + w, z_k = H x_k + v.

    Accepts scalars or matrices; scalars build the 1-D model.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    h = np.atleast_2d(np.asarray(h, dtype=float))
    n = a.shape[0]
    m = h.shape[0]
    if a.shape != (n, n):
        raise ValueError("a must be square")
    if h.shape != (m, n):
        raise ValueError(f"h shape {h.shape} incompatible with state dim {n}")
    zero_f_hess = np.zeros((n, n, n))
    zero_h_hess = np.zeros((m, n, n))
    prior = GaussianPrior(mean=np.atleast_1d(np.asarray(prior_mean, dtype=float)),
                          cov=np.atleast_2d(np.asarray(prior_cov, dtype=float)))
    return SystemModel(
        state_dim=n,
        meas_dim=m,
        transition_fn=lambda k, x: x @ a.T,
        measurement_fn=lambda k, x: x @ h.T,
        process_cov=np.atleast_2d(np.asarray(process_cov, dtype=float)),
        meas_cov=np.atleast_2d(np.asarray(meas_cov, dtype=float)),
        prior=prior,
        transition_jacobian_fn=lambda k, x: a,
        transition_hessian_fn=lambda k, x: zero_f_hess,
        measurement_jacobian_fn=lambda k, x: h,
        measurement_hessian_fn=lambda k, x: zero_h_hess,
        vectorized=True,
        name=name,
    )
