"""Second-order Taylor propagation of Gaussian beliefs through model maps.

Given a belief x ~ N(mean, cov) and a map g with Jacobian G and per-output
Hessians S_i at the mean, the propagated moments are

    g_bar   = g(mean) + 0.5 * sum_i e_i tr(S_i cov)
    P_out   = G cov G' + 0.5 * sum_ij e_i e_j' tr(S_i cov S_j cov) + noise

applied to the transition map (producing state moments at time k from a
belief at k-1) and the measurement map (producing measurement moments at
time k from a belief at k).

The FIM engines also need derivatives of these moment maps with respect to
the conditioning point, holding the belief covariance frozen.  Those involve
third derivatives of the underlying map, which the model interface does not
expose, so they are obtained by central finite differences of the moment maps
themselves; the mean derivative reuses the model's analytic Jacobian for its
first-order part so that curvature-free models come out exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .linalg import symmetrize
from .model import SystemModel, _JAC_STEP

__all__ = [
    "GaussianBelief",
    "PropagatedMoments",
    "MomentMapDerivatives",
    "propagate_state_moments",
    "propagate_measurement_moments",
    "state_moment_map_derivatives",
    "measurement_moment_map_derivatives",
]


@dataclass(frozen=True)
class GaussianBelief:
    """A Gaussian belief N(mean, cov) about a state.

    The covariance may be positive semidefinite (a zero covariance encodes
    exact knowledge of the state), but never indefinite.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise ValueError(f"cov shape {cov.shape} does not match mean dimension {n}")
        scale = max(1.0, float(np.abs(cov).max()))
        if not np.allclose(cov, cov.T, atol=1e-8 * scale):
            raise ValueError("belief covariance must be symmetric")
        if float(np.linalg.eigvalsh(cov)[0]) < -1e-10 * scale:
            raise ValueError("belief covariance must be positive semidefinite")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class PropagatedMoments:
    """Moments of a belief pushed through a map with additive noise.

    cov always equals linear_cov + curvature_cov + noise_cov:  linear_cov is
    the Jacobian sandwich G cov G', curvature_cov is the Hessian-trace double
    sum (it vanishes whenever all Hessians vanish), and noise_cov is the
    additive noise covariance.  signal_cov = cov - noise_cov is the part the
    FIM decomposition feeds to the inversion-lemma split.
    """

    mean: np.ndarray
    cov: np.ndarray
    curvature_mean: np.ndarray
    curvature_cov: np.ndarray
    linear_cov: np.ndarray
    noise_cov: np.ndarray

    @property
    def signal_cov(self) -> np.ndarray:
        return self.linear_cov + self.curvature_cov


class MomentMapDerivatives(NamedTuple):
    """Derivatives of a moment map w.r.t. the conditioning point.

    dmean[i, j]  = d mean_i / d x_j          (includes the map Jacobian)
    dcov[j]      = d cov / d x_j             (noise-free part; (n_in,) of (out, out))
    dcurv_mean   = d curvature_mean / d x    (the second-order part of dmean)
    """

    dmean: np.ndarray
    dcov: np.ndarray
    dcurv_mean: np.ndarray


def _curvature_mean(hessians: np.ndarray, cov: np.ndarray) -> np.ndarray:
    return 0.5 * np.array([np.trace(hi @ cov) for hi in hessians])


def _curvature_cov(hessians: np.ndarray, cov: np.ndarray) -> np.ndarray:
    out = hessians.shape[0]
    hp = [hi @ cov for hi in hessians]
    curv = np.empty((out, out))
    for i in range(out):
        for j in range(i, out):
            val = 0.5 * np.trace(hp[i] @ hp[j])
            curv[i, j] = val
            curv[j, i] = val
    return curv


def _propagate(value: np.ndarray, jac: np.ndarray, hessians: np.ndarray,
               cov: np.ndarray, noise: np.ndarray) -> PropagatedMoments:
    curv_mean = _curvature_mean(hessians, cov)
    linear = symmetrize(jac @ cov @ jac.T)
    curv_cov = _curvature_cov(hessians, cov)
    total = symmetrize(linear + curv_cov + noise)
    return PropagatedMoments(mean=value + curv_mean, cov=total,
                             curvature_mean=curv_mean, curvature_cov=curv_cov,
                             linear_cov=linear, noise_cov=noise)


def propagate_state_moments(model: SystemModel, k: int,
                            belief: GaussianBelief) -> PropagatedMoments:
    """Moments of the state at time k from a belief about the state at k-1."""
    if belief.dim != model.state_dim:
        raise ValueError("belief dimension does not match model state_dim")
    x = belief.mean
    return _propagate(model.transition(k, x), model.transition_jacobian(k, x),
                      model.transition_hessians(k, x), belief.cov,
                      model.process_cov_at(k))


def propagate_measurement_moments(model: SystemModel, k: int,
                                  belief: GaussianBelief) -> PropagatedMoments:
    """Moments of the measurement at time k from a belief about the state at k."""
    if belief.dim != model.state_dim:
        raise ValueError("belief dimension does not match model state_dim")
    x = belief.mean
    return _propagate(model.measure(k, x), model.measurement_jacobian(k, x),
                      model.measurement_hessians(k, x), belief.cov,
                      model.meas_cov_at(k))


def _moment_map_derivatives(jac_fn, hess_fn, base_jac: np.ndarray,
                            mean: np.ndarray, cov: np.ndarray) -> MomentMapDerivatives:
    """Shared central-difference engine for both moment channels.

    Differentiates x -> curvature_mean(x) and x -> signal_cov(x) with the
    belief covariance frozen; the full mean derivative is the analytic map
    Jacobian plus the curvature-mean derivative.
    """
    n_in = mean.shape[0]
    n_out = base_jac.shape[0]

    def signal_parts(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        jac = jac_fn(x)
        hess = hess_fn(x)
        return (_curvature_mean(hess, cov),
                symmetrize(jac @ cov @ jac.T) + _curvature_cov(hess, cov))

    dcurv = np.empty((n_out, n_in))
    dcov = np.empty((n_in, n_out, n_out))
    for i in range(n_in):
        h = _JAC_STEP * max(1.0, abs(mean[i]))
        xp = mean.copy()
        xm = mean.copy()
        xp[i] += h
        xm[i] -= h
        cm_p, sc_p = signal_parts(xp)
        cm_m, sc_m = signal_parts(xm)
        dcurv[:, i] = (cm_p - cm_m) / (2.0 * h)
        dcov[i] = symmetrize((sc_p - sc_m) / (2.0 * h))
    return MomentMapDerivatives(dmean=base_jac + dcurv, dcov=dcov, dcurv_mean=dcurv)


def state_moment_map_derivatives(model: SystemModel, k: int,
                                 belief: GaussianBelief) -> MomentMapDerivatives:
    """Derivatives of the time-k state moment map at the belief mean."""
    return _moment_map_derivatives(
        lambda x: model.transition_jacobian(k, x),
        lambda x: model.transition_hessians(k, x),
        model.transition_jacobian(k, belief.mean),
        belief.mean, belief.cov)


def measurement_moment_map_derivatives(model: SystemModel, k: int,
                                       belief: GaussianBelief) -> MomentMapDerivatives:
    """Derivatives of the time-k measurement moment map at the belief mean."""
    return _moment_map_derivatives(
        lambda x: model.measurement_jacobian(k, x),
        lambda x: model.measurement_hessians(k, x),
        model.measurement_jacobian(k, belief.mean),
        belief.mean, belief.cov)
