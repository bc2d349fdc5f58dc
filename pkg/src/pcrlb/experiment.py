"""Monte Carlo experiment harness.

One experiment runs R independent trajectories of a model, filters each with
the configured estimators, and produces:

* the reference bound from Monte Carlo expectations over the same trajectory
  ensemble (paired design),
* the mean-only and mean+cov approximate bounds per estimator, recursed from
  each run's filter beliefs,
* per-step gap series between the two approximations, evaluated both through
  the closed-form difference and by direct subtraction on a shared
  information state, plus counts of steps where the direct gap loses positive
  semidefiniteness,
* per-step RMSE per estimator.

Every run is a pure function of (config, run index): run seeds come from a
splitmix64 avalanche of the master seed, so results are bit-identical
regardless of worker count, and aggregation is in run-index order.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .filters import UTParams, run_pf, run_ukf
from .fim import (bound_difference, decompose_terms, fim_recursion_step,
                  fim_via_decomposition, initial_fim, mean_only_terms, spd_inverse,
                  true_fim_terms_mc)
from .linalg import NumericError, symmetrize
from .model import SystemModel, Trajectory, linear_gaussian_model, sample_trajectory, ungm_model
from .moments import GaussianBelief

__all__ = [
    "DEFAULT_SEED",
    "ExperimentConfig",
    "ExperimentError",
    "RunResult",
    "AggregateResult",
    "derive_run_seed",
    "build_model",
    "rmse_series",
    "aggregate_bounds",
    "gap_series",
    "true_bound_series",
    "run_experiment",
]

DEFAULT_SEED = 123456789

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

ALL_METHODS = ("true", "mean_only", "mean_cov")
ALL_ESTIMATORS = ("ukf", "pf")


class ExperimentError(RuntimeError):
    """The experiment could not produce a trustworthy aggregate."""


def derive_run_seed(master_seed: int, index: int) -> int:
    """Derive an independent 64-bit seed for one run.

    splitmix64-style avalanche of (master_seed, index): the input is the
    master seed advanced by (index + 1) golden-ratio increments, then mixed.
    Distinct indices under one master always map to distinct seeds.
    """
    if index < 0:
        raise ValueError("index must be non-negative")
    z = (int(master_seed) + (index + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment."""

    model_name: str = "ungm"
    model_params: dict = field(default_factory=dict)
    horizon: int = 50
    runs: int = 100
    particles: int = 1000
    master_seed: int = DEFAULT_SEED
    workers: int = 1
    ut: UTParams = UTParams()
    methods: tuple[str, ...] = ALL_METHODS
    estimators: tuple[str, ...] = ALL_ESTIMATORS
    averaging: str = "bounds"
    state_eval: str = "posterior"
    meas_eval: str = "predicted"
    resample: str = "always"
    ess_threshold: float = 0.5
    max_failure_fraction: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.particles < 1:
            raise ValueError("particles must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.averaging not in ("bounds", "fim"):
            raise ValueError(f"unknown averaging mode {self.averaging!r}")
        if self.state_eval not in ("posterior", "predicted"):
            raise ValueError(f"unknown state_eval {self.state_eval!r}")
        if self.meas_eval not in ("predicted", "posterior"):
            raise ValueError(f"unknown meas_eval {self.meas_eval!r}")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ValueError(f"unknown bound methods: {sorted(unknown)}")
        unknown = set(self.estimators) - set(ALL_ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")


def build_model(config: ExperimentConfig) -> SystemModel:
    """Construct the configured model."""
    params = dict(config.model_params)
    if config.model_name == "ungm":
        return ungm_model(**params)
    if config.model_name == "linear":
        return linear_gaussian_model(
            a=params.get("a", 0.9),
            h=params.get("h", 1.0),
            process_cov=params.get("process_var", 1.0),
            meas_cov=params.get("meas_var", 1.0),
            prior_mean=params.get("prior_mean", 0.0),
            prior_cov=params.get("prior_var", 1.0),
        )
    raise ValueError(f"unknown model {config.model_name!r}")


@dataclass
class RunResult:
    """Everything one run contributes to the aggregate."""

    index: int
    seed: int
    trajectory: Optional[Trajectory] = None
    estimates: dict = field(default_factory=dict)       # estimator -> (T, n)
    fims: dict = field(default_factory=dict)            # (method, estimator) -> (T, n, n)
    thetas: dict = field(default_factory=dict)          # estimator -> (T, n, n)
    pis: dict = field(default_factory=dict)             # estimator -> (T, n, n)
    pi_fallbacks: dict = field(default_factory=dict)    # estimator -> (T,) bool
    gap_analytic: dict = field(default_factory=dict)    # estimator -> (T, n, n)
    gap_direct: dict = field(default_factory=dict)      # estimator -> (T, n, n)
    gap_violation: dict = field(default_factory=dict)   # estimator -> (T,) bool
    failed: bool = False
    error: str = ""


def _state_belief_at(outputs, model: SystemModel, k: int, which: str) -> GaussianBelief:
    """Belief about the state at time k-1 feeding the step onto time k."""
    if k == 1:
        return GaussianBelief(model.prior.mean, model.prior.cov)
    out = outputs[k - 2]
    return out.posterior if which == "posterior" else out.predicted


def _meas_belief_at(outputs, k: int, which: str) -> GaussianBelief:
    """Belief about the state at time k feeding the measurement channel."""
    out = outputs[k - 1]
    return out.predicted if which == "predicted" else out.posterior


def _is_negative(matrix: np.ndarray) -> bool:
    eigs = np.linalg.eigvalsh(symmetrize(matrix))
    return bool(eigs[0] < -1e-12 * max(1.0, float(np.abs(eigs).max())))


def _single_run(config: ExperimentConfig, index: int) -> RunResult:
    model = build_model(config)
    seed = derive_run_seed(config.master_seed, index)
    result = RunResult(index=index, seed=seed)
    try:
        trajectory = sample_trajectory(model, config.horizon, derive_run_seed(seed, 0))
        result.trajectory = trajectory
        horizon, n = config.horizon, model.state_dim
        j0 = initial_fim(model.prior)

        for estimator in config.estimators:
            if estimator == "ukf":
                outputs = run_ukf(model, trajectory.measurements, config.ut)
            else:
                outputs = run_pf(model, trajectory.measurements, config.particles,
                                 derive_run_seed(seed, 1), resample=config.resample,
                                 ess_threshold=config.ess_threshold)
            result.estimates[estimator] = np.stack([o.posterior.mean for o in outputs])

            if "mean_only" in config.methods:
                series = np.empty((horizon, n, n))
                j = j0
                for k in range(1, horizon + 1):
                    prev = _state_belief_at(outputs, model, k, config.state_eval)
                    point = _meas_belief_at(outputs, k, config.meas_eval)
                    j = fim_recursion_step(j, mean_only_terms(model, k, prev.mean, point.mean))
                    series[k - 1] = j
                result.fims[("mean_only", estimator)] = series

            if "mean_cov" in config.methods:
                series = np.empty((horizon, n, n))
                thetas = np.empty((horizon, n, n))
                pis = np.empty((horizon, n, n))
                fallbacks = np.zeros(horizon, dtype=bool)
                gaps_a = np.empty((horizon, n, n))
                gaps_d = np.empty((horizon, n, n))
                violations = np.zeros(horizon, dtype=bool)
                j = j0
                for k in range(1, horizon + 1):
                    prev = _state_belief_at(outputs, model, k, config.state_eval)
                    meas = _meas_belief_at(outputs, k, config.meas_eval)
                    parts = decompose_terms(model, k, prev, meas)
                    state = fim_via_decomposition(j, parts, k=k)
                    j = state.j
                    series[k - 1] = j
                    thetas[k - 1] = state.theta
                    pis[k - 1] = state.pi
                    fallbacks[k - 1] = state.pi_fallback
                    gaps_a[k - 1], _ = bound_difference(state.theta, state.pi)
                    gaps_d[k - 1] = spd_inverse(state.theta) - spd_inverse(j)
                    violations[k - 1] = _is_negative(gaps_d[k - 1])
                result.fims[("mean_cov", estimator)] = series
                result.thetas[estimator] = thetas
                result.pis[estimator] = pis
                result.pi_fallbacks[estimator] = fallbacks
                result.gap_analytic[estimator] = gaps_a
                result.gap_direct[estimator] = gaps_d
                result.gap_violation[estimator] = violations
    except (NumericError, np.linalg.LinAlgError, ValueError) as exc:
        result.failed = True
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def _single_run_task(payload: tuple[ExperimentConfig, int]) -> RunResult:
    return _single_run(*payload)


def true_bound_series(model: SystemModel, trajectories: list[Trajectory],
                      horizon: int) -> np.ndarray:
    """Reference information series from Monte Carlo averages over trajectories.

    Returns:
        J series of shape (T, n, n) for k = 1..T.
    """
    if not trajectories:
        raise ExperimentError("no trajectories available for the reference bound")
    states = np.stack([t.states for t in trajectories])  # (R, T+1, n)
    n = model.state_dim
    series = np.empty((horizon, n, n))
    j = initial_fim(model.prior)
    for k in range(1, horizon + 1):
        terms = true_fim_terms_mc(model, k, states[:, k - 1, :], states[:, k, :])
        j = fim_recursion_step(j, terms)
        series[k - 1] = j
    return series


def rmse_series(true_states: np.ndarray, estimates: np.ndarray) -> np.ndarray:
    """Per-step RMSE over runs.

    Args:
        true_states: shape (R, T+1, n) including the initial state.
        estimates: shape (R, T, n) for steps 1..T.

    Returns:
        (T,) array with sqrt(mean over runs of squared error norm) per step.
    """
    true_states = np.asarray(true_states, float)
    estimates = np.asarray(estimates, float)
    if true_states.shape[0] != estimates.shape[0]:
        raise ValueError("run counts disagree")
    if true_states.shape[1] != estimates.shape[1] + 1:
        raise ValueError("true_states must cover one more step than estimates")
    err = true_states[:, 1:, :] - estimates
    return np.sqrt(np.mean(np.sum(err * err, axis=2), axis=0))


def aggregate_bounds(fim_stack: np.ndarray, mode: str = "bounds") -> np.ndarray:
    """Collapse per-run information series into one bound series.

    Args:
        fim_stack: shape (R, T, n, n) of per-run information matrices.
        mode: "bounds" averages the per-run inverses; "fim" inverts the
            averaged information matrix.

    Returns:
        (T, n, n) bound series.
    """
    fim_stack = np.asarray(fim_stack, float)
    if mode == "bounds":
        inv = np.empty_like(fim_stack)
        for r in range(fim_stack.shape[0]):
            for t in range(fim_stack.shape[1]):
                inv[r, t] = spd_inverse(fim_stack[r, t])
        return inv.mean(axis=0)
    if mode == "fim":
        mean_fim = fim_stack.mean(axis=0)
        return np.stack([spd_inverse(mean_fim[t]) for t in range(mean_fim.shape[0])])
    raise ValueError(f"unknown averaging mode {mode!r}")


def gap_series(results: list[RunResult], estimator: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Average the per-run gap series of one estimator.

    Returns:
        (analytic, direct, violations): per-step mean closed-form gap, mean
        direct-subtraction gap, and per-step counts of runs whose direct gap
        has a negative eigenvalue.
    """
    ok = [r for r in results if not r.failed and estimator in r.gap_analytic]
    if not ok:
        raise ExperimentError(f"no successful runs carry gap data for {estimator!r}")
    analytic = np.mean([r.gap_analytic[estimator] for r in ok], axis=0)
    direct = np.mean([r.gap_direct[estimator] for r in ok], axis=0)
    violations = np.sum([r.gap_violation[estimator] for r in ok], axis=0).astype(int)
    return analytic, direct, violations


@dataclass
class AggregateResult:
    """Aggregated output of one experiment."""

    config: ExperimentConfig
    bounds: dict                 # (method, estimator or None) -> (T, n, n)
    rmse: dict                   # estimator -> (T,)
    gaps: dict                   # estimator -> {"analytic", "direct", "violations"}
    pi_fallback_counts: dict     # estimator -> (T,) int
    runs_used: int
    failed_runs: list            # [(index, error), ...]

    @property
    def horizon(self) -> int:
        return self.config.horizon


def run_experiment(config: ExperimentConfig) -> AggregateResult:
    """Run the full Monte Carlo experiment described by the config."""
    model = build_model(config)  # validates the model config up front
    payloads = [(config, i) for i in range(config.runs)]
    if config.workers == 1:
        results = [_single_run(config, i) for i in range(config.runs)]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_single_run_task, payloads))

    failed = [(r.index, r.error) for r in results if r.failed]
    if len(failed) > config.max_failure_fraction * config.runs:
        details = "; ".join(f"run {i}: {e}" for i, e in failed[:5])
        raise ExperimentError(
            f"{len(failed)} of {config.runs} runs failed "
            f"(threshold {config.max_failure_fraction:.0%}): {details}")
    ok = [r for r in results if not r.failed]

    bounds: dict = {}
    if "true" in config.methods:
        true_fims = true_bound_series(model, [r.trajectory for r in ok], config.horizon)
        bounds[("true", None)] = np.stack([spd_inverse(j) for j in true_fims])
    for method in ("mean_only", "mean_cov"):
        if method not in config.methods:
            continue
        for estimator in config.estimators:
            stack = np.stack([r.fims[(method, estimator)] for r in ok])
            bounds[(method, estimator)] = aggregate_bounds(stack, config.averaging)

    rmse = {}
    true_states = np.stack([r.trajectory.states for r in ok])
    for estimator in config.estimators:
        estimates = np.stack([r.estimates[estimator] for r in ok])
        rmse[estimator] = rmse_series(true_states, estimates)

    gaps = {}
    fallback_counts = {}
    if "mean_cov" in config.methods:
        for estimator in config.estimators:
            analytic, direct, violations = gap_series(ok, estimator)
            gaps[estimator] = {"analytic": analytic, "direct": direct,
                               "violations": violations}
            fallback_counts[estimator] = np.sum(
                [r.pi_fallbacks[estimator] for r in ok], axis=0).astype(int)

    return AggregateResult(config=config, bounds=bounds, rmse=rmse, gaps=gaps,
                           pi_fallback_counts=fallback_counts,
                           runs_used=len(ok), failed_runs=failed)
