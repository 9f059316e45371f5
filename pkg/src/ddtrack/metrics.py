"""Tracking accuracy metrics: planar error, post-convergence RMSE, error CDF."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MetricError

_DEFAULT_QUANTILES = (0.5, 0.9, 0.95)


@dataclass
class MetricsConfig:
    """How convergence is declared and which quantiles are reported.

    convergence_mode "covariance" declares convergence at the first step
    where the planar posterior standard deviation stays below the threshold
    for hold_steps consecutive processed steps; "fixed" simply discards the
    first discard_s seconds.
    """

    convergence_mode: str = "covariance"
    convergence_threshold_m: float = 0.5
    convergence_hold_steps: int = 50
    discard_s: float = 2.0
    quantiles: tuple = _DEFAULT_QUANTILES

    def __post_init__(self):
        if self.convergence_mode not in ("covariance", "fixed"):
            raise ConfigError("convergence_mode must be 'covariance' or 'fixed'")
        if self.convergence_threshold_m <= 0.0 and self.convergence_mode == "covariance":
            raise ConfigError("convergence_threshold_m must be positive")
        if self.convergence_hold_steps < 1:
            raise ConfigError("convergence_hold_steps must be at least 1")
        if self.discard_s < 0.0:
            raise ConfigError("discard_s must be non-negative")
        if any(not 0.0 < q < 1.0 for q in self.quantiles):
            raise ConfigError("quantiles must lie strictly inside (0, 1)")


@dataclass
class RunMetrics:
    """Accuracy summary of one tracking run."""

    steps: np.ndarray
    errors: np.ndarray
    k_conv: int | None
    rmse: float | None
    quantiles: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.k_conv is not None


def planar_error(estimate: np.ndarray, truth_position: np.ndarray) -> np.ndarray:
    """Euclidean distance between estimate and truth in the horizontal plane.

    Accepts single vectors or stacked (S, ...) arrays; only the first two
    components of each argument are used, so 6-vector states and 3-vector
    positions mix freely.
    """
    estimate = np.asarray(estimate, dtype=np.float64)
    truth_position = np.asarray(truth_position, dtype=np.float64)
    diff = estimate[..., :2] - truth_position[..., :2]
    return np.linalg.norm(diff, axis=-1)


def planar_sigma(covariances: np.ndarray) -> np.ndarray:
    """sqrt of the planar covariance trace, per step.

    Accepts (S, d, d) covariance stacks (d >= 2) or a precomputed (S,) array
    of planar traces.
    """
    covariances = np.asarray(covariances, dtype=np.float64)
    if covariances.ndim == 1:
        trace = covariances
    elif covariances.ndim == 3:
        trace = covariances[:, 0, 0] + covariances[:, 1, 1]
    else:
        raise ConfigError("covariances must be (S,) traces or (S, d, d) matrices")
    return np.sqrt(np.maximum(trace, 0.0))


def detect_convergence(
    covariances: np.ndarray,
    threshold_m: float = 0.5,
    hold_steps: int = 50,
) -> int | None:
    """First index where planar posterior spread stays below the threshold.

    The spread is sqrt(planar covariance trace); the condition must hold for
    hold_steps consecutive processed steps. Returns the index where the
    qualifying stretch begins, or None when it never does.
    """
    below = planar_sigma(covariances) < threshold_m
    if below.shape[0] < hold_steps:
        return None
    run = np.convolve(below.astype(np.int64), np.ones(hold_steps, dtype=np.int64), "valid")
    hits = np.nonzero(run == hold_steps)[0]
    return int(hits[0]) if hits.size else None


def rmse_after_convergence(errors, k_conv) -> float:
    """RMSE over post-convergence steps, pooled when given multiple runs.

    Args:
        errors: one (S,) error array, or a sequence of them.
        k_conv: matching convergence index, or a sequence of indices; None
            marks a run that never converged (excluded from pooling).

    Raises:
        MetricError: when no post-convergence steps exist at all.
    """
    if isinstance(errors, np.ndarray) and errors.ndim == 1:
        errors = [errors]
        k_conv = [k_conv]
    total = 0.0
    count = 0
    for err, k0 in zip(errors, k_conv, strict=True):
        if k0 is None:
            continue
        err = np.asarray(err, dtype=np.float64)
        if not 0 <= k0 <= err.shape[0]:
            raise MetricError(f"convergence index {k0} outside the run length")
        tail = err[k0:]
        total += float(np.sum(tail**2))
        count += tail.shape[0]
    if count == 0:
        raise MetricError("no post-convergence steps to average over")
    return float(np.sqrt(total / count))


def error_cdf(errors) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF of pooled errors.

    Args:
        errors: array or sequence of arrays; pooled over everything.

    Returns:
        (sorted error values, cumulative frequencies ending at 1).
    """
    if not isinstance(errors, np.ndarray):
        errors = np.concatenate([np.asarray(e, dtype=np.float64).ravel() for e in errors])
    errors = np.sort(errors.ravel())
    if errors.size == 0:
        raise MetricError("error CDF of an empty sample is undefined")
    freq = np.arange(1, errors.size + 1, dtype=np.float64) / errors.size
    return errors, freq


def evaluate_run(
    steps: np.ndarray,
    times: np.ndarray,
    estimate_states: np.ndarray,
    covariances: np.ndarray,
    truth_positions: np.ndarray,
    config: MetricsConfig | None = None,
) -> RunMetrics:
    """Per-run metrics from aligned estimate and truth sequences.

    Args:
        steps: (S,) processed snapshot indices.
        times: (S,) corresponding times.
        estimate_states: (S, 6) state estimates.
        covariances: (S, 6, 6) stacks or (S,) planar traces.
        truth_positions: (S, 3) ground-truth positions at the same steps.
    """
    if config is None:
        config = MetricsConfig()
    steps = np.asarray(steps)
    truth_positions = np.atleast_2d(np.asarray(truth_positions, dtype=np.float64))
    # Checked before planar_error, whose broadcasting would otherwise stretch
    # a short truth table silently over every estimate.
    if truth_positions.shape[0] != steps.shape[0]:
        raise ConfigError("estimates and truth differ in length")
    errors = planar_error(estimate_states, truth_positions)
    if errors.shape[0] != steps.shape[0]:
        raise ConfigError("estimates and truth differ in length")
    if config.convergence_mode == "covariance":
        idx = detect_convergence(
            covariances, config.convergence_threshold_m, config.convergence_hold_steps
        )
    else:
        past = np.nonzero(np.asarray(times) >= times[0] + config.discard_s)[0]
        idx = int(past[0]) if past.size else None
    if idx is None:
        rmse = None
        quants = {}
    else:
        rmse = rmse_after_convergence(errors, idx)
        tail = errors[idx:]
        quants = {q: float(np.quantile(tail, q)) for q in config.quantiles}
    k_conv = int(steps[idx]) if idx is not None else None
    return RunMetrics(
        steps=steps, errors=errors, k_conv=k_conv, rmse=rmse, quantiles=quants
    )


def pool_runs(runs: list[RunMetrics], config: MetricsConfig | None = None) -> dict:
    """Cross-run summary: pooled post-convergence RMSE, quantiles, counts.

    Runs that never converged contribute nothing to the pooled RMSE but are
    counted. Raises MetricError when no run converged.
    """
    if config is None:
        config = MetricsConfig()
    if not runs:
        raise MetricError("no runs to pool")
    pooled = []
    for run in runs:
        if run.k_conv is None:
            continue
        idx = int(np.nonzero(run.steps == run.k_conv)[0][0])
        pooled.append(run.errors[idx:])
    summary = {
        "runs": len(runs),
        "converged_runs": sum(run.converged for run in runs),
    }
    if not pooled:
        raise MetricError("no run converged; pooled RMSE is undefined")
    pooled_arr = np.concatenate(pooled)
    summary["post_convergence_steps"] = int(pooled_arr.size)
    summary["rmse_m"] = float(np.sqrt(np.mean(pooled_arr**2)))
    summary["mean_abs_error_m"] = float(np.mean(pooled_arr))
    summary["max_error_m"] = float(np.max(pooled_arr))
    for q in config.quantiles:
        summary[f"q{int(round(q * 100)):02d}_error_m"] = float(np.quantile(pooled_arr, q))
    return summary
