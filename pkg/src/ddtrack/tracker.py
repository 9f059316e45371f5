"""Regularized particle filter over a nearly-constant-velocity state model.

The state vector is x = [px, py, pz, vx, vy, sigma2]: planar velocity only
(the transmit height is quasi-static) and the measurement noise variance
carried as a random-walk state so the filter self-calibrates the SNR. Each
processed step slides a window over the CSI stream and runs

    predict -> reweight -> estimate -> resample -> regularize,

with systematic resampling and a Gaussian kernel whose bandwidth follows the
standard optimal rule h = (4 / (d + 2))^(1/(d+4)) * N^(-1/(d+4)).

Weights live in the log domain throughout: a full window spans on the order
of 10^6 complex cells, so raw likelihoods overflow any floating-point range
and only differences of log-weights are meaningful.

All randomness is drawn from counter-style substreams keyed by
(seed, step, stage), so a run is reproducible bit for bit regardless of BLAS
thread count or how Monte-Carlo runs are scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .channel import CsiDataset
from .errors import (
    ConfigError,
    FilterDegeneracyError,
    FilterDivergenceError,
)
from .likelihood import ObservationWindow, WindowEvaluator

_STATE_DIM = 6

# Substream stage tags; see _stage_rng.
_STAGE_INIT = 0
_STAGE_PREDICT = 1
_STAGE_RESAMPLE = 2
_STAGE_REGULARIZE = 3

# Escalating Cholesky jitter, as multiples of mean(diag(P)).
_JITTER_SCHEDULE = (1e-12, 1e-9, 1e-6)


@dataclass
class FilterConfig:
    """Tuning knobs of the tracking filter.

    Args:
        particles: ensemble size N.
        window: window length N_t in snapshots.
        x_min, x_max: 6-vector initialization bounds (position box, velocity
            box, sigma2 range). sigma2 draws are log-uniform over its range.
        sigma_p, sigma_h, sigma_v, sigma_s: per-step process noise standard
            deviations for planar position, height, planar velocity, and the
            sigma2 component.
        dt_s: snapshot period; None adopts the dataset's.
        kernel_bandwidth_mode: "optimal" for the plug-in rule, "fixed" to use
            kernel_bandwidth_h verbatim.
        burn_in_mode: "none", or "bartlett" to reweight the first
            burn_in_steps updates with temperature_t * matched-filter score
            instead of the profile log-likelihood. The score's dynamic range
            is ~M rather than ~10^6, which keeps the uniform cloud alive
            until it has collapsed onto the basin of attraction. The
            temperature ramps geometrically from 1 to burn_in_temperature
            across the burn-in, annealing the cloud tight enough that the
            far sharper profile likelihood can take over; 1.0 keeps the raw
            score throughout.
        update_stride: process every s-th snapshot.
        window_stride: keep every s-th snapshot inside the window (time
            decimation; the window still spans the most recent N_t snapshots,
            anchored at the processed one).
        resample_mode: "always" per the reference algorithm, or "ess" to
            resample only when ESS < ess_threshold_ratio * N.
        precision: working precision of the likelihood evaluator.
        sigma2_floor: reflection floor for the sigma2 component.
        reinit_on_divergence: re-draw the ensemble from the prior box instead
            of aborting when every particle goes to -inf.
        seed: RNG seed for all filter stages.
    """

    particles: int = 16000
    window: int = 200
    x_min: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 0.0, -1.0, -1.0, 1e-6])
    )
    x_max: np.ndarray = field(
        default_factory=lambda: np.array([30.0, 15.0, 2.5, 1.0, 1.0, 1e2])
    )
    sigma_p: float = 3e-4
    sigma_h: float = 0.02
    sigma_v: float = 0.03
    sigma_s: float = 0.3
    dt_s: float | None = None
    kernel_bandwidth_mode: str = "optimal"
    kernel_bandwidth_h: float = 0.0
    burn_in_mode: str = "bartlett"
    burn_in_steps: int = 10
    burn_in_temperature: float = 1.0
    update_stride: int = 1
    window_stride: int = 1
    resample_mode: str = "always"
    ess_threshold_ratio: float = 0.5
    precision: str = "single"
    sigma2_floor: float = 1e-12
    reinit_on_divergence: bool = False
    seed: int = 0

    def __post_init__(self):
        self.x_min = np.asarray(self.x_min, dtype=np.float64).ravel()
        self.x_max = np.asarray(self.x_max, dtype=np.float64).ravel()
        if self.particles < 2:
            raise ConfigError("particle count must be at least 2")
        if self.window < 1:
            raise ConfigError("window length must be at least 1")
        if self.x_min.shape != (_STATE_DIM,) or self.x_max.shape != (_STATE_DIM,):
            raise ConfigError("x_min and x_max must be 6-vectors")
        if np.any(self.x_min > self.x_max):
            raise ConfigError("x_min must not exceed x_max componentwise")
        if self.x_min[5] <= 0.0:
            raise ConfigError("sigma2 initialization range must be positive")
        for name in ("sigma_p", "sigma_h", "sigma_v", "sigma_s"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be non-negative")
        if self.kernel_bandwidth_mode not in ("optimal", "fixed"):
            raise ConfigError("kernel_bandwidth_mode must be 'optimal' or 'fixed'")
        if self.kernel_bandwidth_mode == "fixed" and self.kernel_bandwidth_h < 0.0:
            raise ConfigError("fixed kernel bandwidth must be non-negative")
        if self.burn_in_mode not in ("none", "bartlett"):
            raise ConfigError("burn_in_mode must be 'none' or 'bartlett'")
        if self.burn_in_steps < 0:
            raise ConfigError("burn_in_steps must be non-negative")
        if self.burn_in_temperature <= 0.0:
            raise ConfigError("burn_in_temperature must be positive")
        if self.update_stride < 1 or self.window_stride < 1:
            raise ConfigError("strides must be at least 1")
        if self.window_stride > self.window:
            raise ConfigError("window_stride must not exceed the window length")
        if self.resample_mode not in ("always", "ess"):
            raise ConfigError("resample_mode must be 'always' or 'ess'")
        if self.precision not in ("single", "double"):
            raise ConfigError("precision must be 'single' or 'double'")
        if not 0.0 < self.ess_threshold_ratio <= 1.0:
            raise ConfigError("ess_threshold_ratio must lie in (0, 1]")
        if self.sigma2_floor <= 0.0:
            raise ConfigError("sigma2_floor must be positive")
        if self.dt_s is not None and self.dt_s <= 0.0:
            raise ConfigError("dt_s must be positive")


@dataclass
class TransitionModel:
    """Linear state transition x <- matrix @ x + noise_std * N(0, I)."""

    matrix: np.ndarray
    noise_std: np.ndarray

    @classmethod
    def from_config(cls, config: FilterConfig, dt: float) -> "TransitionModel":
        matrix = np.eye(_STATE_DIM)
        matrix[0, 3] = dt
        matrix[1, 4] = dt
        noise_std = np.array(
            [
                config.sigma_p,
                config.sigma_p,
                config.sigma_h,
                config.sigma_v,
                config.sigma_v,
                config.sigma_s,
            ]
        )
        return cls(matrix=matrix, noise_std=noise_std)


@dataclass
class ParticleEnsemble:
    """Weighted particle set; weights are stored as logs."""

    states: np.ndarray
    log_weights: np.ndarray
    step: int = 0

    @property
    def count(self) -> int:
        return self.states.shape[0]

    @property
    def ess(self) -> float:
        """Effective sample size 1/sum(w^2) of the normalized weights."""
        w = np.exp(self.log_weights - logsumexp(self.log_weights))
        return float(1.0 / np.sum(w**2))


@dataclass
class TrackEstimate:
    """Per-step filter output over one run.

    Args:
        steps: (S,) snapshot indices the estimates refer to: the midpoint of
            each processed window's span, where the windowed fit localizes
            the agent.
        times: (S,) corresponding times in seconds.
        states: (S, 6) MMSE state estimates.
        covariances: (S, 6, 6) posterior covariances.
        ess: (S,) effective sample sizes at reweight time.
        log_norm: (S,) per-step log normalization constants log c_k.
        reinit_steps: snapshot indices (newest snapshot of the failing
            window) where the ensemble was re-drawn from the prior after a
            divergence (empty unless configured).
    """

    steps: np.ndarray
    times: np.ndarray
    states: np.ndarray
    covariances: np.ndarray
    ess: np.ndarray
    log_norm: np.ndarray
    reinit_steps: list[int] = field(default_factory=list)

    @property
    def num_steps(self) -> int:
        return self.steps.shape[0]


def _stage_rng(seed: int, step: int, stage: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(step, stage))
    return np.random.Generator(np.random.Philox(ss))


def _reflect_floor(values: np.ndarray, floor: float) -> np.ndarray:
    # Reflection keeps the diffusion alive at the boundary, unlike clamping,
    # which would pile particles onto it.
    return floor + np.abs(values - floor)


def kernel_bandwidth(dim: int, count: int) -> float:
    """Optimal Gaussian-kernel bandwidth factor for a size-`count` ensemble.

    h = (4 / (dim + 2))^(1/(dim+4)) * count^(-1/(dim+4)).
    """
    if dim < 1 or count < 1:
        raise ConfigError("dimension and count must be positive")
    a = (4.0 / (dim + 2)) ** (1.0 / (dim + 4))
    return float(a * count ** (-1.0 / (dim + 4)))


def init_ensemble(config: FilterConfig, rng: np.random.Generator) -> ParticleEnsemble:
    """Draw N particles uniformly over the initialization bounds.

    Position and velocity components are uniform; sigma2 is log-uniform over
    its range, which spreads particles evenly across SNR orders of magnitude.
    """
    n = config.particles
    states = np.empty((n, _STATE_DIM))
    states[:, :5] = rng.uniform(config.x_min[:5], config.x_max[:5], size=(n, 5))
    states[:, 5] = np.exp(
        rng.uniform(np.log(config.x_min[5]), np.log(config.x_max[5]), size=n)
    )
    log_weights = np.full(n, -np.log(n))
    return ParticleEnsemble(states=states, log_weights=log_weights, step=0)


def predict(
    ensemble: ParticleEnsemble,
    transition: TransitionModel,
    rng: np.random.Generator,
    sigma2_floor: float = 1e-12,
) -> ParticleEnsemble:
    """Propagate every particle one step through the motion model.

    Weights are unchanged: the proposal equals the transition density, so the
    importance ratio cancels.
    """
    states = ensemble.states @ transition.matrix.T
    states += rng.standard_normal(states.shape) * transition.noise_std
    states[:, 5] = _reflect_floor(states[:, 5], sigma2_floor)
    return ParticleEnsemble(
        states=states, log_weights=ensemble.log_weights, step=ensemble.step + 1
    )


def reweight(
    ensemble: ParticleEnsemble,
    window: ObservationWindow,
    likelihood_fn,
) -> tuple[ParticleEnsemble, float]:
    """Fold log-likelihood increments into the weights and renormalize.

    Args:
        ensemble: current particle set.
        window: the observation window the increments refer to.
        likelihood_fn: callable (window, states) -> (N,) log increments.

    Returns:
        (new ensemble, log c) where log c is the log normalization constant,
        logsumexp of the unnormalized posterior log-weights.

    Raises:
        FilterDivergenceError: when every particle scores -inf.
    """
    increments = np.asarray(likelihood_fn(window, ensemble.states), dtype=np.float64)
    if increments.shape != ensemble.log_weights.shape:
        raise ConfigError("likelihood_fn must return one increment per particle")
    raw = ensemble.log_weights + increments
    log_c = float(logsumexp(raw))
    if not np.isfinite(log_c):
        raise FilterDivergenceError(
            "every particle received log-weight -inf", step=ensemble.step
        )
    return (
        ParticleEnsemble(
            states=ensemble.states, log_weights=raw - log_c, step=ensemble.step
        ),
        log_c,
    )


def mmse_estimate(ensemble: ParticleEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Weighted posterior mean and covariance of the ensemble.

    Returns:
        (mean (6,), covariance (6, 6)); the covariance is symmetrized.
    """
    w = np.exp(ensemble.log_weights - logsumexp(ensemble.log_weights))
    mean = w @ ensemble.states
    centered = ensemble.states - mean
    cov = (centered * w[:, None]).T @ centered
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def systematic_resample(
    ensemble: ParticleEnsemble, rng: np.random.Generator
) -> ParticleEnsemble:
    """Resample N offspring with the single-uniform systematic scheme.

    Selection points (u + i)/N against the cumulative weight sum guarantee
    that particle i spawns floor(N w_i) or ceil(N w_i) offspring. Weights
    reset to 1/N.
    """
    n = ensemble.count
    w = np.exp(ensemble.log_weights - logsumexp(ensemble.log_weights))
    cum = np.cumsum(w)
    cum[-1] = 1.0  # guard against rounding in the final partial sum
    points = (rng.random() + np.arange(n)) / n
    idx = np.searchsorted(cum, points, side="left")
    idx = np.minimum(idx, n - 1)
    return ParticleEnsemble(
        states=ensemble.states[idx].copy(),
        log_weights=np.full(n, -np.log(n)),
        step=ensemble.step,
    )


def _cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    scale = float(np.mean(np.diag(cov)))
    if not np.isfinite(scale):
        raise FilterDegeneracyError("ensemble covariance contains non-finite entries")
    if scale <= 1e-100:
        # Fully collapsed ensemble (weight on a single particle): there is no
        # spread to restore and the jitter would underflow; the kernel becomes
        # a no-op and diversity re-enters through the process noise.
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(cov.shape[0])
    for lam in _JITTER_SCHEDULE:
        try:
            return np.linalg.cholesky(cov + lam * scale * eye)
        except np.linalg.LinAlgError:
            continue
    raise FilterDegeneracyError(
        "ensemble covariance is not factorizable even with jitter"
    )


def regularize(
    ensemble: ParticleEnsemble,
    covariance: np.ndarray,
    config: FilterConfig,
    rng: np.random.Generator,
) -> ParticleEnsemble:
    """Jitter the resampled particles with a scaled Gaussian kernel.

    Each particle moves by h * L * eps with LL^T the posterior covariance
    (plus escalating jitter when the factorization fails) and eps standard
    normal. This restores diversity lost to resampling duplication.
    """
    if config.kernel_bandwidth_mode == "fixed":
        h = config.kernel_bandwidth_h
    else:
        h = kernel_bandwidth(_STATE_DIM, ensemble.count)
    if h == 0.0:
        return ParticleEnsemble(
            states=ensemble.states.copy(),
            log_weights=ensemble.log_weights.copy(),
            step=ensemble.step,
        )
    chol = _cholesky_with_jitter(np.asarray(covariance, dtype=np.float64))
    eps = rng.standard_normal(ensemble.states.shape)
    states = ensemble.states + h * (eps @ chol.T)
    states[:, 5] = _reflect_floor(states[:, 5], config.sigma2_floor)
    return ParticleEnsemble(
        states=states, log_weights=ensemble.log_weights.copy(), step=ensemble.step
    )


def _window_indices(step: int, window: int, stride: int) -> np.ndarray:
    # Anchored at the processed snapshot; decimation thins the interior, the
    # span stays within the window length.
    return np.arange(step, step - window, -stride)[::-1].copy()


def _emit_offset(window: int, stride: int) -> int:
    # The windowed measurement fits one position to snapshots spanning
    # [k - window + stride, k], so it localizes the agent where it was at the
    # middle of that span, half the span behind the newest snapshot. Estimates
    # are therefore timestamped at the span midpoint; labelling them with the
    # newest snapshot would misreport a moving agent by half a window of
    # travel.
    return (window - stride) // 2


def _build_window(
    dataset: CsiDataset,
    anchors: np.ndarray,
    indices: np.ndarray,
) -> ObservationWindow:
    block = dataset.snapshots[indices].transpose(1, 2, 0)
    return ObservationWindow(
        snapshots=block,
        times=indices.astype(np.float64) * dataset.dt_s,
        baseband_freqs=dataset.baseband_freqs,
        carrier_hz=dataset.carrier_hz,
        anchor_positions=anchors,
    )


def run_filter(
    dataset: CsiDataset,
    config: FilterConfig,
    progress=None,
) -> TrackEstimate:
    """Track the agent through a dataset; see the module docstring.

    The filter works in a frame rebased to the first anchor: all geometry
    (anchors, initialization box, particle positions) has anchor 0 at the
    origin internally, and estimates are shifted back on emission. The
    filter's arithmetic is therefore exactly translation-equivariant.

    Each processed snapshot k consumes the window ending at k but emits its
    estimate under the snapshot index at the middle of the window span, which
    is the instant the windowed fit localizes (a fixed-lag smoothed estimate;
    see _emit_offset). TrackEstimate.steps carries those emission indices.

    Args:
        dataset: CSI stream with anchor geometry.
        config: filter tuning; config.dt_s, when set, must match the dataset.
        progress: optional callable(processed_index, total_processed).

    Returns:
        TrackEstimate over the processed snapshots, one row per window.

    Raises:
        ConfigError: on grid mismatch or too few snapshots.
        FilterDivergenceError: when all weights vanish and re-initialization
            is not enabled.
    """
    if config.dt_s is not None and abs(config.dt_s - dataset.dt_s) > 1e-12:
        raise ConfigError("config dt_s does not match the dataset snapshot period")
    num_steps = dataset.num_steps
    if num_steps < config.window:
        raise ConfigError(
            f"dataset has {num_steps} snapshots, shorter than the window "
            f"{config.window}"
        )

    origin = dataset.anchor_positions[0].copy()
    anchors_rel = dataset.anchor_positions - origin[None, :]
    shift = np.zeros(_STATE_DIM)
    shift[:3] = origin
    config_rel = replace(
        config, x_min=config.x_min - shift, x_max=config.x_max - shift
    )

    transition = TransitionModel.from_config(config, dataset.dt_s)
    seed = config.seed
    first = config.window - 1
    processed = list(range(first, num_steps, config.update_stride))
    total = len(processed)
    emit_offset = _emit_offset(config.window, config.window_stride)

    ensemble = init_ensemble(config_rel, _stage_rng(seed, 0, _STAGE_INIT))
    ensemble = ParticleEnsemble(
        states=ensemble.states, log_weights=ensemble.log_weights, step=first
    )

    def profile_fn(evaluator):
        def fn(window, states):
            return evaluator.log_likelihood(
                states[:, :3], states[:, 3:5], states[:, 5]
            )

        return fn

    def burn_in_fn(evaluator, temperature):
        def fn(window, states):
            return temperature * evaluator.matched_filter_score(
                states[:, :3], states[:, 3:5]
            )

        return fn

    steps, times, means, covs, esss, log_norms = [], [], [], [], [], []
    reinit_steps: list[int] = []
    prev_step = first
    for count, k in enumerate(processed):
        for j in range(prev_step + 1, k + 1):
            ensemble = predict(
                ensemble,
                transition,
                _stage_rng(seed, j, _STAGE_PREDICT),
                sigma2_floor=config.sigma2_floor,
            )
        prev_step = k

        window = _build_window(
            dataset, anchors_rel, _window_indices(k, config.window, config.window_stride)
        )
        evaluator = WindowEvaluator(window, precision=config.precision)
        burn_in = config.burn_in_mode == "bartlett" and count < config.burn_in_steps
        if burn_in:
            # Geometric temperature ramp 1 -> burn_in_temperature.
            temperature = config.burn_in_temperature ** (
                (count + 1) / config.burn_in_steps
            )
            likelihood_fn = burn_in_fn(evaluator, temperature)
        else:
            likelihood_fn = profile_fn(evaluator)
        try:
            ensemble, log_c = reweight(ensemble, window, likelihood_fn)
        except FilterDivergenceError as exc:
            if not config.reinit_on_divergence:
                raise FilterDivergenceError(
                    f"filter diverged at snapshot {k}: {exc}", step=k
                ) from exc
            fresh = init_ensemble(config_rel, _stage_rng(seed, k, _STAGE_INIT))
            ensemble = ParticleEnsemble(
                states=fresh.states, log_weights=fresh.log_weights, step=k
            )
            reinit_steps.append(k)
            if progress is not None:
                progress(count, total)
            continue

        ess = ensemble.ess
        mean, cov = mmse_estimate(ensemble)
        steps.append(k - emit_offset)
        times.append((k - emit_offset) * dataset.dt_s)
        means.append(mean + shift)
        covs.append(cov)
        esss.append(ess)
        log_norms.append(log_c)

        if config.resample_mode == "always" or ess < (
            config.ess_threshold_ratio * ensemble.count
        ):
            ensemble = systematic_resample(ensemble, _stage_rng(seed, k, _STAGE_RESAMPLE))
            ensemble = regularize(
                ensemble, cov, config_rel, _stage_rng(seed, k, _STAGE_REGULARIZE)
            )
        if progress is not None:
            progress(count, total)

    return TrackEstimate(
        steps=np.array(steps, dtype=np.int64),
        times=np.array(times),
        states=np.array(means).reshape(-1, _STATE_DIM),
        covariances=np.array(covs).reshape(-1, _STATE_DIM, _STATE_DIM),
        ess=np.array(esss),
        log_norm=np.array(log_norms),
        reinit_steps=reinit_steps,
    )
