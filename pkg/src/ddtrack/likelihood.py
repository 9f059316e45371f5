"""Profile likelihood of CSI windows under a rank-one delay-Doppler model.

A window collects N_t consecutive snapshots per anchor. Under local
linearization of the motion, anchor m's window is a rank-one matrix: a delay
steering vector over subcarriers times a Doppler progression over snapshot
times, scaled by one unknown complex gain per anchor. The gain is nuisance;
maximizing the Gaussian likelihood over it in closed form leaves the energy
of the data outside the one-dimensional signal subspace:

    r_m = ||y_m||^2 - |psi_m^H y_m|^2 / ||psi_m||^2

with psi_m = vec(b_m c_m^T) and ||psi_m||^2 = N_f * N_t exactly, because both
factors are unit-modulus. The profile log-likelihood of the window is then

    log p = -(1/sigma^2) * sum_m r_m - M * N_t * N_f * log(pi * sigma^2).

The same inner products also give a normalized matched-filter score

    S = sum_m |psi_m^H y_m|^2 / (||psi_m||^2 ||y_m||^2)  in  [0, M],

which depends only on subspace alignment, not on sigma^2 or signal energy;
the tracker uses it as a flat-tailed reweighting target while the particle
cloud is still spread over the whole scene.

The projection residual never materializes the (N_f*N_t)^2 projector; all
batched evaluation factorizes psi^H y = c^H (B^H Y) so the per-particle cost
is one matrix-vector product per anchor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .scenario import SPEED_OF_LIGHT

_UNIFORM_GRID_RTOL = 1e-9


@dataclass
class ObservationWindow:
    """One sliding window of CSI snapshots with its grid metadata.

    Args:
        snapshots: (M, N_f, N_t) complex array; column n is the n-th snapshot
            of the window, oldest first.
        times: (N_t,) snapshot instants in seconds, uniformly spaced.
        baseband_freqs: (N_f,) subcarrier frequencies, uniformly spaced.
        carrier_hz: RF carrier frequency.
        anchor_positions: (M, 3) anchor positions in meters.
    """

    snapshots: np.ndarray
    times: np.ndarray
    baseband_freqs: np.ndarray
    carrier_hz: float
    anchor_positions: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64).ravel()
        self.baseband_freqs = np.asarray(self.baseband_freqs, dtype=np.float64).ravel()
        self.anchor_positions = np.asarray(self.anchor_positions, dtype=np.float64)
        if self.snapshots.ndim != 3:
            raise ConfigError("window snapshots must have shape (M, N_f, N_t)")
        m, n_f, n_t = self.snapshots.shape
        if self.times.shape != (n_t,):
            raise ConfigError("window times must match the snapshot axis")
        if self.baseband_freqs.shape != (n_f,):
            raise ConfigError("window frequencies must match the subcarrier axis")
        if self.anchor_positions.shape != (m, 3):
            raise ConfigError("anchor_positions must have shape (M, 3)")
        _grid_step(self.baseband_freqs, "subcarrier grid")
        if n_t > 1:
            _grid_step(self.times, "window time grid")

    @property
    def num_anchors(self) -> int:
        return self.snapshots.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.snapshots.shape[1]

    @property
    def num_snapshots(self) -> int:
        return self.snapshots.shape[2]


@dataclass
class StateHypothesis:
    """Candidate agent state: position, planar velocity, noise variance."""

    position: np.ndarray
    velocity: np.ndarray
    noise_var: float

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).ravel()
        self.velocity = np.asarray(self.velocity, dtype=np.float64).ravel()
        if self.position.shape != (3,):
            raise ConfigError("hypothesis position must be a 3-vector")
        if self.velocity.shape != (2,):
            raise ConfigError("hypothesis velocity must be planar (vx, vy)")


@dataclass
class LikelihoodResult:
    """Profile-likelihood evaluation of one window at one state."""

    log_likelihood: float
    residuals: np.ndarray
    amplitudes: np.ndarray
    score: float


def _grid_step(grid: np.ndarray, name: str) -> float:
    steps = np.diff(grid)
    if steps.size == 0:
        return 0.0
    step = float(steps[0])
    if step <= 0.0:
        raise ConfigError(f"{name} must be strictly increasing")
    if np.max(np.abs(steps - step)) > _UNIFORM_GRID_RTOL * abs(step):
        raise ConfigError(f"{name} must be uniformly spaced")
    return step


def delay_doppler_response(
    state: StateHypothesis,
    anchor_position: np.ndarray,
    baseband_freqs: np.ndarray,
    carrier_hz: float,
    times: np.ndarray,
) -> np.ndarray:
    """vec(b c^T) for one anchor: the unit-cell signal direction.

    The flattening is snapshot-major: entry n * N_f + j is c_n * b_j, matching
    column-stacking of the (N_f, N_t) window block.
    """
    from .channel import delay_response, doppler_response

    velocity3 = np.array([state.velocity[0], state.velocity[1], 0.0])
    b = delay_response(anchor_position, state.position, baseband_freqs)
    c = doppler_response(anchor_position, state.position, velocity3, carrier_hz, times)
    return (c[:, None] * b[None, :]).ravel()


def concentrate_amplitude(y: np.ndarray, psi: np.ndarray) -> complex:
    """Closed-form ML estimate of the complex gain: psi^H y / ||psi||^2."""
    denom = float(np.real(np.vdot(psi, psi)))
    if denom == 0.0:
        raise ValueError("response vector must be non-zero")
    return complex(np.vdot(psi, y) / denom)


def residual_energy(y: np.ndarray, psi: np.ndarray) -> float:
    """Energy of y outside span{psi}: ||y||^2 - |psi^H y|^2 / ||psi||^2.

    Equals ||y - alpha_hat * psi||^2 for the concentrated gain; clamped at 0
    against floating-point cancellation.
    """
    denom = float(np.real(np.vdot(psi, psi)))
    if denom == 0.0:
        raise ValueError("response vector must be non-zero")
    total = float(np.real(np.vdot(y, y)))
    matched = float(np.abs(np.vdot(psi, y)) ** 2) / denom
    return max(total - matched, 0.0)


def _window_components(window: ObservationWindow, state: StateHypothesis):
    """Per-anchor (matched energy, total energy, amplitude) triples."""
    num = window.num_anchors
    matched = np.empty(num)
    total = np.empty(num)
    amps = np.empty(num, dtype=np.complex128)
    norm2 = float(window.num_subcarriers * window.num_snapshots)
    for m in range(num):
        psi = delay_doppler_response(
            state,
            window.anchor_positions[m],
            window.baseband_freqs,
            window.carrier_hz,
            window.times,
        )
        y = window.snapshots[m].astype(np.complex128).ravel(order="F")
        inner = np.vdot(psi, y)
        matched[m] = float(np.abs(inner) ** 2) / norm2
        total[m] = float(np.real(np.vdot(y, y)))
        amps[m] = inner / norm2
    return matched, total, amps


def profile_log_likelihood(
    window: ObservationWindow, state: StateHypothesis
) -> LikelihoodResult:
    """Reference (unbatched) profile log-likelihood of a window at a state.

    Intended as the ground truth for testing and for one-off evaluation; the
    tracker uses :class:`WindowEvaluator` for particle batches.
    """
    matched, total, amps = _window_components(window, state)
    residuals = np.maximum(total - matched, 0.0)
    sigma2 = state.noise_var
    cells = window.num_anchors * window.num_subcarriers * window.num_snapshots
    if sigma2 > 0.0 and np.isfinite(sigma2):
        log_lik = -float(residuals.sum()) / sigma2 - cells * np.log(np.pi * sigma2)
    else:
        log_lik = -np.inf
    nonzero = total > 0.0
    score = float(np.sum(matched[nonzero] / total[nonzero]))
    return LikelihoodResult(
        log_likelihood=log_lik, residuals=residuals, amplitudes=amps, score=score
    )


def matched_filter_score(window: ObservationWindow, state: StateHypothesis) -> float:
    """Normalized matched-filter score in [0, M]; see the module docstring."""
    return profile_log_likelihood(window, state).score


def _geometric_rows(
    first: np.ndarray, ratio: np.ndarray, count: int, dtype
) -> np.ndarray:
    """Rows first[i] * ratio[i]**j for j = 0..count-1, by repeated doubling.

    Both inputs are unit-modulus phasors, so powers stay conditioned; doubling
    needs O(log count) squarings of the ratio instead of count complex exps
    per row.
    """
    out = np.empty((first.shape[0], count), dtype=dtype)
    out[:, 0] = first
    step = ratio.astype(dtype)
    filled = 1
    while filled < count:
        chunk = min(filled, count - filled)
        np.multiply(
            out[:, :chunk], step[:, None], out=out[:, filled : filled + chunk]
        )
        if 2 * filled < count:
            step = step * step
        filled *= 2
    return out


class WindowEvaluator:
    """Batched profile-likelihood evaluation of one window over many states.

    Precomputes per-anchor window matrices once; each call factorizes the
    matched filter as psi^H y = c^H (B^H Y) where the conjugated delay matrix
    B^H is built by a doubling recurrence over the uniform subcarrier grid.
    Arithmetic runs in complex64 by default (precision="single"), which keeps
    phases to ~1e-5 radians, orders of magnitude below the phase sensitivity
    of the geometry; precision="double" is available for reference checks.

    Args:
        window: the observation window to evaluate against.
        precision: "single" or "double".
    """

    def __init__(self, window: ObservationWindow, precision: str = "single"):
        if precision == "single":
            cdtype = np.complex64
        elif precision == "double":
            cdtype = np.complex128
        else:
            raise ConfigError(f"unknown precision {precision!r}")
        self._cdtype = np.dtype(cdtype)
        self._anchors = window.anchor_positions.copy()
        self._carrier = float(window.carrier_hz)
        freqs = window.baseband_freqs
        self._freq0 = float(freqs[0])
        self._freq_step = _grid_step(freqs, "subcarrier grid") if freqs.size > 1 else 0.0
        times = window.times
        self._time0 = float(times[0])
        self._time_step = _grid_step(times, "window time grid") if times.size > 1 else 0.0
        self._num_sub = window.num_subcarriers
        self._num_snap = window.num_snapshots
        self._num_anchors = window.num_anchors
        self.cells = self._num_anchors * self._num_sub * self._num_snap
        self._blocks = [
            np.ascontiguousarray(window.snapshots[m].astype(cdtype))
            for m in range(self._num_anchors)
        ]
        # Window energies in float64 regardless of the working precision.
        self._total_energy = np.array(
            [
                float(np.sum(np.abs(window.snapshots[m].astype(np.complex128)) ** 2))
                for m in range(self._num_anchors)
            ]
        )

    @property
    def num_anchors(self) -> int:
        return self._num_anchors

    def matched_energies(
        self, positions: np.ndarray, velocities: np.ndarray
    ) -> np.ndarray:
        """(N, M) matched energies |psi_m^H y_m|^2 / ||psi_m||^2 per anchor.

        Args:
            positions: (N, 3) candidate positions.
            velocities: (N, 2) candidate planar velocities.
        """
        positions = np.asarray(positions, dtype=np.float64)
        velocities = np.asarray(velocities, dtype=np.float64)
        num = positions.shape[0]
        if positions.shape != (num, 3) or velocities.shape != (num, 2):
            raise ConfigError("positions must be (N, 3) and velocities (N, 2)")
        norm2 = float(self._num_sub * self._num_snap)
        out = np.empty((num, self._num_anchors))
        two_pi_over_c = 2.0 * np.pi / SPEED_OF_LIGHT
        for m in range(self._num_anchors):
            diff = self._anchors[m][None, :] - positions
            dists = np.linalg.norm(diff, axis=1)
            if dists.min() == 0.0:
                # A particle sitting exactly on an anchor carries no usable
                # geometry; nudge the distance so the phases stay finite.
                dists = np.maximum(dists, 1e-9)
            # Conjugated delay rows: exp(+i 2 pi f_j d / c) over the grid.
            theta = two_pi_over_c * dists
            first = np.exp(1j * (theta * self._freq0))
            ratio = np.exp(1j * (theta * self._freq_step))
            bh = _geometric_rows(first, ratio, self._num_sub, self._cdtype)
            z = bh @ self._blocks[m]  # (N, N_t)
            # Conjugated Doppler rows: exp(-i omega_r t_n). The velocity is
            # planar, so only the planar components of diff contribute.
            v_r = np.einsum("ij,ij->i", diff[:, :2], velocities) / dists
            omega = 2.0 * np.pi * (self._carrier / SPEED_OF_LIGHT) * v_r
            first_t = np.exp(-1j * (omega * self._time0))
            ratio_t = np.exp(-1j * (omega * self._time_step))
            ch = _geometric_rows(first_t, ratio_t, self._num_snap, self._cdtype)
            inner = np.einsum("ij,ij->i", ch, z)
            out[:, m] = (np.abs(inner.astype(np.complex128)) ** 2) / norm2
        return out

    def log_likelihood(
        self,
        positions: np.ndarray,
        velocities: np.ndarray,
        noise_vars: np.ndarray,
    ) -> np.ndarray:
        """(N,) profile log-likelihoods; non-finite evaluations map to -inf.

        States with non-positive noise variance also score -inf, so they can
        never carry posterior mass.
        """
        matched = self.matched_energies(positions, velocities)
        residual = np.maximum(self._total_energy[None, :] - matched, 0.0).sum(axis=1)
        noise_vars = np.asarray(noise_vars, dtype=np.float64)
        out = np.full(residual.shape, -np.inf)
        ok = np.isfinite(noise_vars) & (noise_vars > 0.0)
        out[ok] = -residual[ok] / noise_vars[ok] - self.cells * np.log(
            np.pi * noise_vars[ok]
        )
        out[~np.isfinite(out)] = -np.inf
        return out

    def matched_filter_score(
        self, positions: np.ndarray, velocities: np.ndarray
    ) -> np.ndarray:
        """(N,) normalized matched-filter scores in [0, M]."""
        matched = self.matched_energies(positions, velocities)
        nonzero = self._total_energy > 0.0
        score = (matched[:, nonzero] / self._total_energy[None, nonzero]).sum(axis=1)
        return np.where(np.isfinite(score), score, 0.0)
