"""Synthetic frequency-domain CSI for a single moving transmitter.

Each snapshot holds, per anchor, the channel transfer function sampled on a
uniform subcarrier grid. The dominant path is the direct one: a rank-one
outer product of a delay steering vector across subcarriers and a Doppler
progression across snapshots, scaled by a complex gain that absorbs path
loss, the carrier phase of the propagation delay, and the anchor's unknown
oscillator phase. Optional extras are additive specular scatterers and
per-anchor blockage intervals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SingularGeometryError
from .scenario import SPEED_OF_LIGHT, AnchorSet, GroundTruthTrack


def centered_frequency_grid(count: int, spacing_hz: float) -> np.ndarray:
    """Baseband subcarrier frequencies, symmetric around 0 Hz.

    f_j = (j - (count - 1) / 2) * spacing_hz for j in 0..count-1.
    """
    if count < 1:
        raise ConfigError("subcarrier count must be at least 1")
    if spacing_hz <= 0.0:
        raise ConfigError("subcarrier spacing must be positive")
    return (np.arange(count) - (count - 1) / 2.0) * spacing_hz


def delay_response(
    anchor_position: np.ndarray,
    agent_position: np.ndarray,
    baseband_freqs: np.ndarray,
) -> np.ndarray:
    """Unit-modulus subcarrier response of the direct-path delay.

    b_j = exp(-i * 2*pi * f_j * d / c) with d the anchor-agent distance.
    """
    anchor_position = np.asarray(anchor_position, dtype=np.float64)
    agent_position = np.asarray(agent_position, dtype=np.float64)
    dist = float(np.linalg.norm(anchor_position - agent_position))
    if dist == 0.0:
        raise SingularGeometryError("agent position coincides with an anchor")
    freqs = np.asarray(baseband_freqs, dtype=np.float64)
    return np.exp(-2j * np.pi * freqs * (dist / SPEED_OF_LIGHT))


def doppler_response(
    anchor_position: np.ndarray,
    agent_position: np.ndarray,
    agent_velocity: np.ndarray,
    carrier_hz: float,
    times: np.ndarray,
) -> np.ndarray:
    """Unit-modulus snapshot response of the direct-path Doppler shift.

    c_n = exp(+i * 2*pi * (f_c / c) * v_r * t_n) where v_r is the radial
    velocity towards the anchor (positive when approaching, which raises the
    received frequency).
    """
    from .scenario import radial_velocity

    v_r = radial_velocity(anchor_position, agent_position, agent_velocity)
    times = np.asarray(times, dtype=np.float64)
    return np.exp(2j * np.pi * (carrier_hz / SPEED_OF_LIGHT) * v_r * times)


def noise_free_block(
    anchor_position: np.ndarray,
    agent_position: np.ndarray,
    agent_velocity: np.ndarray,
    amplitude: complex,
    baseband_freqs: np.ndarray,
    carrier_hz: float,
    times: np.ndarray,
) -> np.ndarray:
    """Rank-one window block amplitude * outer(b, c), shape (N_f, N_t).

    Linearizes the agent motion around a reference position: the delay
    steering vector is held at agent_position while the Doppler progression
    runs over the given times.
    """
    b = delay_response(anchor_position, agent_position, baseband_freqs)
    c = doppler_response(anchor_position, agent_position, agent_velocity, carrier_hz, times)
    return amplitude * np.outer(b, c)


@dataclass
class AmplitudeModel:
    """Direct-path complex gain model.

    mode "unit" keeps |alpha| = 1 for every link; "free_space" applies the
    reference_distance_m / distance falloff. With carrier_phase enabled the
    gain also carries exp(-i * 2*pi * f_c * d / c), the carrier rotation of
    the propagation delay, which the tracker never relies on.
    """

    mode: str = "unit"
    carrier_phase: bool = True
    reference_distance_m: float = 1.0

    def __post_init__(self):
        if self.mode not in ("unit", "free_space"):
            raise ConfigError(f"unknown amplitude model mode {self.mode!r}")
        if self.reference_distance_m <= 0.0:
            raise ConfigError("reference_distance_m must be positive")

    def magnitude(self, distance: np.ndarray) -> np.ndarray:
        distance = np.asarray(distance, dtype=np.float64)
        if self.mode == "unit":
            return np.ones_like(distance)
        return self.reference_distance_m / distance


@dataclass
class Blockage:
    """Attenuation of one anchor's link over a closed snapshot interval."""

    anchor: int
    start_step: int
    end_step: int
    attenuation_db: float

    def __post_init__(self):
        if self.anchor < 0:
            raise ConfigError("blockage anchor index must be non-negative")
        if self.end_step < self.start_step:
            raise ConfigError("blockage interval must satisfy end_step >= start_step")
        if self.attenuation_db < 0.0:
            raise ConfigError("blockage attenuation_db must be non-negative")


@dataclass
class Scatterer:
    """Static specular reflector adding one extra path per anchor."""

    position: np.ndarray
    gain: complex

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).ravel()
        if self.position.shape != (3,):
            raise ConfigError("scatterer position must be a 3-vector")
        self.gain = complex(self.gain)


@dataclass
class ImpairmentSchedule:
    """Optional channel impairments applied during synthesis."""

    blockages: list[Blockage] = field(default_factory=list)
    scatterers: list[Scatterer] = field(default_factory=list)

    def attenuation_table(self, num_steps: int, num_anchors: int) -> np.ndarray:
        """(K, M) linear amplitude factors; 1.0 where no blockage is active."""
        table = np.ones((num_steps, num_anchors))
        for b in self.blockages:
            if b.anchor >= num_anchors:
                raise ConfigError(
                    f"blockage anchor index {b.anchor} out of range for {num_anchors} anchors"
                )
            lo = max(b.start_step, 0)
            hi = min(b.end_step, num_steps - 1)
            if lo <= hi:
                table[lo : hi + 1, b.anchor] *= 10.0 ** (-b.attenuation_db / 20.0)
        return table


@dataclass
class CsiDataset:
    """A complete synthetic or recorded CSI dataset.

    Args:
        carrier_hz: RF carrier frequency.
        baseband_freqs: (N_f,) subcarrier frequencies relative to the carrier.
        dt_s: snapshot period.
        anchor_positions: (M, 3) anchor positions in meters.
        snapshots: (K, M, N_f) complex CSI, snapshot-major.
        ground_truth: optional reference trajectory sampled at the snapshots.
    """

    carrier_hz: float
    baseband_freqs: np.ndarray
    dt_s: float
    anchor_positions: np.ndarray
    snapshots: np.ndarray
    ground_truth: GroundTruthTrack | None = None

    def __post_init__(self):
        self.baseband_freqs = np.asarray(self.baseband_freqs, dtype=np.float64).ravel()
        self.anchor_positions = np.asarray(self.anchor_positions, dtype=np.float64)
        spacing = np.diff(self.baseband_freqs)
        if self.baseband_freqs.size < 1:
            raise ConfigError("dataset needs at least one subcarrier")
        if spacing.size and (
            spacing.min() <= 0.0 or np.max(np.abs(spacing - spacing[0])) > 1e-6
        ):
            raise ConfigError("subcarrier grid must be uniformly increasing")
        if self.dt_s <= 0.0:
            raise ConfigError("dt_s must be positive")
        k, m, n_f = self.snapshots.shape
        if self.anchor_positions.shape != (m, 3):
            raise ConfigError("anchor_positions must have shape (M, 3)")
        if n_f != self.baseband_freqs.size:
            raise ConfigError("snapshot subcarrier axis does not match the frequency grid")
        if self.ground_truth is not None:
            if self.ground_truth.num_steps != k:
                raise ConfigError("ground truth length does not match the snapshot count")
            if k >= 2 and abs(self.ground_truth.dt - self.dt_s) > 1e-12:
                raise ConfigError("ground truth time step does not match dt_s")

    @property
    def num_steps(self) -> int:
        return self.snapshots.shape[0]

    @property
    def num_anchors(self) -> int:
        return self.snapshots.shape[1]

    @property
    def num_subcarriers(self) -> int:
        return self.snapshots.shape[2]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.num_steps) * self.dt_s


def _noise_stream(seed: int, step: int, anchor: int) -> np.random.Generator:
    # Counter-style keying: every (snapshot, anchor) cell owns a substream, so
    # the realization is independent of evaluation order and worker count.
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(step, anchor))
    return np.random.Generator(np.random.Philox(ss))


def synthesize_csi(
    scenario_cfg,
    track: GroundTruthTrack,
    anchors: AnchorSet,
    amplitude_model: AmplitudeModel | None = None,
    impairments: ImpairmentSchedule | None = None,
    snr_db: float = 15.0,
    seed: int | None = None,
    dtype=np.complex64,
) -> CsiDataset:
    """Render the full (K, M, N_f) CSI array for a scenario.

    The per-link gain is amplitude * exp(i * phase_offset_m) * blockage, the
    direct path is the exact per-snapshot delay steering vector (Doppler
    arises from the motion of the true positions, it is not injected
    separately), and the noise is circular complex Gaussian with variance
    sigma^2 per entry. sigma^2 is set from the mean unblocked direct-path
    power: snr_db = 10*log10(mean |alpha|^2 / sigma^2). Use snr_db=inf for a
    noise-free dataset.

    Args:
        scenario_cfg: a :class:`~ddtrack.scenario.ScenarioConfig`.
        track: ground-truth trajectory; one snapshot per sample.
        anchors: anchor positions and phase offsets.
        amplitude_model: direct-path gain model; defaults to unit gain.
        impairments: optional blockages and scatterers.
        snr_db: per-subcarrier SNR of unblocked links.
        seed: noise seed; defaults to scenario_cfg.seed.
        dtype: complex dtype of the stored snapshots.
    """
    if amplitude_model is None:
        amplitude_model = AmplitudeModel()
    if impairments is None:
        impairments = ImpairmentSchedule()
    if seed is None:
        seed = scenario_cfg.seed
    if track.num_steps >= 2 and abs(track.dt - scenario_cfg.dt_s) > 1e-12:
        raise ConfigError("trajectory time step does not match scenario dt_s")
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.complex64), np.dtype(np.complex128)):
        raise ConfigError("snapshot dtype must be complex64 or complex128")

    freqs = centered_frequency_grid(
        scenario_cfg.subcarrier_count, scenario_cfg.subcarrier_spacing_hz
    )
    carrier = float(scenario_cfg.carrier_hz)
    num_steps = track.num_steps
    num_anchors = anchors.count
    num_sub = freqs.size

    # (K, M) anchor-agent distances and per-link complex gains.
    diffs = anchors.positions[None, :, :] - track.positions[:, None, :]
    dists = np.linalg.norm(diffs, axis=2)
    if dists.min() == 0.0:
        raise SingularGeometryError("trajectory passes through an anchor position")
    att = impairments.attenuation_table(num_steps, num_anchors)
    gains = amplitude_model.magnitude(dists).astype(np.complex128)
    if amplitude_model.carrier_phase:
        gains *= np.exp(-2j * np.pi * (carrier / SPEED_OF_LIGHT) * dists)
    gains *= np.exp(1j * anchors.phase_offsets)[None, :]
    gains *= att

    unblocked = att == 1.0
    if not np.any(unblocked):
        raise ConfigError("every link is blocked; SNR reference power is undefined")
    mean_power = float(np.mean(np.abs(gains[unblocked]) ** 2))
    if np.isinf(snr_db):
        sigma2 = 0.0
    else:
        sigma2 = mean_power / 10.0 ** (snr_db / 10.0)

    phase_scale = -2.0 * np.pi / SPEED_OF_LIGHT
    out = np.empty((num_steps, num_anchors, num_sub), dtype=dtype)
    noise_scale = np.sqrt(sigma2 / 2.0)
    for m in range(num_anchors):
        # Direct path: exact delay phases per snapshot, scaled by the gain.
        block = gains[:, m, None] * np.exp(
            1j * (phase_scale * np.outer(dists[:, m], freqs))
        )
        for s in impairments.scatterers:
            d_extra = np.linalg.norm(track.positions - s.position[None, :], axis=1)
            d_extra += np.linalg.norm(anchors.positions[m] - s.position)
            if amplitude_model.carrier_phase:
                total = (carrier + freqs)[None, :] * d_extra[:, None]
            else:
                total = freqs[None, :] * d_extra[:, None]
            block += (
                s.gain
                * np.exp(1j * anchors.phase_offsets[m])
                * att[:, m, None]
                * np.exp(1j * phase_scale * total)
            )
        if sigma2 > 0.0:
            for k in range(num_steps):
                draw = _noise_stream(seed, k, m).standard_normal((2, num_sub))
                block[k] += noise_scale * (draw[0] + 1j * draw[1])
        out[:, m, :] = block.astype(dtype)

    return CsiDataset(
        carrier_hz=carrier,
        baseband_freqs=freqs,
        dt_s=scenario_cfg.dt_s,
        anchor_positions=anchors.positions.copy(),
        snapshots=out,
        ground_truth=track,
    )
