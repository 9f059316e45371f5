"""Scenario geometry: anchor layouts and ground-truth agent trajectories.

Coordinates are right-handed Cartesian in meters, z up. Anchors are fixed
receivers at known positions; the agent is a single moving transmitter whose
velocity is horizontal (constant transmit height).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidLayoutError, SingularGeometryError

SPEED_OF_LIGHT = 299792458.0  # m/s, exact

_TIME_GRID_TOL = 1e-12  # s, allowed jitter of the sample clock


@dataclass
class AnchorSet:
    """Fixed receive anchors with known positions and per-anchor phase offsets.

    The phase offsets model free-running downconversion oscillators: they are
    arbitrary but constant over a recording, and the tracker never learns them.

    Args:
        positions: (M, 3) anchor positions in meters.
        phase_offsets: (M,) phases in [0, 2*pi) radians.
    """

    positions: np.ndarray
    phase_offsets: np.ndarray

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        self.phase_offsets = np.asarray(self.phase_offsets, dtype=np.float64).ravel()
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise InvalidLayoutError("anchor positions must have shape (M, 3)")
        m = self.positions.shape[0]
        if m < 1:
            raise InvalidLayoutError("anchor set must contain at least one anchor")
        if not np.all(np.isfinite(self.positions)):
            raise InvalidLayoutError("anchor positions must be finite")
        if self.phase_offsets.shape != (m,):
            raise InvalidLayoutError("need exactly one phase offset per anchor")
        if not np.all(np.isfinite(self.phase_offsets)):
            raise InvalidLayoutError("anchor phase offsets must be finite")
        if np.any(self.phase_offsets < 0.0) or np.any(self.phase_offsets >= 2.0 * np.pi):
            raise InvalidLayoutError("anchor phase offsets must lie in [0, 2*pi)")
        # Pairwise-distinct positions; M is small so the quadratic check is fine.
        for i in range(m):
            d = np.linalg.norm(self.positions[i + 1 :] - self.positions[i], axis=1)
            if d.size and d.min() == 0.0:
                raise InvalidLayoutError("anchor positions must be pairwise distinct")

    @property
    def count(self) -> int:
        return self.positions.shape[0]


@dataclass
class GroundTruthTrack:
    """Sampled agent trajectory on a uniform time grid.

    Args:
        times: (K,) sample instants in seconds, uniformly spaced.
        positions: (K, 3) agent positions in meters.
        velocities: (K, 3) agent velocities in m/s; the z component is zero.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64).ravel()
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.velocities = np.asarray(self.velocities, dtype=np.float64)
        k = self.times.shape[0]
        if k < 1:
            raise ConfigError("a trajectory needs at least one sample")
        if self.positions.shape != (k, 3) or self.velocities.shape != (k, 3):
            raise ConfigError("positions and velocities must have shape (K, 3)")
        if k >= 2:
            steps = np.diff(self.times)
            if np.max(np.abs(steps - steps[0])) > _TIME_GRID_TOL:
                raise ConfigError("trajectory time grid must be uniform")
            if steps[0] <= 0.0:
                raise ConfigError("trajectory time step must be positive")
        if np.any(self.velocities[:, 2] != 0.0):
            raise ConfigError("agent velocity must be horizontal (vz = 0)")

    @property
    def num_steps(self) -> int:
        return self.times.shape[0]

    @property
    def dt(self) -> float:
        if self.times.shape[0] < 2:
            raise ConfigError("time step undefined for a single-sample trajectory")
        return float(self.times[1] - self.times[0])


@dataclass
class ScenarioConfig:
    """Full description of one synthetic recording scenario.

    Args:
        carrier_hz: RF carrier frequency.
        subcarrier_count: number of evaluated subcarriers N_f.
        subcarrier_spacing_hz: spacing between adjacent subcarriers.
        dt_s: CSI snapshot period.
        anchors: anchor layout description, see :func:`build_anchor_set`.
        trajectory: trajectory description, see :func:`generate_trajectory`.
        seed: base seed for anchor phases and measurement noise.
        v_max_mps: speed cap enforced on generated trajectories.
    """

    carrier_hz: float
    subcarrier_count: int
    subcarrier_spacing_hz: float
    dt_s: float
    anchors: dict = field(default_factory=dict)
    trajectory: dict = field(default_factory=dict)
    seed: int = 0
    v_max_mps: float = 1.0

    def __post_init__(self):
        if self.subcarrier_count < 1:
            raise ConfigError("subcarrier_count must be at least 1")
        if self.subcarrier_spacing_hz <= 0.0:
            raise ConfigError("subcarrier_spacing_hz must be positive")
        if self.dt_s <= 0.0:
            raise ConfigError("dt_s must be positive")
        if self.v_max_mps <= 0.0:
            raise ConfigError("v_max_mps must be positive")
        occupied = self.subcarrier_count * self.subcarrier_spacing_hz
        if self.carrier_hz <= occupied:
            raise ConfigError(
                "carrier_hz must exceed the occupied bandwidth "
                f"({occupied:.6g} Hz)"
            )


def two_wall_layout(
    hall_length: float,
    hall_width: float,
    anchors_per_wall: int,
    height: float,
) -> np.ndarray:
    """Anchor positions along the two long walls of a rectangular hall.

    Anchors sit at x = (i + 0.5) * hall_length / n for i in 0..n-1, first the
    wall at y = 0, then the wall at y = hall_width, all at the given height.

    Returns:
        (2 * anchors_per_wall, 3) position array.
    """
    if anchors_per_wall < 1:
        raise InvalidLayoutError("anchors_per_wall must be at least 1")
    if hall_length <= 0.0 or hall_width <= 0.0:
        raise InvalidLayoutError("hall dimensions must be positive")
    x = (np.arange(anchors_per_wall) + 0.5) * hall_length / anchors_per_wall
    near = np.column_stack([x, np.zeros_like(x), np.full_like(x, height)])
    far = np.column_stack([x, np.full_like(x, hall_width), np.full_like(x, height)])
    return np.vstack([near, far])


def build_anchor_set(layout: dict, rng: np.random.Generator | None = None) -> AnchorSet:
    """Construct an :class:`AnchorSet` from a layout description.

    Two layout kinds are supported:

    * ``{"type": "two_wall", "hall_length_m": ..., "hall_width_m": ...,
      "anchors_per_wall": ..., "height_m": ...}``
    * ``{"type": "explicit", "positions": [[x, y, z], ...]}``

    Phase offsets come from ``layout["phase_offsets_rad"]`` when present,
    otherwise they are drawn uniformly from [0, 2*pi) using ``rng``; without
    an rng they default to zero.
    """
    if not isinstance(layout, dict) or "type" not in layout:
        raise ConfigError("anchor layout needs a `type` key")
    kind = layout["type"]
    if kind == "two_wall":
        try:
            positions = two_wall_layout(
                float(layout["hall_length_m"]),
                float(layout["hall_width_m"]),
                int(layout["anchors_per_wall"]),
                float(layout["height_m"]),
            )
        except KeyError as exc:
            raise ConfigError(f"two_wall layout is missing key {exc}") from exc
    elif kind == "explicit":
        if "positions" not in layout:
            raise ConfigError("explicit layout needs a `positions` key")
        positions = np.asarray(layout["positions"], dtype=np.float64)
    else:
        raise ConfigError(f"unknown anchor layout type {kind!r}")

    m = positions.shape[0] if positions.ndim == 2 else 0
    if "phase_offsets_rad" in layout:
        phases = np.asarray(layout["phase_offsets_rad"], dtype=np.float64)
    elif rng is not None:
        phases = rng.uniform(0.0, 2.0 * np.pi, size=m)
    else:
        phases = np.zeros(m)
    return AnchorSet(positions=positions, phase_offsets=phases)


def _sample_count(duration: float, dt: float) -> int:
    # K - 1 full steps; tolerate tiny float error in duration / dt.
    n = int(np.floor(duration / dt + 1e-9))
    if n < 1:
        raise ConfigError("trajectory duration must cover at least one time step")
    return n + 1


def _line_track(desc: dict, dt: float) -> GroundTruthTrack:
    start = np.asarray(desc["start_m"], dtype=np.float64)
    end = np.asarray(desc["end_m"], dtype=np.float64)
    speed = float(desc["speed_mps"])
    if start.shape != (3,) or end.shape != (3,):
        raise ConfigError("line trajectory needs 3-vector start_m and end_m")
    if speed <= 0.0:
        raise ConfigError("line trajectory speed must be positive")
    if start[2] != end[2]:
        raise ConfigError("line trajectory must be horizontal (equal z at both ends)")
    span = end - start
    length = float(np.linalg.norm(span))
    if length == 0.0:
        raise ConfigError("line trajectory endpoints must differ")
    direction = span / length
    times = np.arange(_sample_count(length / speed, dt)) * dt
    positions = start[None, :] + np.outer(times * speed, direction)
    velocities = np.tile(speed * direction, (times.shape[0], 1))
    return GroundTruthTrack(times=times, positions=positions, velocities=velocities)


def _circle_track(desc: dict, dt: float) -> GroundTruthTrack:
    center = np.asarray(desc["center_m"], dtype=np.float64)
    radius = float(desc["radius_m"])
    omega = float(desc["angular_speed_rad_s"])
    duration = float(desc["duration_s"])
    phase0 = float(desc.get("phase_rad", 0.0))
    if center.shape != (3,):
        raise ConfigError("circle trajectory needs a 3-vector center_m")
    if radius <= 0.0 or omega == 0.0 or duration <= 0.0:
        raise ConfigError("circle trajectory needs radius_m > 0, angular_speed_rad_s != 0, duration_s > 0")
    times = np.arange(_sample_count(duration, dt)) * dt
    phase = omega * times + phase0
    positions = center[None, :] + radius * np.column_stack(
        [np.cos(phase), np.sin(phase), np.zeros_like(phase)]
    )
    velocities = radius * omega * np.column_stack(
        [-np.sin(phase), np.cos(phase), np.zeros_like(phase)]
    )
    return GroundTruthTrack(times=times, positions=positions, velocities=velocities)


def _waypoint_track(desc: dict, dt: float) -> GroundTruthTrack:
    points = np.asarray(desc["points_m"], dtype=np.float64)
    speed = float(desc["speed_mps"])
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] < 2:
        raise ConfigError("waypoint trajectory needs at least two 3-vector points_m")
    if speed <= 0.0:
        raise ConfigError("waypoint trajectory speed must be positive")
    if np.any(points[:, 2] != points[0, 2]):
        raise ConfigError("waypoint trajectory must be horizontal (equal z everywhere)")
    seg = np.diff(points, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    if np.any(seg_len == 0.0):
        raise ConfigError("waypoint trajectory has a zero-length segment")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    times = np.arange(_sample_count(cum[-1] / speed, dt)) * dt
    arc = np.minimum(times * speed, cum[-1])
    # Segment owning each arc length; samples landing exactly on a vertex take
    # the outgoing segment, the final sample takes the last one.
    idx = np.minimum(np.searchsorted(cum, arc, side="right") - 1, seg_len.shape[0] - 1)
    frac = (arc - cum[idx]) / seg_len[idx]
    positions = points[idx] + frac[:, None] * seg[idx]
    velocities = speed * seg[idx] / seg_len[idx, None]
    return GroundTruthTrack(times=times, positions=positions, velocities=velocities)


def generate_trajectory(
    description: dict,
    dt: float,
    rng: np.random.Generator | None = None,
    v_max: float = 1.0,
) -> GroundTruthTrack:
    """Generate a ground-truth trajectory from a description dict.

    Supported ``description["type"]`` values: ``line`` (constant-velocity segment),
    ``circle`` (constant angular rate), ``waypoints`` (piecewise-linear path
    at constant speed). ``rng`` is accepted for interface symmetry; the
    built-in curve types are deterministic and do not consume it.

    Raises:
        ConfigError: when the description is malformed or the speed exceeds v_max.
    """
    if dt <= 0.0:
        raise ConfigError("trajectory time step must be positive")
    if not isinstance(description, dict) or "type" not in description:
        raise ConfigError("trajectory description needs a `type` key")
    kind = description["type"]
    try:
        if kind == "line":
            track = _line_track(description, dt)
        elif kind == "circle":
            track = _circle_track(description, dt)
        elif kind == "waypoints":
            track = _waypoint_track(description, dt)
        else:
            raise ConfigError(f"unknown trajectory type {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"trajectory description is missing key {exc}") from exc
    speeds = np.linalg.norm(track.velocities, axis=1)
    if speeds.max() > v_max * (1.0 + 1e-12):
        raise ConfigError(
            f"trajectory speed {speeds.max():.6g} m/s exceeds the cap {v_max:.6g} m/s"
        )
    return track


def radial_velocity(
    anchor_position: np.ndarray,
    agent_position: np.ndarray,
    agent_velocity: np.ndarray,
) -> float:
    """Range rate of the agent towards an anchor, positive when approaching.

    Projects the agent velocity onto the unit vector from agent to anchor.

    Raises:
        SingularGeometryError: when the agent sits exactly on the anchor.
    """
    anchor_position = np.asarray(anchor_position, dtype=np.float64)
    agent_position = np.asarray(agent_position, dtype=np.float64)
    agent_velocity = np.asarray(agent_velocity, dtype=np.float64)
    diff = anchor_position - agent_position
    dist = float(np.linalg.norm(diff))
    if dist == 0.0:
        raise SingularGeometryError("agent position coincides with an anchor")
    return float(diff @ agent_velocity) / dist
