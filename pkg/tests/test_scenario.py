"""Geometry, layouts, trajectories, and radial velocity."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddtrack.errors import ConfigError, InvalidLayoutError, SingularGeometryError
from ddtrack.scenario import (
    SPEED_OF_LIGHT,
    AnchorSet,
    GroundTruthTrack,
    ScenarioConfig,
    build_anchor_set,
    generate_trajectory,
    radial_velocity,
    two_wall_layout,
)


class TestTwoWallLayout:
    def test_positions(self):
        positions = two_wall_layout(30.0, 12.0, 4, 4.0)
        assert positions.shape == (8, 3)
        np.testing.assert_allclose(positions[:4, 0], [3.75, 11.25, 18.75, 26.25])
        np.testing.assert_allclose(positions[4:, 0], [3.75, 11.25, 18.75, 26.25])
        assert np.all(positions[:4, 1] == 0.0)
        assert np.all(positions[4:, 1] == 12.0)
        assert np.all(positions[:, 2] == 4.0)

    def test_rejects_bad_counts(self):
        with pytest.raises(ConfigError):
            two_wall_layout(30.0, 12.0, 0, 4.0)


class TestAnchorSet:
    def test_count(self):
        anchors = AnchorSet(
            positions=np.array([[0.0, 0.0, 3.0], [5.0, 0.0, 3.0]]),
            phase_offsets=np.array([0.0, 1.0]),
        )
        assert anchors.count == 2

    def test_rejects_duplicate_positions(self):
        with pytest.raises(InvalidLayoutError):
            AnchorSet(
                positions=np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]),
                phase_offsets=np.zeros(2),
            )

    def test_rejects_phase_outside_range(self):
        with pytest.raises(InvalidLayoutError):
            AnchorSet(
                positions=np.array([[0.0, 0.0, 3.0]]),
                phase_offsets=np.array([2.0 * np.pi]),
            )

    def test_rejects_wrong_shapes(self):
        with pytest.raises(InvalidLayoutError):
            AnchorSet(positions=np.zeros((2, 2)), phase_offsets=np.zeros(2))
        with pytest.raises(InvalidLayoutError):
            AnchorSet(
                positions=np.array([[0.0, 0.0, 3.0]]), phase_offsets=np.zeros(2)
            )

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidLayoutError):
            AnchorSet(
                positions=np.array([[np.nan, 0.0, 3.0]]), phase_offsets=np.zeros(1)
            )


class TestBuildAnchorSet:
    def test_two_wall(self):
        anchors = build_anchor_set(
            dict(
                type="two_wall",
                hall_length_m=30.0,
                hall_width_m=12.0,
                anchors_per_wall=4,
                height_m=4.0,
            )
        )
        assert anchors.count == 8
        assert np.all(anchors.phase_offsets == 0.0)

    def test_explicit_with_phases(self):
        anchors = build_anchor_set(
            dict(
                type="explicit",
                positions=[[0.0, 0.0, 3.0], [5.0, 0.0, 3.0]],
                phase_offsets_rad=[0.5, 1.5],
            )
        )
        np.testing.assert_array_equal(anchors.phase_offsets, [0.5, 1.5])

    def test_random_phases_are_deterministic(self):
        layout = dict(
            type="two_wall",
            hall_length_m=12.0,
            hall_width_m=8.0,
            anchors_per_wall=2,
            height_m=3.0,
        )
        a = build_anchor_set(layout, np.random.default_rng(7))
        b = build_anchor_set(layout, np.random.default_rng(7))
        np.testing.assert_array_equal(a.phase_offsets, b.phase_offsets)
        assert np.all(a.phase_offsets >= 0.0) and np.all(a.phase_offsets < 2 * np.pi)
        assert np.any(a.phase_offsets != 0.0)

    def test_unknown_type(self):
        with pytest.raises(ConfigError):
            build_anchor_set(dict(type="ring"))

    def test_missing_key(self):
        with pytest.raises(ConfigError):
            build_anchor_set(dict(type="two_wall", hall_length_m=30.0))


class TestScenarioConfig:
    def test_carrier_must_exceed_occupied_band(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(
                carrier_hz=30e6,
                subcarrier_count=449,
                subcarrier_spacing_hz=78125.0,
                dt_s=0.005,
            )

    def test_full_scale_band_fits(self):
        cfg = ScenarioConfig(
            carrier_hz=3.75e9,
            subcarrier_count=449,
            subcarrier_spacing_hz=78125.0,
            dt_s=0.005,
        )
        assert cfg.subcarrier_count * cfg.subcarrier_spacing_hz == 35078125.0


class TestGroundTruthTrack:
    def test_single_sample_allowed(self):
        track = GroundTruthTrack(
            times=np.array([0.0]),
            positions=np.zeros((1, 3)),
            velocities=np.zeros((1, 3)),
        )
        assert track.num_steps == 1
        with pytest.raises(ConfigError):
            track.dt

    def test_rejects_non_uniform_grid(self):
        with pytest.raises(ConfigError):
            GroundTruthTrack(
                times=np.array([0.0, 1.0, 2.5]),
                positions=np.zeros((3, 3)),
                velocities=np.zeros((3, 3)),
            )

    def test_rejects_vertical_velocity(self):
        with pytest.raises(ConfigError):
            GroundTruthTrack(
                times=np.array([0.0, 1.0]),
                positions=np.zeros((2, 3)),
                velocities=np.array([[0.0, 0.0, 0.1], [0.0, 0.0, 0.1]]),
            )


class TestGenerateTrajectory:
    def test_line_basics(self):
        desc = dict(
            type="line", start_m=[10.0, 6.0, 1.35], end_m=[20.0, 6.0, 1.35], speed_mps=1.0
        )
        track = generate_trajectory(desc, 0.005)
        assert track.num_steps == 2001
        np.testing.assert_allclose(track.positions[0], [10.0, 6.0, 1.35])
        np.testing.assert_allclose(track.positions[-1], [20.0, 6.0, 1.35], atol=1e-9)
        np.testing.assert_allclose(track.velocities, np.tile([1.0, 0.0, 0.0], (2001, 1)))
        assert track.dt == 0.005

    def test_line_speed_cap(self):
        desc = dict(
            type="line", start_m=[0.0, 0.0, 1.0], end_m=[5.0, 0.0, 1.0], speed_mps=1.2
        )
        with pytest.raises(ConfigError):
            generate_trajectory(desc, 0.005, v_max=1.0)
        generate_trajectory(desc, 0.005, v_max=1.2)

    def test_line_must_be_horizontal(self):
        desc = dict(
            type="line", start_m=[0.0, 0.0, 1.0], end_m=[5.0, 0.0, 2.0], speed_mps=1.0
        )
        with pytest.raises(ConfigError):
            generate_trajectory(desc, 0.005)

    def test_circle_radius_and_speed(self):
        desc = dict(
            type="circle",
            center_m=[5.0, 5.0, 1.0],
            radius_m=2.0,
            angular_speed_rad_s=0.25,
            duration_s=10.0,
        )
        track = generate_trajectory(desc, 0.01)
        radii = np.linalg.norm(track.positions[:, :2] - [5.0, 5.0], axis=1)
        np.testing.assert_allclose(radii, 2.0, rtol=1e-12)
        speeds = np.linalg.norm(track.velocities, axis=1)
        np.testing.assert_allclose(speeds, 0.5, rtol=1e-12)

    def test_waypoints_corner_takes_outgoing_segment(self):
        desc = dict(
            type="waypoints",
            points_m=[[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 1.0]],
            speed_mps=1.0,
        )
        track = generate_trajectory(desc, 0.25)
        assert track.num_steps == 9
        corner = 4  # arc length exactly 1.0 at the vertex
        np.testing.assert_allclose(track.positions[corner], [1.0, 0.0, 1.0])
        np.testing.assert_allclose(track.velocities[corner], [0.0, 1.0, 0.0])
        np.testing.assert_allclose(track.positions[-1], [1.0, 1.0, 1.0])

    def test_unknown_type_and_missing_key(self):
        with pytest.raises(ConfigError):
            generate_trajectory(dict(type="spiral"), 0.005)
        with pytest.raises(ConfigError):
            generate_trajectory(dict(type="line", start_m=[0, 0, 0]), 0.005)


class TestRadialVelocity:
    def test_receding_is_negative(self):
        v_r = radial_velocity([0.0, 0.0, 0.0], [3.0, 4.0, 0.0], [1.0, 0.0, 0.0])
        assert v_r == -0.6

    def test_heading_straight_at_anchor_gives_speed(self):
        v_r = radial_velocity([0.0, 0.0, 0.0], [3.0, 4.0, 0.0], [-0.6, -0.8, 0.0])
        np.testing.assert_allclose(v_r, 1.0, rtol=1e-15)

    def test_on_anchor_raises(self):
        with pytest.raises(SingularGeometryError):
            radial_velocity([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 0.0, 0.0])

    @given(
        st.lists(st.floats(-50.0, 50.0), min_size=3, max_size=3),
        st.lists(st.floats(-50.0, 50.0), min_size=3, max_size=3),
        st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3),
    )
    @settings(max_examples=200, deadline=None)
    def test_bounded_by_speed(self, anchor, agent, velocity):
        anchor = np.asarray(anchor)
        agent = np.asarray(agent)
        velocity = np.asarray(velocity)
        if np.linalg.norm(anchor - agent) < 1e-6:
            return
        v_r = radial_velocity(anchor, agent, velocity)
        # math.hypot rescales internally, so the speed survives subnormal
        # components that would underflow in a squared-sum norm.
        speed = math.hypot(*velocity)
        assert abs(v_r) <= speed * (1.0 + 1e-9) + 1e-300

    @given(st.lists(st.floats(-100.0, 100.0), min_size=3, max_size=3))
    @settings(max_examples=100, deadline=None)
    def test_translation_invariance(self, offset):
        offset = np.asarray(offset)
        anchor = np.array([1.0, -2.0, 3.0])
        agent = np.array([4.0, 1.0, 1.5])
        velocity = np.array([0.7, -0.3, 0.0])
        base = radial_velocity(anchor, agent, velocity)
        shifted = radial_velocity(anchor + offset, agent + offset, velocity)
        np.testing.assert_allclose(shifted, base, rtol=0, atol=1e-9)


def test_speed_of_light_value():
    assert SPEED_OF_LIGHT == 299792458.0
