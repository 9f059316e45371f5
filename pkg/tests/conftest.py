"""Shared builders for small synthetic scenes used across the test modules."""

import numpy as np
import pytest

from ddtrack.channel import synthesize_csi
from ddtrack.scenario import (
    AnchorSet,
    ScenarioConfig,
    build_anchor_set,
    generate_trajectory,
)


def tiny_scenario(subcarriers: int = 8, seed: int = 3) -> ScenarioConfig:
    """A 12 m x 8 m hall with 4 anchors and a short straight walk."""
    return ScenarioConfig(
        carrier_hz=3.75e9,
        subcarrier_count=subcarriers,
        subcarrier_spacing_hz=546875.0,
        dt_s=0.005,
        anchors=dict(
            type="two_wall",
            hall_length_m=12.0,
            hall_width_m=8.0,
            anchors_per_wall=2,
            height_m=3.0,
        ),
        trajectory=dict(
            type="line",
            start_m=[4.0, 4.0, 1.2],
            end_m=[8.0, 4.0, 1.2],
            speed_mps=1.0,
        ),
        seed=seed,
    )


def tiny_scene(snr_db: float = 25.0, seed: int = 3):
    """(scenario, anchors, track, dataset) for the tiny hall."""
    scenario = tiny_scenario(seed=seed)
    rng = np.random.default_rng(scenario.seed)
    anchors = build_anchor_set(scenario.anchors, rng)
    track = generate_trajectory(scenario.trajectory, scenario.dt_s, rng)
    dataset = synthesize_csi(scenario, track, anchors, snr_db=snr_db)
    return scenario, anchors, track, dataset


@pytest.fixture(scope="session")
def tiny_dataset():
    return tiny_scene()


def square_anchors(side: float = 10.0, height: float = 3.0) -> AnchorSet:
    positions = np.array(
        [
            [0.0, 0.0, height],
            [side, 0.0, height],
            [side, side, height],
            [0.0, side, height],
        ]
    )
    return AnchorSet(positions=positions, phase_offsets=np.zeros(4))
