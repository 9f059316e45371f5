"""YAML pipeline configuration: one document describing an experiment.

Top-level sections: `scenario` (required for simulation), `channel`,
`filter`, `metrics`, `run`. Unknown keys anywhere are rejected so typos
cannot silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .channel import AmplitudeModel, Blockage, ImpairmentSchedule, Scatterer
from .errors import ConfigError
from .metrics import MetricsConfig
from .scenario import ScenarioConfig
from .tracker import FilterConfig


@dataclass
class PipelineConfig:
    """Parsed experiment description."""

    scenario: ScenarioConfig | None
    amplitude: AmplitudeModel
    impairments: ImpairmentSchedule
    snr_db: float
    filter: FilterConfig
    metrics: MetricsConfig
    runs: int = 1
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("run count must be at least 1")
        if self.workers < 1:
            raise ConfigError("worker count must be at least 1")


def _section(doc: dict, name: str, path: str) -> dict:
    value = doc.get(name, {})
    if value is None:
        value = {}
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: section `{name}` must be a mapping")
    return dict(value)


def _reject_unknown(mapping: dict, allowed, context: str):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {context}: {', '.join(unknown)}")


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"missing `{key}` key in {context}")
    return mapping[key]


def _parse_scenario(section: dict, path: str) -> ScenarioConfig:
    allowed = (
        "carrier_hz",
        "subcarrier_count",
        "subcarrier_spacing_hz",
        "dt_s",
        "anchors",
        "trajectory",
        "seed",
        "v_max_mps",
    )
    _reject_unknown(section, allowed, f"{path}: scenario")
    for key in ("carrier_hz", "subcarrier_count", "subcarrier_spacing_hz", "dt_s", "anchors", "trajectory"):
        _require(section, key, f"{path}: scenario")
    return ScenarioConfig(
        carrier_hz=float(section["carrier_hz"]),
        subcarrier_count=int(section["subcarrier_count"]),
        subcarrier_spacing_hz=float(section["subcarrier_spacing_hz"]),
        dt_s=float(section["dt_s"]),
        anchors=dict(section["anchors"]),
        trajectory=dict(section["trajectory"]),
        seed=int(section.get("seed", 0)),
        v_max_mps=float(section.get("v_max_mps", 1.0)),
    )


def _parse_channel(section: dict, path: str) -> tuple[AmplitudeModel, ImpairmentSchedule, float]:
    _reject_unknown(
        section, ("snr_db", "amplitude", "blockages", "scatterers"), f"{path}: channel"
    )
    amp_section = section.get("amplitude", {}) or {}
    _reject_unknown(
        amp_section,
        ("mode", "carrier_phase", "reference_distance_m"),
        f"{path}: channel.amplitude",
    )
    amplitude = AmplitudeModel(
        mode=str(amp_section.get("mode", "unit")),
        carrier_phase=bool(amp_section.get("carrier_phase", True)),
        reference_distance_m=float(amp_section.get("reference_distance_m", 1.0)),
    )
    blockages = []
    for i, entry in enumerate(section.get("blockages", []) or []):
        _reject_unknown(
            entry,
            ("anchor", "start_step", "end_step", "attenuation_db"),
            f"{path}: channel.blockages[{i}]",
        )
        blockages.append(
            Blockage(
                anchor=int(_require(entry, "anchor", f"{path}: channel.blockages[{i}]")),
                start_step=int(_require(entry, "start_step", f"{path}: channel.blockages[{i}]")),
                end_step=int(_require(entry, "end_step", f"{path}: channel.blockages[{i}]")),
                attenuation_db=float(
                    _require(entry, "attenuation_db", f"{path}: channel.blockages[{i}]")
                ),
            )
        )
    scatterers = []
    for i, entry in enumerate(section.get("scatterers", []) or []):
        _reject_unknown(
            entry, ("position_m", "gain"), f"{path}: channel.scatterers[{i}]"
        )
        gain = _require(entry, "gain", f"{path}: channel.scatterers[{i}]")
        if not (isinstance(gain, (list, tuple)) and len(gain) == 2):
            raise ConfigError(
                f"{path}: channel.scatterers[{i}]: gain must be [real, imag]"
            )
        scatterers.append(
            Scatterer(
                position=np.asarray(
                    _require(entry, "position_m", f"{path}: channel.scatterers[{i}]"),
                    dtype=np.float64,
                ),
                gain=complex(float(gain[0]), float(gain[1])),
            )
        )
    impairments = ImpairmentSchedule(blockages=blockages, scatterers=scatterers)
    return amplitude, impairments, float(section.get("snr_db", 15.0))


_FILTER_KEYS = (
    "particles",
    "window",
    "window_stride",
    "update_stride",
    "position_min",
    "position_max",
    "velocity_min",
    "velocity_max",
    "sigma2_range",
    "sigma_p",
    "sigma_h",
    "sigma_v",
    "sigma_s",
    "dt_s",
    "kernel_bandwidth_mode",
    "kernel_bandwidth_h",
    "burn_in_mode",
    "burn_in_steps",
    "burn_in_temperature",
    "resample_mode",
    "ess_threshold_ratio",
    "precision",
    "sigma2_floor",
    "reinit_on_divergence",
    "seed",
)


def _parse_filter(section: dict, path: str) -> FilterConfig:
    _reject_unknown(section, _FILTER_KEYS, f"{path}: filter")
    defaults = FilterConfig()
    pos_min = np.asarray(section.get("position_min", defaults.x_min[:3]), dtype=np.float64)
    pos_max = np.asarray(section.get("position_max", defaults.x_max[:3]), dtype=np.float64)
    vel_min = np.asarray(section.get("velocity_min", defaults.x_min[3:5]), dtype=np.float64)
    vel_max = np.asarray(section.get("velocity_max", defaults.x_max[3:5]), dtype=np.float64)
    sigma2 = np.asarray(
        section.get("sigma2_range", [defaults.x_min[5], defaults.x_max[5]]),
        dtype=np.float64,
    )
    if pos_min.shape != (3,) or pos_max.shape != (3,):
        raise ConfigError(f"{path}: filter position bounds must be 3-vectors")
    if vel_min.shape != (2,) or vel_max.shape != (2,):
        raise ConfigError(f"{path}: filter velocity bounds must be 2-vectors")
    if sigma2.shape != (2,):
        raise ConfigError(f"{path}: filter sigma2_range must have two entries")
    kwargs = {}
    for key in (
        "particles",
        "window",
        "window_stride",
        "update_stride",
        "burn_in_steps",
        "seed",
    ):
        if key in section:
            kwargs[key] = int(section[key])
    for key in (
        "sigma_p",
        "sigma_h",
        "sigma_v",
        "sigma_s",
        "kernel_bandwidth_h",
        "burn_in_temperature",
        "ess_threshold_ratio",
        "sigma2_floor",
    ):
        if key in section:
            kwargs[key] = float(section[key])
    for key in ("kernel_bandwidth_mode", "burn_in_mode", "resample_mode", "precision"):
        if key in section:
            kwargs[key] = str(section[key])
    if "dt_s" in section and section["dt_s"] is not None:
        kwargs["dt_s"] = float(section["dt_s"])
    if "reinit_on_divergence" in section:
        kwargs["reinit_on_divergence"] = bool(section["reinit_on_divergence"])
    return FilterConfig(
        x_min=np.concatenate([pos_min, vel_min, sigma2[:1]]),
        x_max=np.concatenate([pos_max, vel_max, sigma2[1:]]),
        **kwargs,
    )


def _parse_metrics(section: dict, path: str) -> MetricsConfig:
    allowed = (
        "convergence_mode",
        "convergence_threshold_m",
        "convergence_hold_steps",
        "discard_s",
        "quantiles",
    )
    _reject_unknown(section, allowed, f"{path}: metrics")
    kwargs = {}
    if "convergence_mode" in section:
        kwargs["convergence_mode"] = str(section["convergence_mode"])
    if "convergence_threshold_m" in section:
        kwargs["convergence_threshold_m"] = float(section["convergence_threshold_m"])
    if "convergence_hold_steps" in section:
        kwargs["convergence_hold_steps"] = int(section["convergence_hold_steps"])
    if "discard_s" in section:
        kwargs["discard_s"] = float(section["discard_s"])
    if "quantiles" in section:
        kwargs["quantiles"] = tuple(float(q) for q in section["quantiles"])
    return MetricsConfig(**kwargs)


def load_pipeline_config(path: str, require_scenario: bool = True) -> PipelineConfig:
    """Parse and validate a pipeline YAML file.

    Args:
        path: config file path.
        require_scenario: tracking an existing dataset does not need the
            scenario section; simulation does.
    """
    try:
        with open(path, "r") as handle:
            doc = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    _reject_unknown(doc, ("scenario", "channel", "filter", "metrics", "run"), path)

    scenario = None
    if "scenario" in doc:
        scenario = _parse_scenario(_section(doc, "scenario", path), path)
    elif require_scenario:
        raise ConfigError(f"{path}: missing `scenario` section")
    amplitude, impairments, snr_db = _parse_channel(_section(doc, "channel", path), path)
    filter_cfg = _parse_filter(_section(doc, "filter", path), path)
    metrics_cfg = _parse_metrics(_section(doc, "metrics", path), path)

    run_section = _section(doc, "run", path)
    _reject_unknown(run_section, ("runs", "base_seed", "workers"), f"{path}: run")
    return PipelineConfig(
        scenario=scenario,
        amplitude=amplitude,
        impairments=impairments,
        snr_db=snr_db,
        filter=filter_cfg,
        metrics=metrics_cfg,
        runs=int(run_section.get("runs", 1)),
        base_seed=int(run_section.get("base_seed", 0)),
        workers=int(run_section.get("workers", 1)),
    )
