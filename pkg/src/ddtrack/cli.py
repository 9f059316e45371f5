"""Command-line front end: simulate, track, evaluate, e2e.

Exit codes: 0 success, 2 configuration error, 3 file-format error,
4 filter divergence. All outputs are written atomically, so an interrupted
command never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import formats, metrics
from .channel import synthesize_csi
from .config import PipelineConfig, load_pipeline_config
from .errors import EXIT_CONFIG, ConfigError, DdtrackError
from .scenario import build_anchor_set, generate_trajectory
from .tracker import run_filter


def _say(quiet: bool, message: str):
    if not quiet:
        print(message)


def _require_file(path: str, role: str):
    if not os.path.isfile(path):
        raise ConfigError(f"{role} file not found: {path}")


def _simulate_dataset(config: PipelineConfig, seed: int | None):
    scenario = config.scenario
    if scenario is None:
        raise ConfigError("config has no `scenario` section to simulate from")
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    rng = np.random.default_rng(scenario.seed)
    anchors = build_anchor_set(scenario.anchors, rng)
    track = generate_trajectory(
        scenario.trajectory, scenario.dt_s, rng, v_max=scenario.v_max_mps
    )
    return synthesize_csi(
        scenario,
        track,
        anchors,
        amplitude_model=config.amplitude,
        impairments=config.impairments,
        snr_db=config.snr_db,
    )


def cmd_simulate(
    config_path: str, out_path: str, seed: int | None = None, quiet: bool = False
) -> int:
    """Render a synthetic dataset and write it as a CSI1 file."""
    _require_file(config_path, "config")
    config = load_pipeline_config(config_path, require_scenario=True)
    dataset = _simulate_dataset(config, seed)
    formats.write_csi(out_path, dataset)
    duration = (dataset.num_steps - 1) * dataset.dt_s
    _say(
        quiet,
        f"wrote {out_path}: M={dataset.num_anchors} N_f={dataset.num_subcarriers} "
        f"K={dataset.num_steps} duration={duration:.3f}s snr={config.snr_db:g}dB",
    )
    return 0


def cmd_track(
    csi_path: str,
    config_path: str,
    out_path: str,
    seed: int | None = None,
    particles: int | None = None,
    quiet: bool = False,
) -> int:
    """Run the tracking filter over a CSI1 file and write the estimates CSV."""
    _require_file(config_path, "config")
    _require_file(csi_path, "CSI")
    config = load_pipeline_config(config_path, require_scenario=False)
    filter_cfg = config.filter
    if seed is not None:
        filter_cfg = replace(filter_cfg, seed=seed)
    if particles is not None:
        filter_cfg = replace(filter_cfg, particles=particles)
    dataset = formats.read_csi(csi_path)
    estimate = run_filter(dataset, filter_cfg)
    formats.write_estimates_csv(out_path, estimate)
    reinits = len(estimate.reinit_steps)
    _say(
        quiet,
        f"wrote {out_path}: {estimate.num_steps} steps"
        + (f", {reinits} re-initializations" if reinits else ""),
    )
    return 0


def _truth_at_steps(positions: np.ndarray, steps: np.ndarray, source: str) -> np.ndarray:
    steps = np.asarray(steps, dtype=np.int64)
    if steps.size and (steps.min() < 0 or steps.max() >= positions.shape[0]):
        raise ConfigError(
            f"estimate step index range [{steps.min()}, {steps.max()}] does not fit "
            f"the {positions.shape[0]}-step ground truth from {source}"
        )
    return positions[steps]


def cmd_evaluate(
    estimate_paths: list[str],
    out_dir: str,
    csi_path: str | None = None,
    truth_path: str | None = None,
    config_path: str | None = None,
    quiet: bool = False,
) -> int:
    """Compare estimate CSVs against ground truth; write metrics and CDF."""
    if (csi_path is None) == (truth_path is None):
        raise ConfigError("exactly one of --csi and --truth must be given")
    if not estimate_paths:
        raise ConfigError("at least one estimates CSV is required")
    metrics_cfg = metrics.MetricsConfig()
    if config_path is not None:
        _require_file(config_path, "config")
        metrics_cfg = load_pipeline_config(config_path, require_scenario=False).metrics
    if csi_path is not None:
        _require_file(csi_path, "CSI")
        dataset = formats.read_csi(csi_path)
        if dataset.ground_truth is None:
            raise ConfigError(f"{csi_path} carries no ground-truth block")
        truth_positions = dataset.ground_truth.positions
        source = csi_path
    else:
        _require_file(truth_path, "truth")
        truth_positions = formats.read_truth_csv(truth_path).positions
        source = truth_path

    os.makedirs(out_dir, exist_ok=True)
    runs = []
    for index, path in enumerate(estimate_paths):
        _require_file(path, "estimates")
        table = formats.read_estimates_csv(path)
        run = metrics.evaluate_run(
            steps=table.steps,
            times=table.times,
            estimate_states=table.states,
            covariances=table.planar_cov_trace,
            truth_positions=_truth_at_steps(truth_positions, table.steps, source),
            config=metrics_cfg,
        )
        runs.append(run)
        formats.write_errors_csv(
            os.path.join(out_dir, f"errors_r{index:03d}.csv"),
            run.steps,
            run.errors,
            table.planar_cov_trace,
        )

    summary = metrics.pool_runs(runs, metrics_cfg)
    formats.write_summary(os.path.join(out_dir, "metrics.txt"), summary)
    values, freqs = metrics.error_cdf([run.errors for run in runs])
    formats.write_cdf_csv(os.path.join(out_dir, "cdf.csv"), values, freqs)
    _say(
        quiet,
        f"wrote {out_dir}: rmse={summary['rmse_m']:.4f}m over "
        f"{summary['converged_runs']}/{summary['runs']} converged runs",
    )
    return 0


def _track_worker(args) -> str:
    csi_path, filter_cfg, seed, out_path = args
    dataset = formats.read_csi(csi_path)
    estimate = run_filter(dataset, replace(filter_cfg, seed=seed))
    formats.write_estimates_csv(out_path, estimate)
    return out_path


def cmd_e2e(
    config_path: str,
    out_dir: str,
    runs: int | None = None,
    seed: int | None = None,
    particles: int | None = None,
    workers: int | None = None,
    quiet: bool = False,
) -> int:
    """Full pipeline: simulate once, track `runs` seeds, evaluate pooled."""
    _require_file(config_path, "config")
    config = load_pipeline_config(config_path, require_scenario=True)
    num_runs = config.runs if runs is None else runs
    base_seed = config.base_seed if seed is None else seed
    num_workers = config.workers if workers is None else workers
    if num_runs < 1:
        raise ConfigError("run count must be at least 1")
    if num_workers < 1:
        raise ConfigError("worker count must be at least 1")
    filter_cfg = config.filter
    if particles is not None:
        filter_cfg = replace(filter_cfg, particles=particles)

    os.makedirs(out_dir, exist_ok=True)
    csi_path = os.path.join(out_dir, "dataset.csi1")
    dataset = _simulate_dataset(config, None)
    formats.write_csi(csi_path, dataset)
    _say(
        quiet,
        f"simulated {csi_path}: M={dataset.num_anchors} "
        f"N_f={dataset.num_subcarriers} K={dataset.num_steps}",
    )

    estimate_paths = [
        os.path.join(out_dir, f"estimates_r{r:03d}.csv") for r in range(num_runs)
    ]
    jobs = [
        (csi_path, filter_cfg, base_seed + r, estimate_paths[r])
        for r in range(num_runs)
    ]
    if num_workers == 1:
        for job in jobs:
            _track_worker((csi_path, job[1], job[2], job[3]))
            _say(quiet, f"tracked seed {job[2]} -> {job[3]}")
    else:
        with ProcessPoolExecutor(max_workers=num_workers) as pool:
            for path in pool.map(_track_worker, jobs):
                _say(quiet, f"tracked -> {path}")

    return cmd_evaluate(
        estimate_paths,
        out_dir,
        csi_path=csi_path,
        config_path=config_path,
        quiet=quiet,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddtrack",
        description="Delay-Doppler direct position tracking toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render a synthetic CSI1 dataset")
    p_sim.add_argument("--config", required=True, help="pipeline YAML")
    p_sim.add_argument("--out", required=True, help="output CSI1 path")
    p_sim.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p_sim.add_argument("--quiet", action="store_true")

    p_trk = sub.add_parser("track", help="run the filter over a CSI1 file")
    p_trk.add_argument("csi", help="input CSI1 path")
    p_trk.add_argument("--config", required=True, help="pipeline YAML")
    p_trk.add_argument("--out", required=True, help="output estimates CSV path")
    p_trk.add_argument("--seed", type=int, default=None, help="override filter seed")
    p_trk.add_argument("--particles", type=int, default=None, help="override particle count")
    p_trk.add_argument("--quiet", action="store_true")

    p_eval = sub.add_parser("evaluate", help="score estimate CSVs against ground truth")
    p_eval.add_argument("estimates", nargs="+", help="estimates CSV paths")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument("--csi", default=None, help="CSI1 file with ground truth")
    p_eval.add_argument("--truth", default=None, help="ground-truth CSV")
    p_eval.add_argument("--config", default=None, help="pipeline YAML (metrics section)")
    p_eval.add_argument("--quiet", action="store_true")

    p_e2e = sub.add_parser("e2e", help="simulate, track Monte-Carlo runs, evaluate")
    p_e2e.add_argument("--config", required=True, help="pipeline YAML")
    p_e2e.add_argument("--out", required=True, help="output directory")
    p_e2e.add_argument("--runs", type=int, default=None, help="override Monte-Carlo run count")
    p_e2e.add_argument("--seed", type=int, default=None, help="override base seed")
    p_e2e.add_argument("--particles", type=int, default=None, help="override particle count")
    p_e2e.add_argument("--workers", type=int, default=None, help="parallel tracking workers")
    p_e2e.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, seed=args.seed, quiet=args.quiet)
        if args.command == "track":
            return cmd_track(
                args.csi,
                args.config,
                args.out,
                seed=args.seed,
                particles=args.particles,
                quiet=args.quiet,
            )
        if args.command == "evaluate":
            return cmd_evaluate(
                args.estimates,
                args.out,
                csi_path=args.csi,
                truth_path=args.truth,
                config_path=args.config,
                quiet=args.quiet,
            )
        if args.command == "e2e":
            return cmd_e2e(
                args.config,
                args.out,
                runs=args.runs,
                seed=args.seed,
                particles=args.particles,
                workers=args.workers,
                quiet=args.quiet,
            )
        raise ConfigError(f"unknown command {args.command!r}")
    except DdtrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
