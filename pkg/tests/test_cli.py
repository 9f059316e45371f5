"""Command-line interface: subcommands, outputs, and the exit-code contract."""

from pathlib import Path

import numpy as np
import pytest

from ddtrack.channel import CsiDataset
from ddtrack.cli import main
from ddtrack.formats import (
    read_csi,
    read_estimates_csv,
    read_summary,
    write_csi,
    write_truth_csv,
)

CONFIG = str(Path(__file__).resolve().parents[1] / "configs" / "smoke.yaml")


@pytest.fixture(scope="module")
def smoke_csi(tmp_path_factory):
    path = tmp_path_factory.mktemp("csi") / "dataset.csi1"
    assert main(["simulate", "--config", CONFIG, "--out", str(path), "--quiet"]) == 0
    return str(path)


@pytest.fixture(scope="module")
def smoke_estimates(smoke_csi, tmp_path_factory):
    path = tmp_path_factory.mktemp("est") / "estimates.csv"
    code = main(
        ["track", smoke_csi, "--config", CONFIG, "--out", str(path), "--quiet"]
    )
    assert code == 0
    return str(path)


class TestSimulate:
    def test_writes_readable_dataset(self, smoke_csi):
        dataset = read_csi(smoke_csi)
        assert dataset.num_anchors == 4
        assert dataset.num_subcarriers == 8
        assert dataset.num_steps == 801
        assert dataset.ground_truth is not None
        assert np.all(np.isfinite(dataset.snapshots.view(np.float32)))

    def test_deterministic_for_a_seed(self, smoke_csi, tmp_path):
        again = tmp_path / "again.csi1"
        code = main(
            ["simulate", "--config", CONFIG, "--out", str(again), "--quiet"]
        )
        assert code == 0
        assert again.read_bytes() == Path(smoke_csi).read_bytes()

    def test_seed_override_changes_data(self, smoke_csi, tmp_path):
        other = tmp_path / "other.csi1"
        code = main(
            ["simulate", "--config", CONFIG, "--out", str(other), "--seed", "4", "--quiet"]
        )
        assert code == 0
        assert other.read_bytes() != Path(smoke_csi).read_bytes()


class TestTrack:
    def test_writes_estimates(self, smoke_csi, smoke_estimates):
        table = read_estimates_csv(smoke_estimates)
        dataset = read_csi(smoke_csi)
        assert table.steps.size > 100
        assert np.all(np.diff(table.steps) > 0)
        assert table.steps[0] >= 0
        assert table.steps[-1] < dataset.num_steps
        assert np.all(np.isfinite(table.states))
        assert np.all(table.ess >= 1.0)

    def test_same_seed_is_byte_identical(self, smoke_csi, smoke_estimates, tmp_path):
        repeat = tmp_path / "repeat.csv"
        code = main(
            ["track", smoke_csi, "--config", CONFIG, "--out", str(repeat), "--quiet"]
        )
        assert code == 0
        assert repeat.read_bytes() == Path(smoke_estimates).read_bytes()

    def test_seed_override_changes_estimates(self, smoke_csi, smoke_estimates, tmp_path):
        other = tmp_path / "other.csv"
        code = main(
            [
                "track", smoke_csi, "--config", CONFIG,
                "--out", str(other), "--seed", "99", "--quiet",
            ]
        )
        assert code == 0
        assert other.read_bytes() != Path(smoke_estimates).read_bytes()


class TestEvaluate:
    def test_against_csi_truth(self, smoke_csi, smoke_estimates, tmp_path):
        out = tmp_path / "eval"
        code = main(
            [
                "evaluate", smoke_estimates, "--csi", smoke_csi,
                "--config", CONFIG, "--out", str(out), "--quiet",
            ]
        )
        assert code == 0
        errors_text = (out / "errors_r000.csv").read_text()
        assert errors_text.startswith("# ddtrack-errors-v1\n")
        summary = read_summary(str(out / "metrics.txt"))
        assert summary["runs"] == 1
        assert summary["converged_runs"] == 1
        assert summary["rmse_m"] > 0.0
        cdf_text = (out / "cdf.csv").read_text()
        assert cdf_text.startswith("# ddtrack-cdf-v1\n")

    def test_against_truth_csv(self, smoke_csi, smoke_estimates, tmp_path):
        truth_path = tmp_path / "truth.csv"
        write_truth_csv(str(truth_path), read_csi(smoke_csi).ground_truth)
        out = tmp_path / "eval"
        code = main(
            [
                "evaluate", smoke_estimates, "--truth", str(truth_path),
                "--config", CONFIG, "--out", str(out), "--quiet",
            ]
        )
        assert code == 0
        assert (out / "metrics.txt").is_file()

    def test_requires_exactly_one_truth_source(self, smoke_csi, smoke_estimates, tmp_path):
        truth_path = tmp_path / "truth.csv"
        write_truth_csv(str(truth_path), read_csi(smoke_csi).ground_truth)
        out = str(tmp_path / "eval")
        both = main(
            [
                "evaluate", smoke_estimates, "--csi", smoke_csi,
                "--truth", str(truth_path), "--out", out, "--quiet",
            ]
        )
        assert both == 2
        neither = main(["evaluate", smoke_estimates, "--out", out, "--quiet"])
        assert neither == 2


class TestEndToEnd:
    def test_full_pipeline(self, tmp_path):
        out = tmp_path / "e2e"
        code = main(["e2e", "--config", CONFIG, "--out", str(out), "--quiet"])
        assert code == 0
        for name in (
            "dataset.csi1",
            "estimates_r000.csv",
            "estimates_r001.csv",
            "errors_r000.csv",
            "errors_r001.csv",
            "metrics.txt",
            "cdf.csv",
        ):
            assert (out / name).is_file(), name
        summary = read_summary(str(out / "metrics.txt"))
        assert summary["runs"] == 2


class TestExitCodes:
    def test_missing_config_section_exits_2(self, tmp_path):
        config = tmp_path / "broken.yaml"
        config.write_text("filter:\n  particles: 100\n")
        code = main(
            [
                "simulate", "--config", str(config),
                "--out", str(tmp_path / "d.csi1"), "--quiet",
            ]
        )
        assert code == 2

    def test_nonexistent_config_exits_2(self, tmp_path):
        code = main(
            [
                "simulate", "--config", str(tmp_path / "absent.yaml"),
                "--out", str(tmp_path / "d.csi1"), "--quiet",
            ]
        )
        assert code == 2

    def test_dataset_shorter_than_window_exits_2(self, tmp_path):
        rng = np.random.default_rng(0)
        short = CsiDataset(
            carrier_hz=3.75e9,
            baseband_freqs=np.arange(8) * 546875.0,
            dt_s=0.005,
            anchor_positions=rng.uniform(0.0, 10.0, size=(4, 3)),
            snapshots=rng.standard_normal((5, 4, 8)).astype(np.complex64),
            ground_truth=None,
        )
        path = tmp_path / "short.csi1"
        write_csi(str(path), short)
        code = main(
            [
                "track", str(path), "--config", CONFIG,
                "--out", str(tmp_path / "est.csv"), "--quiet",
            ]
        )
        assert code == 2

    def test_corrupt_magic_exits_3(self, smoke_csi, tmp_path):
        corrupt = tmp_path / "corrupt.csi1"
        raw = bytearray(Path(smoke_csi).read_bytes())
        raw[:4] = b"JUNK"
        corrupt.write_bytes(bytes(raw))
        code = main(
            [
                "track", str(corrupt), "--config", CONFIG,
                "--out", str(tmp_path / "est.csv"), "--quiet",
            ]
        )
        assert code == 3

    def test_nan_payload_exits_4(self, smoke_csi, tmp_path):
        dataset = read_csi(smoke_csi)
        dataset.snapshots[:] = np.nan
        poisoned = tmp_path / "poisoned.csi1"
        write_csi(str(poisoned), dataset)
        code = main(
            [
                "track", str(poisoned), "--config", CONFIG,
                "--out", str(tmp_path / "est.csv"), "--quiet",
            ]
        )
        assert code == 4

    def test_unwritable_output_exits_2(self, smoke_csi, tmp_path):
        code = main(
            [
                "simulate", "--config", CONFIG,
                "--out", str(tmp_path / "no" / "such" / "dir" / "d.csi1"), "--quiet",
            ]
        )
        assert code == 2
