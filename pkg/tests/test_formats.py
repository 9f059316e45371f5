"""File formats: CSI1 binary round-trips, CSV tables, atomicity."""

import os
import struct

import numpy as np
import pytest

from ddtrack.channel import CsiDataset
from ddtrack.errors import FormatError
from ddtrack.formats import (
    read_csi,
    read_estimates_csv,
    read_summary,
    read_truth_csv,
    write_cdf_csv,
    write_csi,
    write_errors_csv,
    write_estimates_csv,
    write_summary,
    write_truth_csv,
)
from ddtrack.formats import _atomic_write
from ddtrack.scenario import GroundTruthTrack
from ddtrack.tracker import TrackEstimate


def sample_dataset(k=5, m=2, n_f=4, with_truth=True, seed=0) -> CsiDataset:
    rng = np.random.default_rng(seed)
    snapshots = (
        rng.standard_normal((k, m, n_f, 2)) @ np.array([1.0, 1j])
    ).astype(np.complex64)
    truth = None
    if with_truth:
        times = np.arange(k) * 0.005
        positions = rng.uniform(0.0, 10.0, size=(k, 3))
        velocities = np.column_stack(
            [rng.uniform(-1.0, 1.0, size=(k, 2)), np.zeros(k)]
        )
        truth = GroundTruthTrack(times=times, positions=positions, velocities=velocities)
    return CsiDataset(
        carrier_hz=3.75e9,
        baseband_freqs=np.arange(n_f) * 78125.0 - 117187.5,
        dt_s=0.005,
        anchor_positions=rng.uniform(0.0, 10.0, size=(m, 3)),
        snapshots=snapshots,
        ground_truth=truth,
    )


def sample_estimate(n=4, seed=1) -> TrackEstimate:
    rng = np.random.default_rng(seed)
    cov = rng.standard_normal((n, 6, 6))
    cov = cov @ cov.transpose(0, 2, 1)
    return TrackEstimate(
        steps=np.arange(n) * 5 + 19,
        times=(np.arange(n) * 5 + 19) * 0.005,
        states=rng.standard_normal((n, 6)),
        covariances=cov,
        ess=rng.uniform(1.0, 100.0, size=n),
        log_norm=rng.standard_normal(n),
    )


class TestCsiRoundTrip:
    def test_bit_exact_with_truth(self, tmp_path):
        dataset = sample_dataset()
        path = tmp_path / "data.csi1"
        write_csi(str(path), dataset)
        loaded = read_csi(str(path))
        np.testing.assert_array_equal(loaded.snapshots, dataset.snapshots)
        np.testing.assert_array_equal(loaded.anchor_positions, dataset.anchor_positions)
        np.testing.assert_allclose(
            loaded.baseband_freqs, dataset.baseband_freqs, rtol=0, atol=1e-9
        )
        assert loaded.carrier_hz == dataset.carrier_hz
        assert loaded.dt_s == dataset.dt_s
        np.testing.assert_array_equal(
            loaded.ground_truth.positions, dataset.ground_truth.positions
        )
        np.testing.assert_array_equal(
            loaded.ground_truth.velocities, dataset.ground_truth.velocities
        )
        # A second serialization of the parsed dataset is byte-identical.
        second = tmp_path / "again.csi1"
        write_csi(str(second), loaded)
        assert second.read_bytes() == path.read_bytes()

    def test_round_trip_without_truth(self, tmp_path):
        dataset = sample_dataset(with_truth=False)
        path = tmp_path / "data.csi1"
        write_csi(str(path), dataset)
        loaded = read_csi(str(path))
        assert loaded.ground_truth is None
        np.testing.assert_array_equal(loaded.snapshots, dataset.snapshots)

    def test_single_snapshot_round_trip(self, tmp_path):
        dataset = sample_dataset(k=1)
        path = tmp_path / "one.csi1"
        write_csi(str(path), dataset)
        loaded = read_csi(str(path))
        assert loaded.num_steps == 1
        np.testing.assert_array_equal(loaded.snapshots, dataset.snapshots)


class TestCsiValidation:
    def _write_sample(self, tmp_path):
        path = tmp_path / "data.csi1"
        write_csi(str(path), sample_dataset())
        return path

    def test_bad_magic(self, tmp_path):
        path = self._write_sample(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XSI1"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic"):
            read_csi(str(path))

    def test_bad_version(self, tmp_path):
        path = self._write_sample(tmp_path)
        raw = bytearray(path.read_bytes())
        struct.pack_into("<I", raw, 4, 99)
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            read_csi(str(path))

    def test_truncated_payload(self, tmp_path):
        path = self._write_sample(tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 40])
        with pytest.raises(FormatError):
            read_csi(str(path))

    def test_trailing_garbage(self, tmp_path):
        path = self._write_sample(tmp_path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError, match="trailing"):
            read_csi(str(path))

    def test_bad_truth_flag(self, tmp_path):
        dataset = sample_dataset(with_truth=False)
        path = tmp_path / "data.csi1"
        write_csi(str(path), dataset)
        raw = bytearray(path.read_bytes())
        raw[-1] = 2
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="flag"):
            read_csi(str(path))

    def test_zero_counts(self, tmp_path):
        path = self._write_sample(tmp_path)
        raw = bytearray(path.read_bytes())
        struct.pack_into("<I", raw, 8, 0)  # anchor count
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_csi(str(path))

    def test_non_finite_header(self, tmp_path):
        path = self._write_sample(tmp_path)
        raw = bytearray(path.read_bytes())
        struct.pack_into("<d", raw, 24, np.nan)  # carrier_hz
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="carrier_hz"):
            read_csi(str(path))


class TestEstimatesCsv:
    def test_round_trip_exact(self, tmp_path):
        estimate = sample_estimate()
        path = tmp_path / "estimates.csv"
        write_estimates_csv(str(path), estimate)
        table = read_estimates_csv(str(path))
        np.testing.assert_array_equal(table.steps, estimate.steps)
        np.testing.assert_array_equal(table.times, estimate.times)
        np.testing.assert_array_equal(table.states, estimate.states)
        np.testing.assert_array_equal(
            table.planar_cov_trace,
            estimate.covariances[:, 0, 0] + estimate.covariances[:, 1, 1],
        )
        np.testing.assert_array_equal(table.ess, estimate.ess)
        np.testing.assert_array_equal(table.log_norm, estimate.log_norm)

    def test_missing_marker(self, tmp_path):
        path = tmp_path / "estimates.csv"
        path.write_text("k,t_s\n1,2\n")
        with pytest.raises(FormatError, match="marker"):
            read_estimates_csv(str(path))

    def test_wrong_field_count(self, tmp_path):
        estimate = sample_estimate(n=1)
        path = tmp_path / "estimates.csv"
        write_estimates_csv(str(path), estimate)
        path.write_text(path.read_text() + "1,2,3\n")
        with pytest.raises(FormatError, match="fields"):
            read_estimates_csv(str(path))

    def test_bad_number(self, tmp_path):
        estimate = sample_estimate(n=1)
        path = tmp_path / "estimates.csv"
        write_estimates_csv(str(path), estimate)
        text = path.read_text().replace("19,", "abc,", 1)
        path.write_text(text)
        with pytest.raises(FormatError, match="numeric"):
            read_estimates_csv(str(path))


class TestTruthCsv:
    def test_round_trip(self, tmp_path):
        truth = sample_dataset().ground_truth
        path = tmp_path / "truth.csv"
        write_truth_csv(str(path), truth)
        loaded = read_truth_csv(str(path))
        np.testing.assert_array_equal(loaded.positions, truth.positions)
        np.testing.assert_array_equal(loaded.velocities, truth.velocities)
        np.testing.assert_array_equal(loaded.times, truth.times)

    def test_invalid_contents(self, tmp_path):
        truth = sample_dataset().ground_truth
        path = tmp_path / "truth.csv"
        write_truth_csv(str(path), truth)
        # Breaking the uniform grid must surface as a format error.
        lines = path.read_text().splitlines()
        fields = lines[3].split(",")
        fields[1] = "99.0"
        lines[3] = ",".join(fields)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError, match="truth"):
            read_truth_csv(str(path))


class TestAuxiliaryTables:
    def test_errors_and_cdf_headers(self, tmp_path):
        errors_path = tmp_path / "errors.csv"
        write_errors_csv(
            str(errors_path), np.array([19, 24]), np.array([0.5, 0.25]),
            np.array([0.1, 0.2]),
        )
        lines = errors_path.read_text().splitlines()
        assert lines[0] == "# ddtrack-errors-v1"
        assert lines[1] == "k,error_m,planar_cov_trace_m2"
        assert len(lines) == 4

        cdf_path = tmp_path / "cdf.csv"
        write_cdf_csv(str(cdf_path), np.array([0.1, 0.2]), np.array([0.5, 1.0]))
        lines = cdf_path.read_text().splitlines()
        assert lines[0] == "# ddtrack-cdf-v1"
        assert lines[1] == "error_m,cumulative_frequency"

    def test_summary_round_trip(self, tmp_path):
        path = tmp_path / "metrics.txt"
        write_summary(str(path), {"runs": 5, "rmse_m": 0.125, "note": "ok"})
        loaded = read_summary(str(path))
        assert loaded == {"runs": 5, "rmse_m": 0.125, "note": "ok"}


class TestAtomicity:
    def test_failed_write_leaves_nothing(self, tmp_path):
        path = tmp_path / "out.bin"

        def explode(handle):
            handle.write(b"partial")
            raise RuntimeError("disk on fire")

        with pytest.raises(RuntimeError):
            _atomic_write(str(path), explode, binary=True)
        assert list(tmp_path.iterdir()) == []

    def test_overwrite_is_atomic(self, tmp_path):
        path = tmp_path / "out.bin"
        _atomic_write(str(path), lambda h: h.write(b"first"), binary=True)
        _atomic_write(str(path), lambda h: h.write(b"second"), binary=True)
        assert path.read_bytes() == b"second"
        assert [p.name for p in tmp_path.iterdir()] == ["out.bin"]
