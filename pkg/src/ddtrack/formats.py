"""On-disk formats: the CSI1 binary dataset and the CSV/text result files.

CSI1 layout, all little-endian:

    magic "CSI1"
    u32 version (currently 1)
    u32 M (anchors), u32 N_f (subcarriers), u64 K (snapshots)
    f64 carrier_hz, f64 dt_s, f64 freq0_hz, f64 freq_spacing_hz
    M x 3 f64 anchor positions, row per anchor
    K*M*N_f complex64 samples (f32 real, f32 imag interleaved),
        snapshot-major, then anchor, then subcarrier
    u8 ground-truth flag
    if flag == 1: K x 6 f64 rows (position xyz, velocity xyz)

Complex samples are stored as f32 pairs because the payload dominates the
file size and f32 exceeds the precision of any measured CSI; header floats
stay f64. Every writer in this module is atomic: content goes to a temporary
file in the target directory which is renamed over the destination, so
readers never observe partial files.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .channel import CsiDataset
from .errors import ConfigError, FormatError
from .scenario import GroundTruthTrack
from .tracker import TrackEstimate

_MAGIC = b"CSI1"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIQdddd")
_PAYLOAD_CHUNK = 1 << 21  # snapshots per write slab are derived from this

_ESTIMATES_MARKER = "# ddtrack-estimates-v1"
_ESTIMATES_HEADER = "k,t_s,x_m,y_m,z_m,vx_mps,vy_mps,sigma2,planar_cov_trace_m2,ess,log_norm"
_TRUTH_MARKER = "# ddtrack-truth-v1"
_TRUTH_HEADER = "k,t_s,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps"
_ERRORS_MARKER = "# ddtrack-errors-v1"
_ERRORS_HEADER = "k,error_m,planar_cov_trace_m2"
_CDF_MARKER = "# ddtrack-cdf-v1"
_CDF_HEADER = "error_m,cumulative_frequency"
_SUMMARY_MARKER = "# ddtrack-metrics-v1"


def _atomic_write(path: str, write_body, binary: bool = True):
    path = os.path.abspath(path)
    directory = os.path.dirname(path)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb" if binary else "w", newline=None if binary else "") as handle:
            write_body(handle)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _fmt(value: float) -> str:
    # %.17g reproduces every f64 bit pattern; CSVs stay byte-deterministic.
    return format(float(value), ".17g")


def write_csi(path: str, dataset: CsiDataset) -> None:
    """Serialize a dataset to a CSI1 file (atomic)."""
    k, m, n_f = dataset.snapshots.shape
    freqs = dataset.baseband_freqs
    spacing = float(freqs[1] - freqs[0]) if n_f > 1 else 1.0

    def body(handle):
        handle.write(
            _HEADER.pack(
                _MAGIC,
                _VERSION,
                m,
                n_f,
                k,
                float(dataset.carrier_hz),
                float(dataset.dt_s),
                float(freqs[0]),
                spacing,
            )
        )
        handle.write(dataset.anchor_positions.astype("<f8").tobytes())
        slab = max(1, _PAYLOAD_CHUNK // max(1, m * n_f))
        for start in range(0, k, slab):
            chunk = dataset.snapshots[start : start + slab].astype("<c8")
            handle.write(np.ascontiguousarray(chunk).tobytes())
        if dataset.ground_truth is None:
            handle.write(b"\x00")
        else:
            handle.write(b"\x01")
            block = np.hstack(
                [dataset.ground_truth.positions, dataset.ground_truth.velocities]
            )
            handle.write(block.astype("<f8").tobytes())

    _atomic_write(path, body, binary=True)


def _read_exact(handle, count: int, what: str) -> bytes:
    data = handle.read(count)
    if len(data) != count:
        raise FormatError(f"truncated CSI1 file while reading {what}")
    return data


def read_csi(path: str) -> CsiDataset:
    """Parse a CSI1 file; raises FormatError on any structural problem."""
    with open(path, "rb") as handle:
        header = _read_exact(handle, _HEADER.size, "header")
        magic, version, m, n_f, k, carrier, dt, freq0, spacing = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        if version != _VERSION:
            raise FormatError(f"unsupported CSI1 version {version}")
        if m < 1 or n_f < 1 or k < 1:
            raise FormatError("anchor, subcarrier, and snapshot counts must be positive")
        for name, value in (("carrier_hz", carrier), ("dt_s", dt), ("freq0_hz", freq0), ("freq_spacing_hz", spacing)):
            if not np.isfinite(value):
                raise FormatError(f"non-finite header field {name}")
        if dt <= 0.0 or spacing <= 0.0:
            raise FormatError("dt_s and freq_spacing_hz must be positive")
        anchors = np.frombuffer(
            _read_exact(handle, m * 3 * 8, "anchor positions"), dtype="<f8"
        ).reshape(m, 3).copy()
        if not np.all(np.isfinite(anchors)):
            raise FormatError("non-finite anchor positions")
        payload = np.empty(k * m * n_f, dtype="<c8")
        view = memoryview(payload).cast("B")
        if handle.readinto(view) != view.nbytes:
            raise FormatError("truncated CSI1 file while reading the payload")
        snapshots = payload.reshape(k, m, n_f)
        flag = _read_exact(handle, 1, "ground-truth flag")[0]
        truth = None
        if flag == 1:
            block = np.frombuffer(
                _read_exact(handle, k * 6 * 8, "ground-truth block"), dtype="<f8"
            ).reshape(k, 6)
            try:
                truth = GroundTruthTrack(
                    times=np.arange(k) * dt,
                    positions=block[:, :3].copy(),
                    velocities=block[:, 3:].copy(),
                )
            except ConfigError as exc:
                raise FormatError(f"invalid ground-truth block: {exc}") from exc
        elif flag != 0:
            raise FormatError(f"ground-truth flag must be 0 or 1, found {flag}")
        if handle.read(1):
            raise FormatError("trailing bytes after the CSI1 payload")
    freqs = freq0 + np.arange(n_f) * spacing
    try:
        return CsiDataset(
            carrier_hz=carrier,
            baseband_freqs=freqs,
            dt_s=dt,
            anchor_positions=anchors,
            snapshots=snapshots,
            ground_truth=truth,
        )
    except ConfigError as exc:
        raise FormatError(f"inconsistent CSI1 contents: {exc}") from exc


@dataclass
class EstimateTable:
    """Estimates CSV contents; covariance is reduced to its planar trace."""

    steps: np.ndarray
    times: np.ndarray
    states: np.ndarray
    planar_cov_trace: np.ndarray
    ess: np.ndarray
    log_norm: np.ndarray


def write_estimates_csv(path: str, estimate: TrackEstimate) -> None:
    """Write per-step estimates; see _ESTIMATES_HEADER for the columns."""
    trace = estimate.covariances[:, 0, 0] + estimate.covariances[:, 1, 1]

    def body(handle):
        handle.write(_ESTIMATES_MARKER + "\n")
        handle.write(_ESTIMATES_HEADER + "\n")
        for i in range(estimate.num_steps):
            row = [str(int(estimate.steps[i])), _fmt(estimate.times[i])]
            row += [_fmt(v) for v in estimate.states[i]]
            row += [_fmt(trace[i]), _fmt(estimate.ess[i]), _fmt(estimate.log_norm[i])]
            handle.write(",".join(row) + "\n")

    _atomic_write(path, body, binary=False)


def _read_csv_rows(path: str, marker: str, header: str) -> list[list[str]]:
    with open(path, "r", newline="") as handle:
        lines = handle.read().splitlines()
    if not lines or lines[0].strip() != marker:
        raise FormatError(f"{path}: expected marker line {marker!r}")
    if len(lines) < 2 or lines[1].strip() != header:
        raise FormatError(f"{path}: expected header row {header!r}")
    width = len(header.split(","))
    rows = []
    for ln, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != width:
            raise FormatError(f"{path}:{ln}: expected {width} fields, found {len(fields)}")
        rows.append(fields)
    return rows


def _parse_float(path: str, text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise FormatError(f"{path}: bad numeric field {text!r}") from exc


def read_estimates_csv(path: str) -> EstimateTable:
    rows = _read_csv_rows(path, _ESTIMATES_MARKER, _ESTIMATES_HEADER)
    values = np.array(
        [[_parse_float(path, field) for field in row] for row in rows], dtype=np.float64
    ).reshape(len(rows), 11)
    return EstimateTable(
        steps=values[:, 0].astype(np.int64),
        times=values[:, 1],
        states=values[:, 2:8],
        planar_cov_trace=values[:, 8],
        ess=values[:, 9],
        log_norm=values[:, 10],
    )


def write_truth_csv(path: str, track: GroundTruthTrack) -> None:
    def body(handle):
        handle.write(_TRUTH_MARKER + "\n")
        handle.write(_TRUTH_HEADER + "\n")
        for i in range(track.num_steps):
            row = [str(i), _fmt(track.times[i])]
            row += [_fmt(v) for v in track.positions[i]]
            row += [_fmt(v) for v in track.velocities[i]]
            handle.write(",".join(row) + "\n")

    _atomic_write(path, body, binary=False)


def read_truth_csv(path: str) -> GroundTruthTrack:
    rows = _read_csv_rows(path, _TRUTH_MARKER, _TRUTH_HEADER)
    values = np.array(
        [[_parse_float(path, field) for field in row] for row in rows], dtype=np.float64
    ).reshape(len(rows), 8)
    try:
        return GroundTruthTrack(
            times=values[:, 1], positions=values[:, 2:5], velocities=values[:, 5:8]
        )
    except ConfigError as exc:
        raise FormatError(f"{path}: invalid truth table: {exc}") from exc


def write_errors_csv(
    path: str, steps: np.ndarray, errors: np.ndarray, cov_traces: np.ndarray
) -> None:
    def body(handle):
        handle.write(_ERRORS_MARKER + "\n")
        handle.write(_ERRORS_HEADER + "\n")
        for k, err, trace in zip(steps, errors, cov_traces, strict=True):
            handle.write(f"{int(k)},{_fmt(err)},{_fmt(trace)}\n")

    _atomic_write(path, body, binary=False)


def write_cdf_csv(path: str, errors: np.ndarray, frequencies: np.ndarray) -> None:
    def body(handle):
        handle.write(_CDF_MARKER + "\n")
        handle.write(_CDF_HEADER + "\n")
        for err, freq in zip(errors, frequencies, strict=True):
            handle.write(f"{_fmt(err)},{_fmt(freq)}\n")

    _atomic_write(path, body, binary=False)


def write_summary(path: str, summary: dict) -> None:
    """Key-value metrics summary, one `key: value` line per entry."""

    def body(handle):
        handle.write(_SUMMARY_MARKER + "\n")
        for key, value in summary.items():
            if isinstance(value, float):
                handle.write(f"{key}: {_fmt(value)}\n")
            else:
                handle.write(f"{key}: {value}\n")

    _atomic_write(path, body, binary=False)


def read_summary(path: str) -> dict:
    with open(path, "r") as handle:
        lines = handle.read().splitlines()
    if not lines or lines[0].strip() != _SUMMARY_MARKER:
        raise FormatError(f"{path}: expected marker line {_SUMMARY_MARKER!r}")
    summary = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        if ":" not in line:
            raise FormatError(f"{path}: malformed summary line {line!r}")
        key, _, value = line.partition(":")
        value = value.strip()
        try:
            parsed = int(value)
        except ValueError:
            try:
                parsed = float(value)
            except ValueError:
                parsed = value
        summary[key.strip()] = parsed
    return summary
