"""Binary time-tag files and the CSV outputs of the analysis chain.

Time-tag file layout (little-endian)::

    header   magic "SFWM" | version u16 | tick_ps u32 | n_detectors u8
             | n_trials u32 | trial_ticks u64
    trial    trial_index u32 | n_records u32
    record   detector u8 | ticks u64          (sorted by detector, then time)

Detector codes are indices into ``("1a", "1b", "2a", "2b")``.
"""

from __future__ import annotations

import csv
import math
import re
import struct
from pathlib import Path

import numpy as np

from .correlator import CorrelationCurve
from .emission import DETECTORS, TimeTagStream

MAGIC = b"SFWM"
VERSION = 1
_HEADER = struct.Struct("<4sHIBIQ")
_BLOCK = struct.Struct("<II")
RECORD = np.dtype([("det", "<u1"), ("t", "<u8")])


class MalformedFileError(ValueError):
    """Corrupt or truncated time-tag file; ``offset`` is the bad byte position."""

    def __init__(self, message, offset):
        self.offset = int(offset)
        super().__init__(f"{message} (byte offset {self.offset})")


def encode_tags(streams):
    """Serialise four :class:`TimeTagStream` objects to bytes."""
    ref = streams[DETECTORS[0]]
    for d in DETECTORS:
        if not streams[d].same_structure(ref):
            raise ValueError("streams differ in tick or trial structure")
    tick_ps = int(round(ref.tick * 1e12))
    parts = [_HEADER.pack(MAGIC, VERSION, tick_ps, len(DETECTORS), ref.n_trials, ref.trial_ticks)]
    for k in range(ref.n_trials):
        chunks = [streams[d].trial(k) for d in DETECTORS]
        n = sum(c.size for c in chunks)
        rec = np.empty(n, dtype=RECORD)
        rec["det"] = np.repeat(np.arange(len(DETECTORS), dtype=np.uint8), [c.size for c in chunks])
        rec["t"] = np.concatenate(chunks) if n else np.empty(0, np.uint64)
        parts.append(_BLOCK.pack(k, n))
        parts.append(rec.tobytes())
    return b"".join(parts)


def write_tags(path, streams):
    Path(path).write_bytes(encode_tags(streams))


def decode_tags(data):
    """Parse bytes produced by :func:`encode_tags`.

    Raises
    ------
    MalformedFileError
        On a bad magic, version or detector count, a truncated block, an
        unknown detector code or tags out of order.
    """
    data = memoryview(data)
    if len(data) < _HEADER.size:
        raise MalformedFileError("file shorter than header", len(data))
    magic, version, tick_ps, n_det, n_trials, trial_ticks = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise MalformedFileError(f"bad magic {bytes(magic)!r}", 0)
    if version != VERSION:
        raise MalformedFileError(f"unsupported version {version}", 4)
    if n_det != len(DETECTORS):
        raise MalformedFileError(f"expected {len(DETECTORS)} detectors, found {n_det}", 10)
    if tick_ps == 0:
        raise MalformedFileError("tick resolution is zero", 6)
    pos = _HEADER.size
    per_det = [[] for _ in DETECTORS]
    for k in range(n_trials):
        if pos + _BLOCK.size > len(data):
            raise MalformedFileError(f"truncated header of trial {k}", pos)
        index, n = _BLOCK.unpack_from(data, pos)
        if index != k:
            raise MalformedFileError(f"trial index {index}, expected {k}", pos)
        pos += _BLOCK.size
        end = pos + n * RECORD.itemsize
        if end > len(data):
            bad = pos + ((len(data) - pos) // RECORD.itemsize) * RECORD.itemsize
            raise MalformedFileError(f"trial {k} declares {n} records but the file ends", bad)
        rec = np.frombuffer(data[pos:end], dtype=RECORD)
        det = rec["det"].astype(np.int64)
        t = rec["t"]
        bad = np.flatnonzero(det >= len(DETECTORS))
        if bad.size == 0:
            # sorted by (detector, time); timestamps inside the trial window
            order_bad = np.flatnonzero((np.diff(det) < 0)
                                       | ((np.diff(det) == 0) & (np.diff(t.astype(np.int64)) < 0))) + 1
            range_bad = np.flatnonzero(t > trial_ticks)
            bad = np.union1d(order_bad, range_bad)
        if bad.size:
            raise MalformedFileError(f"bad record in trial {k}", pos + int(bad[0]) * RECORD.itemsize)
        bounds = np.searchsorted(det, np.arange(len(DETECTORS) + 1))
        for i in range(len(DETECTORS)):
            per_det[i].append(t[bounds[i]:bounds[i + 1]].astype(np.int64))
        pos = end
    if pos != len(data):
        raise MalformedFileError("trailing bytes after last trial", pos)
    tick = tick_ps * 1e-12
    return {d: TimeTagStream.from_trials(d, per_det[i], tick, trial_ticks)
            for i, d in enumerate(DETECTORS)}


def read_tags(path):
    return decode_tags(Path(path).read_bytes())


# --------------------------------------------------------------------------
# CSV outputs


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _write_rows(path, header_lines, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def _read_rows(path):
    meta, rows, columns = {}, [], None
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                for key, val in re.findall(r"(\w+)=(\S+)", line):
                    meta[key] = val
                continue
            if columns is None:
                columns = next(csv.reader([line]))
            else:
                rows.append(next(csv.reader([line])))
    if columns is None:
        raise ValueError(f"{path}: no column header")
    return meta, columns, rows


def curve_filename(pair):
    return f"g_{pair}.csv"


def write_curve(path, curve):
    """``delay_ns, g2, counts, sigma``; empty bins carry ``sigma = nan``."""
    tick_ns = curve.tick * 1e9
    head = [f"pair={curve.pair} bin_ns={_fmt(curve.bin_width * tick_ns)} "
            f"max_delay_ns={_fmt(curve.max_delay * tick_ns)} singles_i={curve.singles_i} "
            f"singles_j={curve.singles_j} live_time_s={_fmt(curve.live_time)} "
            f"tick_ps={int(round(curve.tick * 1e12))}"]
    rows = zip(curve.delays_ns, curve.values, curve.raw_counts, curve.sigma)
    _write_rows(path, head, ["delay_ns", "g2", "counts", "sigma"], rows)


def read_curve(path):
    """Inverse of :func:`write_curve`."""
    meta, _, rows = _read_rows(path)
    try:
        tick = int(meta["tick_ps"]) * 1e-12
        bw = int(round(float(meta["bin_ns"]) * 1e-9 / tick))
        md = int(round(float(meta["max_delay_ns"]) * 1e-9 / tick))
        arr = np.array(rows, dtype=float).reshape(-1, 4)
        edges = np.arange(-md, md + 1, bw, dtype=np.int64)
        if edges.size - 1 != arr.shape[0]:
            raise ValueError("row count does not match binning")
        return CorrelationCurve(meta["pair"], edges, arr[:, 1], arr[:, 2].astype(np.int64),
                                arr[:, 3], int(meta["singles_i"]), int(meta["singles_j"]),
                                float(meta["live_time_s"]), tick)
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: not a correlation curve file ({exc})") from exc


def write_spectrum(path, spectrum):
    head = [f"field={spectrum.field_id} resolution_hz={_fmt(spectrum.resolution)}"]
    _write_rows(path, head, ["freq_hz", "magnitude"], zip(spectrum.freq, spectrum.magnitude))


def write_cs_curve(path, result):
    head = [f"rbar_max={_fmt(result.rbar_max)} sigma={_fmt(result.rbar_max_sigma)} "
            f"delay_ns={_fmt(result.rbar_max_delay * result.tick * 1e9)}"]
    rows = zip(result.delays_ns, result.r1, result.r2, result.rbar, result.sigma)
    _write_rows(path, head, ["delay_ns", "r1", "r2", "rbar", "sigma"], rows)


def write_sweep(path, points):
    rows = [(p.delta_over_gamma, p.alpha, p.rbar_max, p.sigma, int(p.filtered), p.arm, p.status)
            for p in points]
    _write_rows(path, [], ["delta_over_gamma", "alpha", "rbar_max", "sigma", "filtered", "arm",
                           "status"], rows)


def read_table(path):
    """Generic reader: ``(meta dict, column names, list of string rows)``."""
    return _read_rows(path)
