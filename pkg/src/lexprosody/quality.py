"""Blind SNR estimation and chunk gating.

Two reference-free estimators are combined: WADA-SNR (amplitude
distribution statistic inverted through a gamma/Gaussian lookup table) and
an energy-histogram estimate in the style of the NIST tool (speech peak
minus noise floor of short-time frame energies). Chunks are then gated on
their z-scores.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .wada_table import DB_TABLE, G_TABLE

WADA_CAP = 100.0
WADA_EPS = 1e-10
# G below this is sub-Gaussian (tone-like): outside the speech+noise model,
# and treated as noise-free, i.e. the cap. Gaussian noise sits at G_GAUSSIAN.
SUBGAUSSIAN_G = 0.33

NIST_FRAME_S = 0.020
NIST_HOP_S = 0.010
NIST_FLOOR_PCT = 15.0
NIST_PEAK_PCT = 95.0
NIST_DYNAMIC_RANGE_DB = 120.0

KEEP = "keep"
DROP_TONE_LIKE = "drop_tone_like"
DROP_NOISY = "drop_noisy"
DROP_MOBILE = "drop_mobile"
DROP_ANNOTATION = "drop_annotation"
DECISIONS = (KEEP, DROP_TONE_LIKE, DROP_NOISY, DROP_MOBILE, DROP_ANNOTATION)

MANIFEST_COLUMNS = ("chunk_id", "wada_db", "nist_db", "wada_z", "nist_z", "decision")

_G = np.asarray(G_TABLE)
_DB = np.asarray(DB_TABLE, dtype=float)


class NoSignalError(ValueError):
    pass


@dataclass(frozen=True)
class Thresholds:
    tone_nist_z: float = 2.5
    noisy_nist_z: float = -1.0
    noisy_wada_z: float = -1.0

    @classmethod
    def parse(cls, text: str) -> "Thresholds":
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError("expected three comma-separated thresholds: tone_nist_z,noisy_nist_z,noisy_wada_z")
        return cls(*parts)


@dataclass
class Chunk:
    chunk_id: str
    speaker_id: str
    wada_db: float
    nist_db: float
    flagged: bool = False  # masked / unclear / noise annotations


@dataclass
class SnrReport:
    chunk_id: str
    wada_db: float | None  # None when the chunk has no audio or no signal
    nist_db: float | None
    wada_z: float | None = None
    nist_z: float | None = None
    decision: str = KEEP


def wada_statistic(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise NoSignalError("no signal: empty input")
    x = x - x.mean()
    peak = np.max(np.abs(x))
    if peak == 0.0:
        raise NoSignalError("no signal: all samples are zero")
    a = np.abs(x / peak)
    a[a < WADA_EPS] = WADA_EPS
    return math.log(max(WADA_EPS, a.mean())) - float(np.log(a).mean())


def _is_subgaussian(samples) -> bool:
    # exact zeros (sampling a sinusoid at its crossings) are left out here;
    # they would otherwise push a tone's statistic back into the table range
    x = np.asarray(samples, dtype=np.float64)
    x = x - x.mean()
    nz = x[np.abs(x) > WADA_EPS * np.max(np.abs(x))]
    return nz.size > 0 and wada_statistic(nz) < SUBGAUSSIAN_G


def wada_snr(samples) -> float:
    """Blind SNR in dB, clamped to [-20, 100]."""
    g = wada_statistic(samples)
    if _is_subgaussian(samples):
        return WADA_CAP
    if g >= _G[-1]:
        return WADA_CAP
    if g <= _G[0]:
        return float(_DB[0])
    return float(np.interp(g, _G, _DB))


def nist_snr(samples, sample_rate: int) -> float:
    """Peak-minus-floor frame energy (dB) over 20 ms frames with a 10 ms hop."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0 or not np.any(x):
        raise NoSignalError("no signal: all samples are zero")
    size = max(1, int(round(NIST_FRAME_S * sample_rate)))
    hop = max(1, int(round(NIST_HOP_S * sample_rate)))
    if len(x) < size:
        frames = x[None, :]
    else:
        frames = np.lib.stride_tricks.sliding_window_view(x, size)[::hop]
    power = np.var(frames, axis=1)  # per-frame DC removal
    top = power.max()
    if top <= 0.0:
        raise NoSignalError("no signal: all samples are zero")
    power = np.maximum(power, top * 10.0 ** (-NIST_DYNAMIC_RANGE_DB / 10.0))
    db = 10.0 * np.log10(power)
    return float(np.percentile(db, NIST_PEAK_PCT) - np.percentile(db, NIST_FLOOR_PCT))


def _zscores(values: list) -> list:
    arr = np.asarray(values, dtype=float)
    if len(arr) < 2:
        raise ValueError(f"need at least 2 z-scorable chunks, got {len(arr)}")
    sd = arr.std(ddof=1)
    if not sd > 0:
        raise ValueError("constant SNR values cannot be z-scored")
    return list((arr - arr.mean()) / sd)


def classify(report: SnrReport, flagged: bool, thresholds: Thresholds = Thresholds()) -> str:
    """Apply the tone, noise and annotation rules to one z-scored chunk."""
    if report.nist_z is not None and report.nist_z > thresholds.tone_nist_z and report.wada_db >= WADA_CAP:
        return DROP_TONE_LIKE
    if (report.nist_z is not None and report.wada_z is not None
            and report.nist_z < thresholds.noisy_nist_z and report.wada_z < thresholds.noisy_wada_z):
        return DROP_NOISY
    if flagged:
        return DROP_ANNOTATION
    return KEEP


def gate(chunks: list, speakers: dict, thresholds: Thresholds = Thresholds()) -> list:
    """Decide every chunk. Mobile-phone chunks are removed before z-scoring.

    NIST z-scores use all remaining chunks; WADA z-scores leave out chunks at
    the 100 dB cap. Output order follows input order.
    """
    reports = [SnrReport(c.chunk_id, c.wada_db, c.nist_db) for c in chunks]
    pool = []
    for c, r in zip(chunks, reports):
        meta = speakers.get(c.speaker_id)
        if meta is None:
            raise KeyError(f"chunk {c.chunk_id!r}: speaker {c.speaker_id!r} has no metadata")
        if meta.phone_type == "mobile":
            r.decision = DROP_MOBILE
        else:
            pool.append((c, r))
    for (_, r), z in zip(pool, _zscores([r.nist_db for _, r in pool])):
        r.nist_z = float(z)
    uncapped = [(c, r) for c, r in pool if r.wada_db < WADA_CAP]
    for (_, r), z in zip(uncapped, _zscores([r.wada_db for _, r in uncapped])):
        r.wada_z = float(z)
    for c, r in pool:
        r.decision = classify(r, c.flagged, thresholds)
    return reports


def _fmt(v) -> str:
    return "NA" if v is None else repr(float(v))


def write_manifest(reports: list, dest) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_manifest(reports, fh)
        return
    dest.write("\t".join(MANIFEST_COLUMNS) + "\n")
    for r in reports:
        dest.write("\t".join([r.chunk_id, _fmt(r.wada_db), _fmt(r.nist_db), _fmt(r.wada_z), _fmt(r.nist_z),
                              r.decision]) + "\n")


def read_manifest(source) -> dict:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return read_manifest(fh)
    lines = iter(source)
    header = tuple(next(lines).rstrip("\n").split("\t"))
    if header != MANIFEST_COLUMNS:
        raise ValueError(f"unexpected manifest header {header}")

    def num(s):
        return None if s == "NA" else float(s)

    out = {}
    for line in lines:
        if line.strip():
            f = line.rstrip("\n").split("\t")
            if f[5] not in DECISIONS:
                raise ValueError(f"chunk {f[0]!r}: unknown decision {f[5]!r}")
            out[f[0]] = SnrReport(f[0], num(f[1]), num(f[2]), num(f[3]), num(f[4]), f[5])
    return out
