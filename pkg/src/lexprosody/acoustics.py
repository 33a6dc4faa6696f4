"""Pitch and intensity contours, and per-word acoustic measures.

Pitch follows the autocorrelation method: Hann-windowed frames of three
periods of the pitch floor, the frame autocorrelation divided by that of the
window, one best candidate per frame (no path search). Intensity is the
bell-window weighted mean square in dB re (2e-5)^2, with full scale 1.0
taken as 1 Pa.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile

PITCH_FLOOR = 75.0
PITCH_CEILING = 600.0
VOICING_THRESHOLD = 0.45
OCTAVE_COST = 0.01
SILENCE_THRESHOLD = 0.03
INTENSITY_MIN_PITCH = 100.0
INTENSITY_FLOOR_DB = -300.0
REFERENCE_PRESSURE = 2e-5
_KAISER_BETA = 20.0
_FRAME_BLOCK = 512

ACOUSTICS_COLUMNS = ("turn_id", "word_index", "duration_ms", "max_pitch_hz", "min_pitch_hz",
                     "max_intensity_db", "min_intensity_db", "usable")


class AudioFormatError(ValueError):
    pass


@dataclass
class PitchContour:
    time_step_s: float
    times: np.ndarray
    f0: np.ndarray  # NaN where unvoiced
    floor: float = PITCH_FLOOR
    ceiling: float = PITCH_CEILING

    @property
    def voiced(self) -> np.ndarray:
        return ~np.isnan(self.f0)


@dataclass
class IntensityContour:
    time_step_s: float
    times: np.ndarray
    db: np.ndarray  # INTENSITY_FLOOR_DB marks an all-zero window


@dataclass
class WordAcoustics:
    duration_ms: float
    max_pitch_hz: float | None
    min_pitch_hz: float | None
    max_intensity_db: float | None
    min_intensity_db: float | None
    usable: bool

    @property
    def pitch_range_hz(self):
        if self.max_pitch_hz is None:
            return None
        return self.max_pitch_hz - self.min_pitch_hz

    @property
    def intensity_range_db(self):
        if self.max_intensity_db is None:
            return None
        return self.max_intensity_db - self.min_intensity_db


def read_wav(path) -> tuple:
    """Return ``(samples as float64 in [-1, 1], sample_rate)`` for a mono WAV."""
    sr, data = wavfile.read(path)
    if data.ndim != 1:
        raise AudioFormatError(
            f"{path}: {data.shape[1]} channels; split the channels into separate mono files")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise AudioFormatError(f"{path}: unsupported sample type {data.dtype}")
    return x, int(sr)


def write_wav(path, samples, sample_rate: int) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, sample_rate, pcm)


def _frames(x: np.ndarray, size: int, hop: int) -> np.ndarray:
    if len(x) < size:
        return np.empty((0, size))
    return sliding_window_view(x, size)[::hop]


def parabolic_refine(v_left: float, v_mid: float, v_right: float) -> tuple:
    """Vertex of the parabola through three equally spaced points.

    Returns ``(offset, value)`` with the offset (in samples/frames relative to
    the middle point) clamped to [-1, 1].
    """
    curvature = v_left - 2.0 * v_mid + v_right
    if curvature == 0.0:
        return 0.0, float(v_mid)
    slope = 0.5 * (v_right - v_left)
    offset = -slope / curvature
    offset = min(1.0, max(-1.0, offset))
    return offset, float(v_mid + slope * offset + 0.5 * curvature * offset * offset)


def extract_pitch(samples, sample_rate: int, floor: float = PITCH_FLOOR, ceiling: float = PITCH_CEILING,
                  voicing_threshold: float = VOICING_THRESHOLD, octave_cost: float = OCTAVE_COST,
                  silence_threshold: float = SILENCE_THRESHOLD) -> PitchContour:
    if not 0 < floor < ceiling:
        raise ValueError("need 0 < floor < ceiling")
    if sample_rate < 2 * ceiling:
        raise ValueError("sample rate must be at least twice the pitch ceiling")
    x = np.asarray(samples, dtype=np.float64)
    step = 0.75 / floor
    hop = max(1, int(round(step * sample_rate)))
    size = int(round(3.0 / floor * sample_rate))
    frames = _frames(x, size, hop)
    n = frames.shape[0]
    times = (np.arange(n) * hop + size / 2.0) / sample_rate
    f0 = np.full(n, np.nan)
    if n == 0:
        return PitchContour(hop / sample_rate, times, f0, floor, ceiling)

    window = np.hanning(size)
    nfft = 1 << (2 * size - 1).bit_length()
    w_spec = np.fft.rfft(window, nfft)
    r_w = np.fft.irfft(w_spec * np.conj(w_spec), nfft)[:size]
    r_w /= r_w[0]

    lag_min = sample_rate / ceiling
    lag_max = sample_rate / floor
    max_int_lag = min(int(math.ceil(lag_max)) + 1, size // 2)
    global_peak = np.max(np.abs(x)) if len(x) else 0.0

    for start in range(0, n, _FRAME_BLOCK):
        block = frames[start:start + _FRAME_BLOCK]
        block = block - block.mean(axis=1, keepdims=True)
        peaks = np.max(np.abs(block), axis=1)
        spec = np.fft.rfft(block * window, nfft, axis=1)
        r = np.fft.irfft(spec * np.conj(spec), nfft, axis=1)[:, :max_int_lag + 1]
        energy = r[:, 0].copy()
        with np.errstate(invalid="ignore", divide="ignore"):
            rho = r / energy[:, None] / r_w[None, :max_int_lag + 1]
        for j in range(block.shape[0]):
            if energy[j] <= 0.0 or peaks[j] <= silence_threshold * global_peak:
                continue
            f0[start + j] = _best_candidate(rho[j], sample_rate, lag_min, lag_max, floor,
                                            voicing_threshold, octave_cost)
    return PitchContour(hop / sample_rate, times, f0, floor, ceiling)


def _best_candidate(rho, sample_rate, lag_min, lag_max, floor, threshold, octave_cost) -> float:
    """Return f0 of the strongest in-range lag peak, or NaN.

    A frame whose strongest periodicity lies at a lag shorter than
    ``lag_min`` (a fundamental above the ceiling) is unvoiced, so in-range
    subharmonics of such a tone are not reported.
    """
    k = np.arange(2, len(rho) - 1)
    mid = rho[k]
    is_peak = (mid > rho[k - 1]) & (mid >= rho[k + 1]) & (mid > 0)
    best_in, best_in_strength, best_out_strength = None, -np.inf, -np.inf
    for i in k[is_peak]:
        off, val = parabolic_refine(rho[i - 1], rho[i], rho[i + 1])
        lag = i + off
        strength = val - octave_cost * math.log2(floor * lag / sample_rate)
        if lag < lag_min:
            if val >= threshold:
                best_out_strength = max(best_out_strength, strength)
        elif lag <= lag_max:
            if strength > best_in_strength:
                best_in, best_in_strength = (lag, val), strength
    if best_in is None or best_in[1] < threshold:
        return np.nan
    if best_out_strength >= best_in_strength:
        return np.nan
    return sample_rate / best_in[0]


def extract_intensity(samples, sample_rate: int, min_pitch: float = INTENSITY_MIN_PITCH) -> IntensityContour:
    x = np.asarray(samples, dtype=np.float64)
    effective = 3.2 / min_pitch
    hop = max(1, int(round(effective / 4.0 * sample_rate)))
    size = int(round(2.0 * effective * sample_rate))
    frames = _frames(x, size, hop)
    n = frames.shape[0]
    times = (np.arange(n) * hop + size / 2.0) / sample_rate
    db = np.full(n, INTENSITY_FLOOR_DB)
    window = np.kaiser(size, _KAISER_BETA)
    wsum = window.sum()
    for start in range(0, n, _FRAME_BLOCK):
        block = frames[start:start + _FRAME_BLOCK]
        mean = block @ window / wsum
        centered = block - mean[:, None]
        power = (centered * centered) @ window / wsum
        ok = power > 0.0
        db[start:start + len(block)][ok] = 10.0 * np.log10(power[ok] / REFERENCE_PRESSURE ** 2)
    return IntensityContour(hop / sample_rate, times, db)


def _extremum(values: np.ndarray, valid: np.ndarray, idx: np.ndarray, mode: str) -> float:
    """Max or min over frames ``idx``, parabolically refined with contour neighbours."""
    sub = values[idx]
    i = int(idx[np.argmax(sub)] if mode == "max" else idx[np.argmin(sub)])
    raw = float(values[i])
    if i == 0 or i == len(values) - 1 or not (valid[i - 1] and valid[i + 1]):
        return raw
    left, right = float(values[i - 1]), float(values[i + 1])
    if mode == "max":
        if raw < max(left, right):
            return raw
        return parabolic_refine(left, raw, right)[1]
    if raw > min(left, right):
        return raw
    return -parabolic_refine(-left, -raw, -right)[1]


def word_acoustics(pitch: PitchContour, intensity: IntensityContour, onset_s: float, offset_s: float) -> WordAcoustics:
    """Acoustic measures for the frames whose centres fall in [onset, offset)."""
    duration_ms = (offset_s - onset_s) * 1000.0
    usable = True

    p_in = np.flatnonzero((pitch.times >= onset_s) & (pitch.times < offset_s) & pitch.voiced)
    if len(p_in):
        max_p = _extremum(pitch.f0, pitch.voiced, p_in, "max")
        min_p = _extremum(pitch.f0, pitch.voiced, p_in, "min")
    else:
        max_p = min_p = None
        usable = False

    valid_i = intensity.db > INTENSITY_FLOOR_DB
    i_in = np.flatnonzero((intensity.times >= onset_s) & (intensity.times < offset_s) & valid_i)
    if len(i_in):
        max_i = _extremum(intensity.db, valid_i, i_in, "max")
        min_i = _extremum(intensity.db, valid_i, i_in, "min")
    else:
        max_i = min_i = None
        usable = False
    return WordAcoustics(duration_ms, max_p, min_p, max_i, min_i, usable)


def measure_record_words(pitch: PitchContour, intensity: IntensityContour, records) -> list:
    """Rows ``(turn_id, word_index, WordAcoustics)`` for every word of ``records``."""
    out = []
    for rec in records:
        for k, w in enumerate(rec.words):
            out.append((rec.turn_id, k, word_acoustics(pitch, intensity, w.onset_s, w.offset_s)))
    return out


def _fmt(v) -> str:
    return "NA" if v is None else repr(float(v))


def write_acoustics_tsv(rows, dest) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_acoustics_tsv(rows, fh)
        return
    dest.write("\t".join(ACOUSTICS_COLUMNS) + "\n")
    for turn_id, k, a in rows:
        dest.write("\t".join([turn_id, str(k), _fmt(a.duration_ms), _fmt(a.max_pitch_hz), _fmt(a.min_pitch_hz),
                              _fmt(a.max_intensity_db), _fmt(a.min_intensity_db), str(int(a.usable))]) + "\n")


def read_acoustics_tsv(source) -> dict:
    """``{(turn_id, word_index): WordAcoustics}``."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return read_acoustics_tsv(fh)
    lines = iter(source)
    header = next(lines).rstrip("\n").split("\t")
    if tuple(header) != ACOUSTICS_COLUMNS:
        raise ValueError(f"unexpected acoustics header {header}")

    def num(s):
        return None if s == "NA" else float(s)

    out = {}
    for line in lines:
        if not line.strip():
            continue
        f = line.rstrip("\n").split("\t")
        out[(f[0], int(f[1]))] = WordAcoustics(float(f[2]), num(f[3]), num(f[4]), num(f[5]), num(f[6]), f[7] == "1")
    return out
