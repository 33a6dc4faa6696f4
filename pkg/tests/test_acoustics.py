import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from lexprosody import acoustics as ac

SR = 16000


def tone(freq, seconds=1.0, amp=0.5, sr=SR):
    t = np.arange(int(seconds * sr)) / sr
    return amp * np.sin(2 * np.pi * freq * t)


@pytest.mark.parametrize("freq", [80, 120, 200, 350, 590])
@pytest.mark.parametrize("sr", [8000, 16000])
def test_pure_tone_pitch(freq, sr):
    p = ac.extract_pitch(tone(freq, sr=sr), sr)
    assert p.time_step_s == pytest.approx(0.01)
    v = p.f0[p.voiced]
    assert len(v) >= 0.95 * len(p.f0)
    assert np.mean(np.abs(v / freq - 1) < 0.01) >= 0.95


def test_silence_unvoiced():
    p = ac.extract_pitch(np.zeros(SR), SR)
    assert len(p.f0) > 0 and not p.voiced.any()


def test_tone_above_ceiling_unvoiced():
    p = ac.extract_pitch(tone(1000), SR)
    assert not p.voiced.any()


def test_no_octave_errors_at_200():
    p = ac.extract_pitch(tone(200) + 0.01 * np.random.default_rng(0).standard_normal(SR), SR)
    v = p.f0[p.voiced]
    assert not np.any(np.abs(v / 100 - 1) < 0.05)
    assert not np.any(np.abs(v / 400 - 1) < 0.05)


def test_short_signal_empty_contour():
    p = ac.extract_pitch(tone(200, seconds=0.02), SR)
    assert len(p.f0) == 0
    i = ac.extract_intensity(tone(200, seconds=0.02), SR)
    assert len(i.db) == 0


def test_pitch_rejects_low_sample_rate():
    with pytest.raises(ValueError):
        ac.extract_pitch(np.zeros(1000), 1000)


def test_intensity_halving_amplitude():
    a = ac.extract_intensity(tone(200), SR)
    b = ac.extract_intensity(tone(200, amp=0.25), SR)
    assert a.time_step_s == pytest.approx(0.008)
    assert np.allclose(a.db - b.db, 20 * math.log10(2), atol=0.1)


def test_intensity_absolute_level():
    # mean square of a sine is A^2/2
    a = ac.extract_intensity(tone(200), SR)
    assert a.db[len(a.db) // 2] == pytest.approx(10 * math.log10(0.125 / 4e-10), abs=0.01)


def test_intensity_silence_sentinel():
    i = ac.extract_intensity(np.zeros(SR), SR)
    assert np.all(i.db == ac.INTENSITY_FLOOR_DB)


def test_intensity_stationary_sine():
    db = ac.extract_intensity(tone(150), SR).db
    interior = db[2:-2]
    assert interior.max() - interior.min() < 0.2


@pytest.mark.parametrize("gain", [0.1, 0.5, 2.0])
def test_intensity_linearity(gain):
    x = tone(220, amp=0.3) * np.linspace(0.2, 1.0, SR)
    a = ac.extract_intensity(x, SR)
    b = ac.extract_intensity(gain * x, SR)
    assert np.allclose(b.db - a.db, 20 * math.log10(gain), atol=0.01)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=1, max_value=6))
def test_shift_invariance(k):
    rng = np.random.default_rng(k)
    x = tone(180, seconds=0.6) * (0.5 + 0.5 * rng.random()) + 0.01 * rng.standard_normal(int(0.6 * SR))
    p, i = ac.extract_pitch(x, SR), ac.extract_intensity(x, SR)
    p_hop = int(round(p.time_step_s * SR))
    i_hop = int(round(i.time_step_s * SR))
    p2 = ac.extract_pitch(np.concatenate([np.zeros(k * p_hop), x]), SR)
    i2 = ac.extract_intensity(np.concatenate([np.zeros(k * i_hop), x]), SR)
    assert np.array_equal(p2.f0[k:], p.f0, equal_nan=True)
    assert np.allclose(p2.times[k:], p.times + k * p.time_step_s)
    assert np.array_equal(i2.db[k:], i.db)


def test_parabolic_refine_examples():
    assert ac.parabolic_refine(1, 3, 1) == (0.0, 3.0)
    off, val = ac.parabolic_refine(1, 3, 2)
    # oracle: least-squares quadratic through the three points
    a, b, c = np.polyfit([-1, 0, 1], [1, 3, 2], 2)
    assert off == pytest.approx(-b / (2 * a), abs=1e-12) == pytest.approx(1 / 6)
    assert val == pytest.approx(c - b * b / (4 * a), abs=1e-12) == pytest.approx(3 + 1 / 24)
    assert ac.parabolic_refine(2, 2, 2) == (0.0, 2.0)


@given(st.floats(-50, 50), st.floats(0, 20), st.floats(0, 20))
def test_parabolic_refine_peak_property(mid, dl, dr):
    off, val = ac.parabolic_refine(mid - dl, mid, mid - dr)
    assert -1.0 <= off <= 1.0
    assert val >= mid - 1e-9


def _word_setup(x):
    return ac.extract_pitch(x, SR), ac.extract_intensity(x, SR)


def test_word_on_steady_tone():
    p, i = _word_setup(tone(200))
    w = ac.word_acoustics(p, i, 0.25, 0.75)
    assert w.duration_ms == pytest.approx(500.0)
    assert w.usable
    assert w.max_pitch_hz == pytest.approx(200, rel=0.01)
    assert w.min_pitch_hz == pytest.approx(200, rel=0.01)
    assert w.pitch_range_hz == pytest.approx(0, abs=1.0)


def test_word_without_voicing_unusable():
    x = np.concatenate([np.zeros(SR // 2), tone(200, 0.5)])
    p, i = _word_setup(x)
    w = ac.word_acoustics(p, i, 0.1, 0.4)
    assert not w.usable
    assert w.max_pitch_hz is None and w.min_pitch_hz is None


def test_word_ramp_intensity():
    x = tone(200) * np.linspace(0.05, 1.0, SR)
    p, i = _word_setup(x)
    on, off = 0.2, 0.8
    w = ac.word_acoustics(p, i, on, off)
    inside = np.flatnonzero((i.times >= on) & (i.times < off))
    assert np.argmax(i.db[inside]) == len(inside) - 1
    assert w.intensity_range_db > 0
    assert w.max_intensity_db >= i.db[inside].max()


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.6), st.floats(0.1, 0.35), st.integers(0, 10_000))
def test_refined_extrema_bracket_raw(on, dur, seed):
    rng = np.random.default_rng(seed)
    x = tone(150 + 100 * rng.random()) * (0.3 + rng.random(SR)) * 0.5
    p, i = _word_setup(x)
    w = ac.word_acoustics(p, i, on, on + dur)
    inside = (i.times >= on) & (i.times < on + dur)
    assert w.max_intensity_db >= i.db[inside].max()
    assert w.min_intensity_db <= i.db[inside].min()
    pin = inside_p = (p.times >= on) & (p.times < on + dur) & p.voiced
    if pin.any():
        assert w.max_pitch_hz >= p.f0[inside_p].max()
        assert w.min_pitch_hz <= p.f0[inside_p].min()


def test_wav_roundtrip_and_stereo(tmp_path):
    x = tone(200, 0.1)
    path = tmp_path / "a.wav"
    ac.write_wav(path, x, SR)
    y, sr = ac.read_wav(path)
    assert sr == SR and np.max(np.abs(y - x)) < 1e-4
    from scipy.io import wavfile
    wavfile.write(tmp_path / "s.wav", SR, np.zeros((100, 2), dtype=np.int16))
    with pytest.raises(ac.AudioFormatError, match="split"):
        ac.read_wav(tmp_path / "s.wav")


def test_acoustics_tsv_roundtrip(tmp_path):
    rows = [("t1", 0, ac.WordAcoustics(212.5, 210.1, 180.0, 70.2, 52.0, True)),
            ("t1", 1, ac.WordAcoustics(100.0, None, None, 60.0, 55.5, False))]
    ac.write_acoustics_tsv(rows, tmp_path / "a.tsv")
    back = ac.read_acoustics_tsv(tmp_path / "a.tsv")
    assert back == {(t, k): a for t, k, a in rows}
