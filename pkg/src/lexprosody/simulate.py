"""Synthetic data with known ground truth.

Two generators:

* ``mixed_model_table`` draws an analysis table straight from the mixed model
  (crossed word/tone intercepts, correlated speaker slopes), for testing the
  fitter in isolation.
* ``simulate_dataset`` builds a whole corpus: a Zipfian/Markov lexical
  corpus, two-speaker dialogues with pauses, disfluencies and flags, speaker
  metadata, per-word acoustic values from a known model with informativity
  effects, and optionally audio synthesised to match those values.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import acoustics as ac
from . import corpus_io as cio
from . import ngram

# -- table-level generator -------------------------------------------------------


def mixed_model_table(rng, n=5000, n_speakers=50, n_words=200, n_tones=10, beta=(1.0, 0.02, 0.01, 0.0),
                      sd_word=0.1, sd_tone=0.05, speaker_cov=((0.04, 0.005, 0.0), (0.005, 0.0025, 0.0),
                                                               (0.0, 0.0, 0.0025)), sigma=0.2):
    """Rows from ``y = b0 + b1 fwd + b2 bwd + b3 x + word + tone + speaker(1, fwd, bwd) + e``.

    Predictors are standard normal; ``x`` is a nuisance covariate. Returns the
    table (dict of columns) and the true parameters.
    """
    spk = rng.integers(n_speakers, size=n)
    wd = rng.integers(n_words, size=n)
    tn = rng.integers(n_tones, size=n)
    fwd, bwd, x = rng.standard_normal((3, n))
    b_spk = rng.multivariate_normal(np.zeros(3), np.asarray(speaker_cov), size=n_speakers)
    y = (beta[0] + beta[1] * fwd + beta[2] * bwd + beta[3] * x
         + sd_word * rng.standard_normal(n_words)[wd] + sd_tone * rng.standard_normal(n_tones)[tn]
         + b_spk[spk, 0] + b_spk[spk, 1] * fwd + b_spk[spk, 2] * bwd + sigma * rng.standard_normal(n))
    table = {
        "y": y, "fwd_inf_z": fwd, "bwd_inf_z": bwd, "x": x,
        "speaker_id": [f"s{i:03d}" for i in spk],
        "word_type": [f"w{i:04d}" for i in wd],
        "tone_sequence": [f"t{i:02d}" for i in tn],
    }
    truth = {"beta": dict(zip(("(Intercept)", "fwd_inf_z", "bwd_inf_z", "x"), beta)), "sigma": sigma,
             "sd_word": sd_word, "sd_tone": sd_tone}
    return Table(table), truth


class Table(dict):
    """dict of columns with the ``take`` used by model criticism."""

    def take(self, index):
        index = np.asarray(index)
        return Table({k: (v[index] if isinstance(v, np.ndarray) else [v[i] for i in index])
                      for k, v in self.items()})


# -- corpus-level generator ------------------------------------------------------

INITIALS = ("b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x", "zh", "ch", "sh", "r", "z", "c", "s")
FINALS = ("a", "o", "e", "i", "u", "ai", "ei", "ao", "ou", "an", "en", "ang", "eng", "ong", "ia", "ie", "iu", "ui")
POS_MIX = (  # (tag, share of the vocabulary)
    ("n", 0.30), ("v", 0.22), ("a", 0.08), ("d", 0.06), ("t", 0.02), ("s", 0.01), ("f", 0.01), ("b", 0.01),
    ("z", 0.01), ("r", 0.02), ("m", 0.015), ("q", 0.015), ("p", 0.015), ("c", 0.01), ("u", 0.01), ("y", 0.005),
    ("nr", 0.03), ("ns", 0.01), ("e", 0.02), ("o", 0.01), ("x", 0.03),
)
FUNCTION_BOOST = 1.5  # function words are drawn from the frequent end of the Zipf ranking

DEFAULT_EFFECTS = {  # per SD of informativity (in bits)
    "dur_log10_ms": {"fwd": 0.02, "bwd": 0.01},
    "max_pitch_log10_hz": {"fwd": 0.01, "bwd": -0.005},
    "pitch_range_log10_hz": {"fwd": 0.0, "bwd": 0.0},
    "max_intensity_db": {"fwd": 0.5, "bwd": 0.2},
    "intensity_range_db": {"fwd": 0.0, "bwd": 0.0},
}
# (intercept, residual SD, word SD, tone SD, speaker SD, length slope per phone, male offset)
DEPENDENT_MODEL = {
    "dur_log10_ms": (2.33, 0.08, 0.05, 0.02, 0.03, 0.03, -0.01),
    "max_pitch_log10_hz": (2.33, 0.05, 0.02, 0.02, 0.04, 0.005, -0.2),
    "pitch_range_log10_hz": (1.3, 0.15, 0.05, 0.05, 0.05, 0.02, 0.0),
    "max_intensity_db": (70.0, 3.0, 1.0, 0.5, 2.0, 0.3, 0.0),
    "intensity_range_db": (14.0, 3.0, 1.0, 0.5, 1.0, 0.5, 0.0),
}
SPEAKER_SLOPE_SD = 0.3  # speaker slope SD, as a fraction of |fixed effect| (at least 1e-3)


@dataclass
class SimulationConfig:
    seed: int = 1
    n_types: int = 300
    zipf_exponent: float = 1.05
    corpus_lines: int = 20_000
    n_dialogues: int = 8
    turns_per_dialogue: int = 60
    mobile_fraction: float = 0.15
    successors: int = 8
    preferred_share: float = 0.6
    effects: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_EFFECTS)))
    audio: bool = False
    sample_rate: int = 8000
    tone_chunks: int = 1  # turns replaced by a tone burst in digital silence (audio only)


@dataclass
class Vocabulary:
    surface: list
    pos: list
    tones: list
    syllables: np.ndarray
    phones: list
    unigram: np.ndarray  # Zipf probabilities in index order
    succ: np.ndarray  # preferred successors, n_types x K
    succ_cum: np.ndarray  # cumulative weights over succ


def make_vocabulary(rng, cfg: SimulationConfig) -> Vocabulary:
    n = cfg.n_types
    seen, surface, tones, syllables, phones = set(), [], [], [], []
    while len(surface) < n:
        k = int(rng.choice([1, 2, 2, 2, 3]))
        sylls = [(INITIALS[rng.integers(len(INITIALS))], FINALS[rng.integers(len(FINALS))]) for _ in range(k)]
        word = "".join(i + f for i, f in sylls)
        if word in seen:
            continue
        seen.add(word)
        surface.append(word)
        tones.append("-".join(str(int(t)) for t in rng.integers(1, 5, size=k)))
        syllables.append(k)
        ph = []
        for i, f in sylls:
            ph.append(i)
            ph.extend([f] if len(f) == 1 or rng.random() < 0.5 else list(f[:2]))
        phones.append(tuple(ph))
    tags = [t for t, _ in POS_MIX]
    share = np.array([s for _, s in POS_MIX])
    pos = list(rng.choice(tags, size=n, p=share / share.sum()))
    # rank order: function words get a head start toward the frequent end
    score = rng.random(n) * np.array([FUNCTION_BOOST if t in "rmqpcuy" else 1.0 for t in pos])
    order = np.argsort(-score)
    ranks = np.empty(n, dtype=int)
    ranks[order] = np.arange(n)
    unigram = 1.0 / (ranks + 1.0) ** cfg.zipf_exponent
    unigram /= unigram.sum()
    K = min(cfg.successors, n)
    succ = np.stack([rng.choice(n, size=K, replace=False, p=unigram) for _ in range(n)])
    w = rng.dirichlet(np.full(K, 0.5), size=n)
    return Vocabulary(surface, pos, tones, np.array(syllables), phones, unigram, succ, np.cumsum(w, axis=1))


def sample_sequences(rng, vocab: Vocabulary, lengths, preferred_share: float) -> list:
    """Markov chains: a preferred successor with prob ``preferred_share``, else a Zipf draw."""
    lengths = np.asarray(lengths)
    L = len(lengths)
    cum = np.cumsum(vocab.unigram)
    cum[-1] = 1.0
    seqs = np.empty((L, int(lengths.max())), dtype=np.int64)
    seqs[:, 0] = np.searchsorted(cum, rng.random(L), side="right")
    for j in range(1, seqs.shape[1]):
        cur = seqs[:, j - 1]
        zipf = np.searchsorted(cum, rng.random(L), side="right")
        u = rng.random(L)[:, None]
        pick = np.minimum((u > vocab.succ_cum[cur]).sum(axis=1), vocab.succ.shape[1] - 1)
        pref = vocab.succ[cur, pick]
        seqs[:, j] = np.where(rng.random(L) < preferred_share, pref, zipf)
    return [list(seqs[i, :lengths[i]]) for i in range(L)]


def _speaker_table(rng, cfg: SimulationConfig) -> list:
    out = []
    for d in range(cfg.n_dialogues):
        for s in "AB":
            out.append(cio.SpeakerMeta(f"d{d:02d}{s}", int(rng.integers(18, 50)),
                                       "Male" if rng.random() < 0.5 else "Female",
                                       "mobile" if rng.random() < cfg.mobile_fraction else "landline"))
    # keep both genders and both phone types present
    if len({m.gender for m in out}) < 2:
        out[0] = cio.SpeakerMeta(out[0].speaker_id, out[0].age, "Male" if out[0].gender == "Female" else "Female",
                                 out[0].phone_type)
    return out


def _flags(rng, pos: str) -> frozenset:
    f = set()
    u = rng.random()
    if u < 0.02:
        f.add("partial")
    elif u < 0.025:
        f.add("mispronounced")
    elif u < 0.03:
        f.add("acronym")
    elif u < 0.035:
        f.add("foreign")
    elif u < 0.038:
        f.add("masked_by_noise")
    if pos == "e" and rng.random() < 0.7:
        f.add("filled_pause")
    return frozenset(f)


def simulate_dataset(cfg: SimulationConfig) -> dict:
    """Generate everything in memory. Keys: corpus, dialogues, speakers, acoustics, truth, audio."""
    rng = np.random.default_rng(cfg.seed)
    vocab = make_vocabulary(rng, cfg)
    lengths = rng.integers(3, 16, size=cfg.corpus_lines)
    corpus = [[vocab.surface[i] for i in s] for s in sample_sequences(rng, vocab, lengths, cfg.preferred_share)]
    stats = ngram.count_corpus(corpus)

    inf = {}
    for d, key in ((ngram.FORWARD, "fwd"), (ngram.BACKWARD, "bwd")):
        vals = np.full(cfg.n_types, np.nan)
        for i, w in enumerate(vocab.surface):
            try:
                vals[i] = ngram.informativity(stats, w, d)
            except ngram.NoContextsError:
                pass
        inf[key] = vals

    speakers = _speaker_table(rng, cfg)
    by_id = {m.speaker_id: m for m in speakers}
    deps = list(DEPENDENT_MODEL)
    word_fx = {d: rng.standard_normal(cfg.n_types) * DEPENDENT_MODEL[d][2] for d in deps}
    tone_types = sorted(set(vocab.tones))
    tone_fx = {d: dict(zip(tone_types, rng.standard_normal(len(tone_types)) * DEPENDENT_MODEL[d][3])) for d in deps}
    spk_fx = {}
    for m in speakers:
        spk_fx[m.speaker_id] = {d: (rng.standard_normal() * DEPENDENT_MODEL[d][4],
                                    rng.standard_normal() * max(1e-3, SPEAKER_SLOPE_SD * abs(cfg.effects[d]["fwd"])),
                                    rng.standard_normal() * max(1e-3, SPEAKER_SLOPE_SD * abs(cfg.effects[d]["bwd"])))
                                for d in deps}

    # turn word sequences, sampled from the same chain
    n_turns = cfg.n_dialogues * cfg.turns_per_dialogue
    turn_seqs = sample_sequences(rng, vocab, rng.integers(4, 15, size=n_turns), cfg.preferred_share)
    ref = {k: (float(np.nanmean(v[np.concatenate(turn_seqs)])), float(np.nanstd(v[np.concatenate(turn_seqs)])))
           for k, v in inf.items()}

    dialogues, acoustics = {}, {}
    seq_iter = iter(turn_seqs)
    for d in range(cfg.n_dialogues):
        did = f"d{d:02d}"
        records, t = [], 0.0
        for k in range(cfg.turns_per_dialogue):
            spk = f"{did}{'AB'[k % 2]}"
            meta = by_id[spk]
            turn_id = f"{did}_{k:03d}"
            start = t
            cursor = start + 0.05
            words, events, vals = [], [], []
            for pos_i, wi in enumerate(next(seq_iter)):
                z = {key: ((inf[key][wi] - ref[key][0]) / ref[key][1]) if np.isfinite(inf[key][wi]) else 0.0
                     for key in inf}
                y = {}
                for dep in deps:
                    mu, sd, _, _, _, len_slope, male = DEPENDENT_MODEL[dep]
                    s0, s1, s2 = spk_fx[spk][dep]
                    eff = cfg.effects[dep]
                    y[dep] = (mu + (eff["fwd"] + s1) * z["fwd"] + (eff["bwd"] + s2) * z["bwd"]
                              + len_slope * (len(vocab.phones[wi]) - 5) + (male if meta.gender == "Male" else 0.0)
                              + word_fx[dep][wi] + tone_fx[dep][vocab.tones[wi]] + s0 + sd * rng.standard_normal())
                dur = 10 ** y["dur_log10_ms"] / 1000.0
                if pos_i > 0:
                    u = rng.random()
                    if u < 0.05:  # long pause, splits the speech-rate region
                        gap = rng.uniform(0.5, 0.9)
                        events.append(("pause", "sp", cursor, cursor + gap))
                        cursor += gap
                    elif u < 0.20:
                        gap = float(np.exp(rng.normal(math.log(0.12), 0.7)))
                        events.append(("pause", "sp", cursor, cursor + gap))
                        cursor += gap
                    elif u < 0.23:
                        gap = rng.uniform(0.15, 0.4)
                        label = str(rng.choice(["cough", "laughter", "lipsmack", "breath", "noise"]))
                        events.append(("disfluency", label, cursor, cursor + gap))
                        cursor += gap
                if cursor + dur > start + 9.5:
                    break
                tok = cio.CorpusToken(vocab.surface[wi], vocab.pos[wi], int(vocab.syllables[wi]), vocab.tones[wi],
                                      _flags(rng, vocab.pos[wi]), vocab.phones[wi])
                words.append((tok, cursor, cursor + dur))
                vals.append(y)
                cursor += dur
            end = cursor + 0.05
            aligned = [cio.AlignedWord(tok, on, off, spk, turn_id, start, end) for tok, on, off in words]
            evs = []
            for kind, label, on, off in events:
                position = sum(1 for w in aligned if w.onset_s < on)
                evs.append(cio.InterWordEvent(position, kind, label, on, off))
            records.append(cio.UtteranceRecord(turn_id, spk, start, end, aligned, evs))
            for j, (w, y) in enumerate(zip(aligned, vals)):
                acoustics[(turn_id, j)] = _word_values(w, y)
            # next turn: short gap, occasionally overlapping (cross-talk)
            t = end + (rng.uniform(-0.4, -0.1) if rng.random() < 0.1 else rng.uniform(0.1, 0.5))
            t = max(t, start + 0.01)
        dialogues[did] = records

    truth = {
        "seed": cfg.seed,
        "effects_per_sd": cfg.effects,
        "informativity_reference": {k: {"mean": m, "sd": s} for k, (m, s) in ref.items()},
        "note": "effects are per SD of informativity (bits) over dialogue tokens; "
                "a fitted z-scale coefficient estimates effect * sd_table / sd_reference",
    }
    audio = synthesize_audio(rng, cfg, dialogues, acoustics) if cfg.audio else None
    return {"corpus": corpus, "dialogues": dialogues, "speakers": speakers, "acoustics": acoustics,
            "truth": truth, "audio": audio, "config": cfg}


def _word_values(word, y) -> ac.WordAcoustics:
    max_p = 10 ** y["max_pitch_log10_hz"]
    rng_p = min(10 ** y["pitch_range_log10_hz"], max_p - 60.0)
    max_i = y["max_intensity_db"]
    rng_i = min(max(y["intensity_range_db"], 0.5), max_i - 1.0)
    return ac.WordAcoustics(1000.0 * word.duration_s, max_p, max_p - max(rng_p, 1.0), max_i, max_i - rng_i, True)


# -- audio ----------------------------------------------------------------------

def _amplitude(db: float) -> float:
    """Peak amplitude of a sine whose intensity is ``db``."""
    return math.sqrt(2.0 * ac.REFERENCE_PRESSURE ** 2 * 10 ** (db / 10.0))


def synthesize_audio(rng, cfg: SimulationConfig, dialogues: dict, acoustics: dict) -> dict:
    """One channel per speaker per dialogue: harmonic words over speaker-specific noise."""
    sr = cfg.sample_rate
    out = {}
    tone_turns = set()
    all_turns = [r.turn_id for did in sorted(dialogues) for r in dialogues[did]]
    if cfg.tone_chunks:
        tone_turns = set(rng.choice(all_turns, size=min(cfg.tone_chunks, len(all_turns)), replace=False))
    for did in sorted(dialogues):
        records = dialogues[did]
        total = max(r.turn_offset_s for r in records) + 0.5
        n = int(total * sr) + 1
        for spk in sorted({r.speaker_id for r in records}):
            noise_db = rng.uniform(35.0, 60.0)
            x = rng.standard_normal(n) * _amplitude(noise_db) / math.sqrt(2.0)
            for rec in (r for r in records if r.speaker_id == spk):
                a, b = int(rec.turn_onset_s * sr), int(rec.turn_offset_s * sr)
                if rec.turn_id in tone_turns:
                    x[a:b] = 0.0
                    mid = (a + b) // 2
                    m = np.arange(mid - sr // 4, mid + sr // 4)
                    x[m] = 0.3 * np.sin(2 * np.pi * 1000.0 * m / sr)
                    continue
                for k, w in enumerate(rec.words):
                    v = acoustics[(rec.turn_id, k)]
                    i0, i1 = int(w.onset_s * sr), int(w.offset_s * sr)
                    tt = np.arange(i1 - i0) / sr
                    frac = tt / max(tt[-1], 1e-9) if len(tt) > 1 else np.zeros(len(tt))
                    f0 = v.max_pitch_hz + (v.min_pitch_hz - v.max_pitch_hz) * frac  # falling contour
                    phase = 2 * np.pi * np.cumsum(f0) / sr
                    level = v.min_intensity_db + (v.max_intensity_db - v.min_intensity_db) * np.sin(np.pi * frac)
                    amp = np.array([_amplitude(L) for L in level[:: max(1, len(level) // 64)]])
                    amp = np.interp(np.arange(len(tt)), np.linspace(0, len(tt) - 1, len(amp)), amp)
                    sig = np.sin(phase) + 0.5 * np.sin(2 * phase) + 0.25 * np.sin(3 * phase)
                    x[i0:i1] += amp * sig / 1.1456  # rms of the 3-harmonic stack vs a unit sine
            peak = np.max(np.abs(x))
            if peak > 0.99:
                x *= 0.99 / peak
            out[(did, spk)] = x
    return out


# -- writing --------------------------------------------------------------------

def write_dataset(data: dict, out_dir) -> dict:
    """Write the simulated files; returns the paths written."""
    out = Path(out_dir)
    (out / "alignment").mkdir(parents=True, exist_ok=True)
    paths = {"corpus": out / "corpus.txt", "speakers": out / "speakers.tsv",
             "acoustics": out / "acoustics_model.tsv", "truth": out / "truth.json", "alignment": out / "alignment"}
    with open(paths["corpus"], "w", encoding="utf-8", newline="") as fh:
        for line in data["corpus"]:
            fh.write(" ".join(line) + "\n")
    for did, records in data["dialogues"].items():
        cio.write_alignment(records, out / "alignment" / f"{did}.tsv")
    cio.write_speakers(data["speakers"], paths["speakers"])
    rows = [(tid, k, a) for (tid, k), a in sorted(data["acoustics"].items())]
    ac.write_acoustics_tsv(rows, paths["acoustics"])
    truth = dict(data["truth"], config=asdict(data["config"]))
    paths["truth"].write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if data["audio"] is not None:
        paths["audio"] = out / "audio"
        for (did, spk), x in data["audio"].items():
            (out / "audio" / did).mkdir(parents=True, exist_ok=True)
            ac.write_wav(out / "audio" / did / f"{spk}.wav", x, data["config"].sample_rate)
    return paths
