"""Analysis-table assembly: dependent transforms, predictor encodings, exclusions.

The pipeline is ``collect_candidates`` (one per aligned word) ->
``apply_exclusions`` (rules in a fixed order, first match wins) ->
``encode_rows`` (per-token raw predictors) -> ``build_table`` (table-wide
z-transforms and target encoding on the kept rows).
"""
from __future__ import annotations

import json
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ngram
from .quality import DROP_ANNOTATION, KEEP

# -- vocabularies -----------------------------------------------------------

UNTAGGABLE_TAGS = frozenset({"", "-", "x"})
PROPER_TAG_PREFIXES = ("nr", "ns", "nt", "nz")
MISC_TAGS = frozenset("eohkw")
FUNCTION_TAGS = frozenset("rmqpcuy")
CONTENT_TAGS = frozenset("ntsfvabzd")

# disfluency labels that count as "non-silence"; breath behaves like a pause
NON_SILENCE_DISFLUENCIES = frozenset({"laughter", "sneeze", "cough", "lipsmack", "filled_pause"})
PAUSE_LIKE_DISFLUENCIES = frozenset({"breath"})
NOISE_LABELS = frozenset({"noise", "unclear"})

MIN_PAUSE_MS = 30.0
REGION_BREAK_S = 0.5

DEPENDENTS = ("dur_log10_ms", "max_pitch_log10_hz", "pitch_range_log10_hz", "max_intensity_db", "intensity_range_db")
KEY_COLUMNS = ("dialogue_id", "turn_id", "word_index", "word_type", "speaker_id", "tone_sequence", "pos_tag")
# raw value column -> standardized column
Z_COLUMNS = {
    "log2_frequency": "frequency_z",
    "log2_fwd_pred": "fwd_pred_z",
    "log2_bwd_pred": "bwd_pred_z",
    "fwd_inf_bits": "fwd_inf_z",
    "bwd_inf_bits": "bwd_inf_z",
    "word_length": "word_length_z",
    "prec_pause_log10_ms": "prec_pause_z",
    "foll_pause_log10_ms": "foll_pause_z",
    "prec_rate": "prec_rate_z",
    "foll_rate": "foll_rate_z",
    "age": "age_z",
}
BINARY_COLUMNS = ("prec_disfl", "foll_disfl", "self_mention", "cross_mention", "gender")
# reference level (coded -1) and the other level (+1) of every binary column
BINARY_LEVELS = {
    "prec_disfl": ("False", "True"),
    "foll_disfl": ("False", "True"),
    "self_mention": ("False", "True"),
    "cross_mention": ("False", "True"),
    "gender": ("Female", "Male"),
}
FIXED_EFFECTS = (
    "frequency_z", "fwd_pred_z", "bwd_pred_z", "fwd_inf_z", "bwd_inf_z", "word_length_z",
    "prec_disfl", "foll_disfl", "prec_pause_z", "foll_pause_z", "prec_rate_z", "foll_rate_z",
    "self_mention", "cross_mention", "age_z", "gender",
)
RAW_COLUMNS = tuple(Z_COLUMNS)


def syncat_raw(dep: str) -> str:
    return f"syncat_{dep}"


def syncat_z(dep: str) -> str:
    return f"syncat_{dep}_z"


TABLE_COLUMNS = (KEY_COLUMNS + DEPENDENTS + RAW_COLUMNS + tuple(syncat_raw(d) for d in DEPENDENTS)
                 + FIXED_EFFECTS + tuple(syncat_z(d) for d in DEPENDENTS))

SNR_RULES = ("snr_drop_mobile", "snr_drop_tone_like", "snr_drop_noisy", "snr_drop_annotation")
TOKEN_RULES = (
    "a_unusable_acoustics", "b_impossible_values", "c_untaggable_pos", "d_proper_or_misc",
    "e_function_word", "f_partial_or_mispronounced", "g_filled_pause_acronym_foreign",
    "h_hapax", "i_turn_edge", "j_utterance_edge",
)
LATE_RULES = ("unattested_context", "degenerate_range")
LEDGER_RULES = SNR_RULES + TOKEN_RULES + LATE_RULES


class ConstantColumnError(ValueError):
    pass


class DegenerateRangeError(ValueError):
    pass


# -- elementary transforms ----------------------------------------------------

def dependent_transforms(acoustics) -> dict:
    """The five dependent values of a usable ``WordAcoustics``."""
    rng = acoustics.pitch_range_hz
    if rng is None or not rng > 0:
        raise DegenerateRangeError("degenerate range: pitch range is not positive")
    return {
        "dur_log10_ms": math.log10(acoustics.duration_ms),
        "max_pitch_log10_hz": math.log10(acoustics.max_pitch_hz),
        "pitch_range_log10_hz": math.log10(rng),
        "max_intensity_db": float(acoustics.max_intensity_db),
        "intensity_range_db": float(acoustics.intensity_range_db),
    }


def pause_transform(ms: float) -> float:
    """log10(ms + 1), after setting pauses shorter than 30 ms to zero."""
    if ms < MIN_PAUSE_MS:
        ms = 0.0
    return math.log10(ms + 1.0)


def z_transform(values, name: str = "column") -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ConstantColumnError(f"constant column {name!r}: fewer than 2 values")
    centred = x - x.mean()
    sd = math.sqrt(float(np.dot(centred, centred)) / (x.size - 1))
    if not sd > 0:
        raise ConstantColumnError(f"constant column {name!r}: SD is 0")
    z = centred / sd
    # one correction pass keeps |mean| and |SD - 1| at rounding level
    z -= z.mean()
    return z / z.std(ddof=1)


def target_encode(categories, values) -> tuple:
    """Replace each category by the mean of ``values`` over its rows.

    Returns the encoded array and the category -> mean mapping.
    """
    sums, counts = defaultdict(float), Counter()
    for c, v in zip(categories, values):
        sums[c] += v
        counts[c] += 1
    means = {c: sums[c] / counts[c] for c in sorted(counts)}
    return np.array([means[c] for c in categories], dtype=float), means


def sum_code(flag: bool) -> int:
    return 1 if flag else -1


def main_tag(pos: str) -> str:
    return pos[:1].lower()


def pos_class(pos: str) -> str:
    """One of ``untaggable``, ``proper``, ``misc``, ``function``, ``content``."""
    p = pos.strip().lower()
    if p in UNTAGGABLE_TAGS:
        return "untaggable"
    if p.startswith(PROPER_TAG_PREFIXES):
        return "proper"
    tag = p[0]
    if tag in MISC_TAGS:
        return "misc"
    if tag in FUNCTION_TAGS:
        return "function"
    if tag in CONTENT_TAGS:
        return "content"
    return "untaggable"


# -- context within a turn --------------------------------------------------

def utterance_regions(record) -> list:
    """``(first, last)`` word indices of the speech-rate regions of a turn.

    Regions are split wherever the gap between consecutive words is at least
    0.5 s, whatever fills it (pause, disfluency or nothing).
    """
    words = record.words
    if not words:
        return []
    regions, start = [], 0
    for k in range(1, len(words)):
        if words[k].onset_s - words[k - 1].offset_s >= REGION_BREAK_S:
            regions.append((start, k - 1))
            start = k
    regions.append((start, len(words) - 1))
    return regions


def region_of(record, k: int, regions: list | None = None) -> tuple:
    for first, last in regions if regions is not None else utterance_regions(record):
        if first <= k <= last:
            return first, last
    raise IndexError(k)


def speech_rate(record, k: int, regions: list | None = None) -> tuple:
    """Preceding and following rate (syllables/s) of word ``k``; None at a region edge."""
    first, last = region_of(record, k, regions)
    words = record.words
    prec = foll = None
    if k > first:
        syl = sum(w.token.syllable_count for w in words[first:k])
        prec = syl / (words[k].onset_s - words[first].onset_s)
    if k < last:
        syl = sum(w.token.syllable_count for w in words[k + 1:last + 1])
        foll = syl / (words[last].offset_s - words[k].offset_s)
    return prec, foll


def _events_at(record, position: int) -> list:
    return [e for e in record.inter_word_events if e.position == position]


def _is_pause(event) -> bool:
    return event.kind == "pause" or (event.kind == "disfluency" and event.label in PAUSE_LIKE_DISFLUENCIES)


def pause_ms(record, position: int) -> float:
    """Total pause time (ms) in the slot before word ``position``."""
    return 1000.0 * sum(e.duration_s for e in _events_at(record, position) if _is_pause(e))


def _disfluent_slot(record, position: int) -> bool:
    return any(e.kind == "disfluency" and e.label in NON_SILENCE_DISFLUENCIES
               for e in _events_at(record, position))


def disfluency_context(record, k: int) -> tuple:
    """Whether word ``k`` is immediately preceded / followed by a non-silence disfluency.

    Pauses in the slot are skipped over; a neighbouring word flagged as a
    filled pause also counts.
    """
    words = record.words
    prec = _disfluent_slot(record, k) or (k > 0 and "filled_pause" in words[k - 1].token.flags)
    foll = _disfluent_slot(record, k + 1) or (k + 1 < len(words) and "filled_pause" in words[k + 1].token.flags)
    return bool(prec), bool(foll)


def previous_mentions(records) -> dict:
    """``{(turn_id, k): (self, cross)}`` over the words of one dialogue.

    Self-mention compares word onsets of the same speaker. Cross-speaker
    mention needs another speaker's turn containing the type to have ended
    before the target word starts.
    """
    first_onset = {}  # (speaker, type) -> earliest onset
    first_turn_end = defaultdict(dict)  # type -> speaker -> earliest turn offset
    for rec in records:
        for w in rec.words:
            key = (rec.speaker_id, w.token.surface)
            if key not in first_onset or w.onset_s < first_onset[key]:
                first_onset[key] = w.onset_s
            ends = first_turn_end[w.token.surface]
            if rec.speaker_id not in ends or rec.turn_offset_s < ends[rec.speaker_id]:
                ends[rec.speaker_id] = rec.turn_offset_s
    out = {}
    for rec in records:
        for k, w in enumerate(rec.words):
            self_m = first_onset[(rec.speaker_id, w.token.surface)] < w.onset_s
            cross_m = any(end < w.onset_s for spk, end in first_turn_end[w.token.surface].items()
                          if spk != rec.speaker_id)
            out[(rec.turn_id, k)] = (self_m, cross_m)
    return out


def annotation_flagged(record) -> bool:
    """Chunk-level annotation filter: masked words or noise/unclear stretches."""
    return (any("masked_by_noise" in w.token.flags for w in record.words)
            or any(e.kind == "disfluency" and e.label in NOISE_LABELS for e in record.inter_word_events))


# -- exclusions -------------------------------------------------------------

@dataclass
class Candidate:
    dialogue_id: str
    record: object
    index: int
    acoustics: object | None

    @property
    def word(self):
        return self.record.words[self.index]

    @property
    def surface(self) -> str:
        return self.word.token.surface

    @property
    def prev_surface(self):
        return self.record.words[self.index - 1].token.surface if self.index > 0 else None

    @property
    def next_surface(self):
        words = self.record.words
        return words[self.index + 1].token.surface if self.index + 1 < len(words) else None


@dataclass
class ExclusionLedger:
    total: int = 0
    kept: int = 0
    excluded: dict = field(default_factory=lambda: {r: 0 for r in LEDGER_RULES})

    def add(self, rule: str, n: int = 1) -> None:
        self.excluded[rule] += n

    @property
    def conserved(self) -> bool:
        return self.kept + sum(self.excluded.values()) == self.total

    def to_dict(self) -> dict:
        return {"total": self.total, "kept": self.kept, "excluded": dict(self.excluded)}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def collect_candidates(dialogues: dict, acoustics: dict) -> list:
    """Every aligned word, in dialogue-id then file order."""
    out = []
    for did in sorted(dialogues):
        for rec in dialogues[did]:
            for k in range(len(rec.words)):
                out.append(Candidate(did, rec, k, acoustics.get((rec.turn_id, k))))
    return out


def _impossible(a) -> bool:
    vals = (a.duration_ms, a.max_pitch_hz, a.min_pitch_hz, a.max_intensity_db, a.min_intensity_db)
    if not all(math.isfinite(v) for v in vals):
        return True
    return (a.duration_ms <= 0 or a.min_pitch_hz <= 0 or a.max_pitch_hz < a.min_pitch_hz
            or a.min_intensity_db < 0 or a.max_intensity_db < a.min_intensity_db)


def _token_rule(c: Candidate) -> str | None:
    """First matching rule among a-g."""
    a, tok = c.acoustics, c.word.token
    if a is None or not a.usable or a.max_pitch_hz is None or a.max_intensity_db is None:
        return "a_unusable_acoustics"
    if _impossible(a):
        return "b_impossible_values"
    cls = pos_class(tok.pos)
    if cls == "untaggable":
        return "c_untaggable_pos"
    if cls in ("proper", "misc") or "proper_name" in tok.flags:
        return "d_proper_or_misc"
    if cls == "function":
        return "e_function_word"
    if tok.flags & {"partial", "mispronounced"}:
        return "f_partial_or_mispronounced"
    if tok.flags & {"filled_pause", "acronym", "foreign"}:
        return "g_filled_pause_acronym_foreign"
    return None


def _attested(stats, c: Candidate) -> bool:
    w, prev, nxt = c.surface, c.prev_surface, c.next_surface
    return stats.fwd_bigram.get((prev, w), 0) > 0 and stats.fwd_bigram.get((w, nxt), 0) > 0


def apply_exclusions(candidates: list, stats, decisions: dict | None = None) -> tuple:
    """Filter candidates; returns ``(kept, ledger)``.

    ``decisions`` maps chunk (turn) id to a gate decision; tokens of dropped
    chunks are counted under the matching ``snr_*`` entry.
    """
    ledger = ExclusionLedger(total=len(candidates))
    survivors = []
    for c in candidates:
        if decisions is not None:
            if c.record.turn_id not in decisions:
                raise KeyError(f"turn {c.record.turn_id!r} has no gate decision")
            d = decisions[c.record.turn_id]
            if d != KEEP:
                ledger.add("snr_" + d)
                continue
        rule = _token_rule(c)
        if rule:
            ledger.add(rule)
        else:
            survivors.append(c)

    type_counts = Counter(c.surface for c in survivors)
    region_cache = {}
    kept = []
    for c in survivors:
        if type_counts[c.surface] == 1:
            ledger.add("h_hapax")
            continue
        rec, k = c.record, c.index
        if k == 0 or k == len(rec.words) - 1:
            ledger.add("i_turn_edge")
            continue
        regions = region_cache.setdefault(id(rec), utterance_regions(rec))
        first, last = region_of(rec, k, regions)
        if k in (first, last):
            ledger.add("j_utterance_edge")
            continue
        if not _attested(stats, c):
            ledger.add("unattested_context")
            continue
        rng = c.acoustics.pitch_range_hz
        if not rng > 0:
            ledger.add("degenerate_range")
            continue
        kept.append(c)
    ledger.kept = len(kept)
    assert ledger.conserved
    return kept, ledger


# -- encoding ---------------------------------------------------------------

@dataclass
class PredictorRow:
    """One analysis token with its dependent values and raw (unscaled) predictors."""
    dialogue_id: str
    turn_id: str
    word_index: int
    word_type: str
    speaker_id: str
    tone_sequence: str
    pos_tag: str
    deps: dict
    raw: dict
    binary: dict


def word_length(token) -> int | None:
    return len(token.pronunciation) if token.pronunciation else None


def encode_rows(kept: list, stats, speakers: dict, dialogues: dict) -> list:
    mentions = {}
    for did in sorted({c.dialogue_id for c in kept}):
        mentions.update(previous_mentions(dialogues[did]))
    fallback = 0
    region_cache = {}
    rows = []
    for c in kept:
        rec, k, tok = c.record, c.index, c.word.token
        meta = speakers.get(rec.speaker_id)
        if meta is None:
            raise KeyError(f"speaker {rec.speaker_id!r} has no metadata")
        regions = region_cache.setdefault(id(rec), utterance_regions(rec))
        prec_rate, foll_rate = speech_rate(rec, k, regions)
        prec_d, foll_d = disfluency_context(rec, k)
        self_m, cross_m = mentions[(rec.turn_id, k)]
        length = word_length(tok)
        if length is None:
            length = 2 * tok.syllable_count
            fallback += 1
        f = ngram.frequency(stats, c.surface)
        raw = {
            "log2_frequency": math.log2(f),
            "log2_fwd_pred": math.log2(ngram.predictability(stats, c.surface, c.prev_surface, ngram.FORWARD)),
            "log2_bwd_pred": math.log2(ngram.predictability(stats, c.surface, c.next_surface, ngram.BACKWARD)),
            "fwd_inf_bits": ngram.informativity(stats, c.surface, ngram.FORWARD),
            "bwd_inf_bits": ngram.informativity(stats, c.surface, ngram.BACKWARD),
            "word_length": float(length),
            "prec_pause_log10_ms": pause_transform(pause_ms(rec, k)),
            "foll_pause_log10_ms": pause_transform(pause_ms(rec, k + 1)),
            "prec_rate": prec_rate,
            "foll_rate": foll_rate,
            "age": float(meta.age),
        }
        binary = {
            "prec_disfl": sum_code(prec_d),
            "foll_disfl": sum_code(foll_d),
            "self_mention": sum_code(self_m),
            "cross_mention": sum_code(cross_m),
            "gender": sum_code(meta.gender == "Male"),
        }
        rows.append(PredictorRow(c.dialogue_id, rec.turn_id, k, c.surface, rec.speaker_id, tok.tone_sequence,
                                 main_tag(tok.pos), dependent_transforms(c.acoustics), raw, binary))
    if fallback:
        warnings.warn(f"{fallback} tokens have no pronunciation; word length approximated as 2 x syllables",
                      stacklevel=2)
    return rows


# -- table ------------------------------------------------------------------

class PredictorTable:
    """Column store of the final analysis table (fixed column order)."""

    def __init__(self, columns: dict):
        self.columns = columns
        lengths = {len(v) for v in columns.values()}
        if len(lengths) > 1:
            raise ValueError("columns differ in length")
        self.n = lengths.pop() if lengths else 0

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, name: str):
        return self.columns[name]

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def numeric(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=float)

    def take(self, index) -> "PredictorTable":
        index = np.asarray(index)
        out = {}
        for k, v in self.columns.items():
            out[k] = v[index] if isinstance(v, np.ndarray) else [v[i] for i in index]
        return PredictorTable(out)

    def write_tsv(self, dest) -> None:
        if isinstance(dest, (str, Path)):
            with open(dest, "w", encoding="utf-8", newline="") as fh:
                self.write_tsv(fh)
            return
        names = list(self.columns)
        dest.write("\t".join(names) + "\n")
        cols = [self.columns[n] for n in names]
        for i in range(self.n):
            dest.write("\t".join(_cell(col[i]) for col in cols) + "\n")

    @classmethod
    def read_tsv(cls, source) -> "PredictorTable":
        if isinstance(source, (str, Path)):
            with open(source, encoding="utf-8") as fh:
                return cls.read_tsv(fh)
        lines = iter(source)
        names = next(lines).rstrip("\n").split("\t")
        data = [[] for _ in names]
        for line in lines:
            if line.strip():
                for bucket, cell in zip(data, line.rstrip("\n").split("\t")):
                    bucket.append(cell)
        cols = {}
        for name, vals in zip(names, data):
            if name in ("word_index",) + BINARY_COLUMNS:
                cols[name] = np.array([int(v) for v in vals], dtype=int)
            elif name in KEY_COLUMNS:
                cols[name] = vals
            else:
                cols[name] = np.array([float(v) for v in vals], dtype=float)
        return cls(cols)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def build_table(rows: list) -> PredictorTable:
    """Table-wide pass: z-transforms and per-dependent target encoding."""
    if not rows:
        raise ValueError("no rows survived exclusion")
    cols = {
        "dialogue_id": [r.dialogue_id for r in rows],
        "turn_id": [r.turn_id for r in rows],
        "word_index": np.array([r.word_index for r in rows], dtype=int),
        "word_type": [r.word_type for r in rows],
        "speaker_id": [r.speaker_id for r in rows],
        "tone_sequence": [r.tone_sequence for r in rows],
        "pos_tag": [r.pos_tag for r in rows],
    }
    for d in DEPENDENTS:
        cols[d] = np.array([r.deps[d] for r in rows], dtype=float)
    for name in RAW_COLUMNS:
        cols[name] = np.array([r.raw[name] for r in rows], dtype=float)
    for d in DEPENDENTS:
        cols[syncat_raw(d)] = target_encode(cols["pos_tag"], cols[d])[0]
    for name in FIXED_EFFECTS:
        if name in BINARY_COLUMNS:
            cols[name] = np.array([r.binary[name] for r in rows], dtype=int)
    for raw_name, z_name in Z_COLUMNS.items():
        cols[z_name] = z_transform(cols[raw_name], raw_name)
    for d in DEPENDENTS:
        cols[syncat_z(d)] = z_transform(cols[syncat_raw(d)], syncat_raw(d))
    return PredictorTable({name: cols[name] for name in TABLE_COLUMNS})


def assemble(dialogues: dict, acoustics: dict, stats, speakers: dict, decisions: dict | None = None) -> tuple:
    """Full assembly; returns ``(PredictorTable, ExclusionLedger)``."""
    kept, ledger = apply_exclusions(collect_candidates(dialogues, acoustics), stats, decisions)
    return build_table(encode_rows(kept, stats, speakers, dialogues)), ledger


def chunk_annotation_decisions(records) -> dict:
    """Convenience for callers without audio: annotation rule only."""
    return {r.turn_id: DROP_ANNOTATION if annotation_flagged(r) else KEEP for r in records}
