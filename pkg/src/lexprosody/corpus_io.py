"""Readers and writers for the toolkit's input files.

Three formats are handled here:

* lexical corpus text: UTF-8, one utterance per line, tokens separated by
  whitespace;
* word alignment TSV: one word, pause or disfluency per row, grouped into
  conversational turns;
* speaker metadata TSV: ``speaker_id, age, gender, phone_type``.

All parsers stream. Alignment rows must be contiguous per turn so a turn can
be emitted as soon as the next one starts.
"""
from __future__ import annotations

import csv
import io
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

FLAGS = frozenset({
    "partial", "mispronounced", "filled_pause", "acronym", "foreign",
    "proper_name", "masked_by_noise",
})
EVENT_KINDS = ("pause", "disfluency")
MAX_TURN_S = 10.0

ALIGNMENT_COLUMNS = (
    "turn_id", "speaker_id", "turn_onset_s", "turn_offset_s", "kind",
    "onset_s", "offset_s", "surface", "pos", "syllable_count",
    "tone_sequence", "flags",
)
OPTIONAL_ALIGNMENT_COLUMNS = ("pronunciation",)
SPEAKER_COLUMNS = ("speaker_id", "age", "gender", "phone_type")
GENDERS = ("Female", "Male")
PHONE_TYPES = ("landline", "mobile")


class CorpusFormatError(ValueError):
    """Raised for malformed input files. Messages carry the line number."""


@dataclass(frozen=True)
class CorpusToken:
    surface: str
    pos: str
    syllable_count: int
    tone_sequence: str
    flags: frozenset = frozenset()
    pronunciation: tuple | None = None

    def __post_init__(self):
        if not self.surface:
            raise ValueError("empty surface form")
        if self.syllable_count < 1:
            raise ValueError(f"syllable_count must be >= 1, got {self.syllable_count}")
        unknown = set(self.flags) - FLAGS
        if unknown:
            raise ValueError(f"unknown flags: {sorted(unknown)}")


@dataclass(frozen=True)
class AlignedWord:
    token: CorpusToken
    onset_s: float
    offset_s: float
    speaker_id: str
    turn_id: str
    turn_onset_s: float
    turn_offset_s: float

    @property
    def duration_s(self) -> float:
        return self.offset_s - self.onset_s


@dataclass(frozen=True)
class InterWordEvent:
    """A pause or disfluency between words.

    ``position`` is the index of the first word of the turn that starts at or
    after the event, so ``position == 0`` means before the first word and
    ``position == len(words)`` after the last one.
    """
    position: int
    kind: str
    label: str
    onset_s: float
    offset_s: float

    @property
    def duration_s(self) -> float:
        return self.offset_s - self.onset_s


@dataclass
class UtteranceRecord:
    turn_id: str
    speaker_id: str
    turn_onset_s: float
    turn_offset_s: float
    words: list = field(default_factory=list)
    inter_word_events: list = field(default_factory=list)


@dataclass(frozen=True)
class SpeakerMeta:
    speaker_id: str
    age: float
    gender: str
    phone_type: str


@dataclass
class MetadataReport:
    missing: list
    phone_type_counts: dict


# -- lexical corpus ---------------------------------------------------------

def parse_corpus_text(lines: Iterable) -> Iterator[list]:
    """Yield the token list of every non-blank line, in file order.

    ``lines`` may yield ``bytes`` (decoded as UTF-8 here) or ``str``.
    """
    for lineno, line in enumerate(lines, start=1):
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: malformed UTF-8 ({exc.reason})") from None
        tokens = line.split()
        if tokens:
            yield tokens


def read_corpus(path) -> Iterator[list]:
    with open(path, "rb") as fh:
        yield from parse_corpus_text(fh)


# -- alignment TSV ----------------------------------------------------------

def _float(value: str, name: str, lineno: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise CorpusFormatError(f"line {lineno}: column {name!r} is not a number: {value!r}") from None


def _parse_flags(value: str, lineno: int) -> frozenset:
    flags = frozenset(f.strip() for f in value.split(";") if f.strip())
    unknown = flags - FLAGS
    if unknown:
        raise CorpusFormatError(f"line {lineno}: unknown flags {sorted(unknown)}")
    return flags


def _finish_turn(rows: list, lineno: int) -> UtteranceRecord:
    first = rows[0][1]
    turn_id = first["turn_id"]
    speaker = first["speaker_id"]
    t_on = _float(first["turn_onset_s"], "turn_onset_s", rows[0][0])
    t_off = _float(first["turn_offset_s"], "turn_offset_s", rows[0][0])
    if t_off <= t_on:
        raise CorpusFormatError(f"line {rows[0][0]}: turn {turn_id!r} has non-positive duration")
    words, events = [], []
    for ln, row in rows:
        if row["speaker_id"] != speaker:
            raise CorpusFormatError(f"line {ln}: turn {turn_id!r} has more than one speaker")
        if (_float(row["turn_onset_s"], "turn_onset_s", ln) != t_on
                or _float(row["turn_offset_s"], "turn_offset_s", ln) != t_off):
            raise CorpusFormatError(f"line {ln}: inconsistent turn bounds for {turn_id!r}")
        on = _float(row["onset_s"], "onset_s", ln)
        off = _float(row["offset_s"], "offset_s", ln)
        if off <= on:
            raise CorpusFormatError(f"line {ln}: non-positive duration ({on} -> {off})")
        if on < 0:
            raise CorpusFormatError(f"line {ln}: negative onset")
        if on < t_on or off > t_off:
            raise CorpusFormatError(f"line {ln}: interval [{on}, {off}] outside turn [{t_on}, {t_off}]")
        kind = row["kind"]
        if kind == "word":
            try:
                syl = int(row["syllable_count"])
            except ValueError:
                raise CorpusFormatError(f"line {ln}: bad syllable_count {row['syllable_count']!r}") from None
            pron = row.get("pronunciation") or ""
            try:
                token = CorpusToken(
                    surface=row["surface"],
                    pos=row["pos"],
                    syllable_count=syl,
                    tone_sequence=row["tone_sequence"],
                    flags=_parse_flags(row["flags"], ln),
                    pronunciation=tuple(pron.split()) if pron.strip() else None,
                )
            except ValueError as exc:
                raise CorpusFormatError(f"line {ln}: {exc}") from None
            words.append(AlignedWord(token, on, off, speaker, turn_id, t_on, t_off))
        elif kind in EVENT_KINDS:
            events.append((on, off, kind, row["surface"]))
        else:
            raise CorpusFormatError(f"line {ln}: unknown row kind {kind!r}")

    words.sort(key=lambda w: w.onset_s)
    for prev, cur in zip(words, words[1:]):
        if cur.onset_s < prev.offset_s:
            raise CorpusFormatError(
                f"turn {turn_id!r}: overlapping words {prev.token.surface!r} and {cur.token.surface!r}")
    onsets = [w.onset_s for w in words]
    record_events = []
    for on, off, kind, label in sorted(events):
        pos = sum(1 for o in onsets if o < on)
        record_events.append(InterWordEvent(pos, kind, label, on, off))
    if t_off - t_on > MAX_TURN_S:
        warnings.warn(f"turn {turn_id!r} lasts {t_off - t_on:.2f} s (> {MAX_TURN_S} s)", stacklevel=3)
    return UtteranceRecord(turn_id, speaker, t_on, t_off, words, record_events)


def iter_alignment(source) -> Iterator[UtteranceRecord]:
    """Stream turns from an alignment TSV (path or text file object)."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as fh:
            yield from iter_alignment(fh)
        return
    reader = csv.reader(source, delimiter="\t", quoting=csv.QUOTE_NONE)
    try:
        header = next(reader)
    except StopIteration:
        return
    missing = [c for c in ALIGNMENT_COLUMNS if c not in header]
    if missing:
        raise CorpusFormatError(f"line 1: missing columns {missing}")
    seen, rows, current = set(), [], None
    lineno = 1
    for lineno, values in enumerate(reader, start=2):
        if not values or all(not v for v in values):
            continue
        if len(values) != len(header):
            raise CorpusFormatError(f"line {lineno}: expected {len(header)} fields, got {len(values)}")
        row = dict(zip(header, values))
        tid = row["turn_id"]
        if tid != current:
            if rows:
                yield _finish_turn(rows, lineno)
            if tid in seen:
                raise CorpusFormatError(f"line {lineno}: rows of turn {tid!r} are not contiguous")
            seen.add(tid)
            current, rows = tid, []
        rows.append((lineno, row))
    if rows:
        yield _finish_turn(rows, lineno)


def parse_alignment(source) -> list:
    return list(iter_alignment(source))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_alignment(records: Iterable[UtteranceRecord], dest) -> None:
    """Serialize records; ``parse_alignment`` of the output reproduces them."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_alignment(records, fh)
        return
    records = list(records)
    with_pron = any(w.token.pronunciation is not None for r in records for w in r.words)
    header = list(ALIGNMENT_COLUMNS) + (["pronunciation"] if with_pron else [])
    dest.write("\t".join(header) + "\n")
    for rec in records:
        items = [(w.onset_s, 0, w) for w in rec.words] + [(e.onset_s, 1, e) for e in rec.inter_word_events]
        items.sort(key=lambda t: (t[0], t[1]))
        for _, _, item in items:
            base = [rec.turn_id, rec.speaker_id, _fmt(rec.turn_onset_s), _fmt(rec.turn_offset_s)]
            if isinstance(item, AlignedWord):
                tok = item.token
                fields = base + ["word", _fmt(item.onset_s), _fmt(item.offset_s), tok.surface, tok.pos,
                                 str(tok.syllable_count), tok.tone_sequence, ";".join(sorted(tok.flags))]
                if with_pron:
                    fields.append(" ".join(tok.pronunciation or ()))
            else:
                fields = base + [item.kind, _fmt(item.onset_s), _fmt(item.offset_s), item.label, "", "1", "", ""]
                if with_pron:
                    fields.append("")
            dest.write("\t".join(fields) + "\n")


# -- speaker metadata -------------------------------------------------------

def parse_speakers(source) -> dict:
    """Return ``{speaker_id: SpeakerMeta}`` from a metadata TSV."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as fh:
            return parse_speakers(fh)
    reader = csv.DictReader(source, delimiter="\t", quoting=csv.QUOTE_NONE)
    missing = [c for c in SPEAKER_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise CorpusFormatError(f"line 1: missing columns {missing}")
    out = {}
    for lineno, row in enumerate(reader, start=2):
        age = _float(row["age"], "age", lineno)
        if age <= 0:
            raise CorpusFormatError(f"line {lineno}: age must be positive")
        if row["gender"] not in GENDERS:
            raise CorpusFormatError(f"line {lineno}: gender must be one of {GENDERS}")
        if row["phone_type"] not in PHONE_TYPES:
            raise CorpusFormatError(f"line {lineno}: phone_type must be one of {PHONE_TYPES}")
        sid = row["speaker_id"]
        if sid in out:
            raise CorpusFormatError(f"line {lineno}: duplicate speaker {sid!r}")
        out[sid] = SpeakerMeta(sid, age, row["gender"], row["phone_type"])
    return out


def write_speakers(speakers: Iterable[SpeakerMeta], dest) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_speakers(speakers, fh)
        return
    dest.write("\t".join(SPEAKER_COLUMNS) + "\n")
    for s in speakers:
        age = str(int(s.age)) if float(s.age).is_integer() else _fmt(s.age)
        dest.write(f"{s.speaker_id}\t{age}\t{s.gender}\t{s.phone_type}\n")


def validate_metadata(records: Iterable[UtteranceRecord], speakers: dict) -> MetadataReport:
    """Report alignment speakers without metadata, and speaker counts per phone type."""
    present = sorted({r.speaker_id for r in records})
    missing = [s for s in present if s not in speakers]
    counts = Counter(speakers[s].phone_type for s in present if s in speakers)
    return MetadataReport(missing=missing, phone_type_counts={k: counts.get(k, 0) for k in PHONE_TYPES})


def alignment_from_string(text: str) -> list:
    return parse_alignment(io.StringIO(text))
