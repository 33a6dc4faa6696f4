"""Unigram/bigram counts and the lexical measures derived from them.

Contextual predictability is the unsmoothed bigram conditional probability
of a word given its neighbour; informativity is the context-weighted average
of its negative log (in bits)::

    forward:   P(w | prev=c) = n(c, w) / sum_x n(c, x)
    backward:  P(w | next=c) = n(w, c) / sum_x n(x, c)
    informativity(w) = -sum_c P(c | w) log2 P(w | c)

with ``P(c | w)`` the share of ``w``'s tokens that occur in context ``c``.
Bigrams never span utterance boundaries.
"""
from __future__ import annotations

import io
import math
import struct
from collections import Counter, defaultdict
from itertools import chain, count, islice
from pathlib import Path
from typing import Iterable

import numpy as np

FORWARD = "forward"
BACKWARD = "backward"
DIRECTIONS = (FORWARD, BACKWARD)

SNAPSHOT_MAGIC = b"LXSTATS\x00"
SNAPSHOT_VERSION = 1


def _fold(keys, counts, pending):
    """Merge packed bigram keys in ``pending`` into the sorted (keys, counts) table."""
    if not pending:
        return keys, counts
    new, c = np.unique(np.concatenate(pending), return_counts=True)
    if len(keys) == 0:
        return new, c.astype(np.int64)
    merged, inv = np.unique(np.concatenate([keys, new]), return_inverse=True)
    return merged, np.bincount(inv, weights=np.concatenate([counts, c]), minlength=len(merged)).astype(np.int64)


def _update(counter: Counter, d: dict) -> None:
    if counter:
        counter.update(d)
    else:
        dict.update(counter, d)


class UnattestedBigramError(KeyError):
    pass


class NoContextsError(ValueError):
    pass


class LexiconStats:
    """Count tables for one lexical corpus.

    Build with :func:`count_corpus` (or ``add`` / ``merge``); call
    :meth:`freeze` before querying. A frozen instance is read-only.
    """

    def __init__(self, unigram: Counter | None = None, fwd_bigram: Counter | None = None):
        self.unigram = Counter() if unigram is None else unigram
        self.fwd_bigram = Counter() if fwd_bigram is None else fwd_bigram
        # utterance-initial / -final token counts; give the marginals cheaply
        self._initial = Counter()
        self._final = Counter()
        self.fwd_marginal: dict = {}
        self.bwd_marginal: dict = {}
        self._prev_of = None
        self._next_of = None
        self._inf_cache: dict = {}
        self.frozen = False

    # -- building -----------------------------------------------------------
    def add(self, sequences: Iterable[list], batch_lines: int = 20000) -> "LexiconStats":
        """Count ``sequences`` (one token list per utterance) into this instance.

        Tokens are mapped to integer ids and counted with numpy; bigram keys
        are packed ``prev << 32 | next`` and folded into a sorted table every
        few million tokens, which keeps memory bounded for long streams.
        """
        if self.frozen:
            raise RuntimeError("LexiconStats is frozen")
        index = defaultdict(count().__next__)  # token -> id in first-seen order
        uni = np.zeros(0, np.int64)
        first = np.zeros(0, np.int64)
        last = np.zeros(0, np.int64)
        keys, counts = np.zeros(0, np.uint64), np.zeros(0, np.int64)
        pending, n_pending = [], 0
        it = iter(sequences)
        while True:
            raw = list(islice(it, batch_lines))
            if not raw:
                break
            batch = [seq for seq in raw if seq]
            if not batch:
                continue
            lens = np.fromiter(map(len, batch), np.int64, len(batch))
            ids = np.fromiter(map(index.__getitem__, chain.from_iterable(batch)), np.int64, int(lens.sum()))
            v = len(index)
            if v > len(uni):
                uni, first, last = (np.concatenate([a, np.zeros(v - len(a), np.int64)]) for a in (uni, first, last))
            ends = np.cumsum(lens)
            starts = ends - lens
            uni += np.bincount(ids, minlength=v)
            first += np.bincount(ids[starts], minlength=v)
            last += np.bincount(ids[ends - 1], minlength=v)
            inside = np.ones(len(ids) - 1, bool)
            inside[starts[1:] - 1] = False  # no pairs across utterances
            u = ids.astype(np.uint64)
            pending.append((u[:-1][inside] << np.uint64(32)) | u[1:][inside])
            n_pending += int(inside.sum())
            if n_pending > 8_000_000:
                keys, counts = _fold(keys, counts, pending)
                pending, n_pending = [], 0
        keys, counts = _fold(keys, counts, pending)
        words = list(index)
        _update(self.unigram, dict(zip(words, uni.tolist())))
        _update(self._initial, {words[i]: c for i, c in enumerate(first.tolist()) if c})
        _update(self._final, {words[i]: c for i, c in enumerate(last.tolist()) if c})
        prev = map(words.__getitem__, (keys >> np.uint64(32)).tolist())
        nxt = map(words.__getitem__, (keys & np.uint64(0xFFFFFFFF)).tolist())
        _update(self.fwd_bigram, dict(zip(zip(prev, nxt), counts.tolist())))
        return self

    def merge(self, other: "LexiconStats") -> "LexiconStats":
        out = LexiconStats(self.unigram + other.unigram, self.fwd_bigram + other.fwd_bigram)
        if self._has_boundaries() and other._has_boundaries():
            out._initial = self._initial + other._initial
            out._final = self._final + other._final
        return out.freeze()

    def _has_boundaries(self) -> bool:
        return bool(self._initial) or not self.unigram

    def freeze(self) -> "LexiconStats":
        if self._has_boundaries():
            # a token is a left context unless it ends its utterance
            fwd_m = self.unigram - self._final
            bwd_m = self.unigram - self._initial
        else:
            fwd_m, bwd_m = Counter(), Counter()
            for (a, b), n in self.fwd_bigram.items():
                fwd_m[a] += n
                bwd_m[b] += n
        self.fwd_marginal, self.bwd_marginal = dict(fwd_m), dict(bwd_m)
        self._prev_of, self._next_of = None, None
        self._inf_cache = {}
        self.frozen = True
        return self

    def _build_index(self):
        prev_of, next_of = {}, {}
        for (a, b), n in self.fwd_bigram.items():
            prev_of.setdefault(b, []).append((a, n))
            next_of.setdefault(a, []).append((b, n))
        for d in (prev_of, next_of):
            for lst in d.values():
                lst.sort()
        self._prev_of, self._next_of = prev_of, next_of

    # -- accessors ------------------------------------------------------------
    @property
    def total_tokens(self) -> int:
        return sum(self.unigram.values())

    def types(self) -> list:
        return sorted(self.unigram)

    def contexts(self, w: str, direction: str) -> list:
        """``[(context, n)]`` pairs in which ``w`` occurs, sorted by context."""
        self._check_frozen()
        if self._prev_of is None:
            self._build_index()
        if direction == FORWARD:
            return self._prev_of.get(w, [])
        if direction == BACKWARD:
            return self._next_of.get(w, [])
        raise ValueError(f"direction must be one of {DIRECTIONS}")

    def _check_frozen(self):
        if not self.frozen:
            raise RuntimeError("call freeze() before querying")

    def __eq__(self, other):
        if not isinstance(other, LexiconStats):
            return NotImplemented
        return self.unigram == other.unigram and self.fwd_bigram == other.fwd_bigram


def count_corpus(sequences: Iterable[list]) -> LexiconStats:
    return LexiconStats().add(sequences).freeze()


def frequency(stats: LexiconStats, w: str) -> int:
    return stats.unigram.get(w, 0)


def predictability(stats: LexiconStats, w: str, c: str, direction: str) -> float:
    """P(w | c) where ``c`` is the preceding (forward) or following (backward) word."""
    stats._check_frozen()
    if direction == FORWARD:
        n = stats.fwd_bigram.get((c, w), 0)
        denom = stats.fwd_marginal.get(c, 0)
    elif direction == BACKWARD:
        n = stats.fwd_bigram.get((w, c), 0)
        denom = stats.bwd_marginal.get(c, 0)
    else:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    if n == 0:
        raise UnattestedBigramError(f"unattested bigram: {w!r} with {direction} context {c!r}")
    return n / denom


def informativity(stats: LexiconStats, w: str, direction: str) -> float:
    """Average surprisal of ``w`` in bits over its contexts (memoized)."""
    key = (w, direction)
    cached = stats._inf_cache.get(key)
    if cached is not None:
        return cached
    ctx = stats.contexts(w, direction)
    if not ctx:
        raise NoContextsError(f"no contexts: {w!r} has no {direction} contexts")
    marginal = stats.fwd_marginal if direction == FORWARD else stats.bwd_marginal
    total = sum(n for _, n in ctx)
    terms = [n * math.log2(marginal[c] / n) for c, n in ctx]
    value = math.fsum(terms) / total
    if value < 0.0:  # rounding when every P(w|c) == 1
        value = 0.0
    stats._inf_cache[key] = value
    return value


# -- export -----------------------------------------------------------------

def _num(x) -> str:
    return "NA" if x is None else repr(float(x))


def export_lexicon(stats: LexiconStats, words: Iterable[str] | None = None) -> list:
    """Word-level rows sorted by word. Unseen words are flagged, never logged at zero."""
    words = sorted(set(stats.unigram) if words is None else set(words))
    rows = []
    for w in words:
        f = frequency(stats, w)
        row = {"word": w, "frequency": f, "log2_frequency": math.log2(f) if f else None, "attested": int(f > 0)}
        for d, col in ((FORWARD, "fwd_informativity"), (BACKWARD, "bwd_informativity")):
            try:
                row[col] = informativity(stats, w, d)
            except NoContextsError:
                row[col] = None
        rows.append(row)
    return rows


def export_bigrams(stats: LexiconStats, words: Iterable[str] | None = None) -> list:
    """Rows for attested bigrams ``(prev, word)``.

    ``log2_fwd_pred`` is log2 P(word | prev) and ``log2_bwd_pred`` is
    log2 P(prev | next=word). With ``words``, only bigrams whose two members
    are both in the list are kept.
    """
    keep = None if words is None else set(words)
    rows = []
    for (a, b), n in sorted(stats.fwd_bigram.items()):
        if keep is not None and (a not in keep or b not in keep):
            continue
        rows.append({
            "prev": a, "word": b, "count": n,
            "log2_fwd_pred": math.log2(predictability(stats, b, a, FORWARD)),
            "log2_bwd_pred": math.log2(predictability(stats, a, b, BACKWARD)),
        })
    return rows


WORD_COLUMNS = ("word", "frequency", "log2_frequency", "fwd_informativity", "bwd_informativity", "attested")
BIGRAM_COLUMNS = ("prev", "word", "count", "log2_fwd_pred", "log2_bwd_pred")


def write_rows_tsv(rows: list, columns: tuple, dest) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_rows_tsv(rows, columns, fh)
        return
    dest.write("\t".join(columns) + "\n")
    for r in rows:
        vals = []
        for c in columns:
            v = r[c]
            vals.append(_num(v) if (v is None or isinstance(v, float)) else str(v))
        dest.write("\t".join(vals) + "\n")


# -- binary snapshot ----------------------------------------------------------
#
# Layout (all integers little-endian):
#   8 bytes   magic "LXSTATS\0"
#   u32       format version (1)
#   u64       number of word types T
#   u64       number of bigram types B
#   T times:  u32 byte length, UTF-8 bytes        (types in sorted order)
#   T x u64   unigram counts (same order)
#   B x u32   left word index
#   B x u32   right word index
#   B x u64   bigram counts                        (sorted by (left, right))

_HEADER = struct.Struct("<8sIQQ")


def write_snapshot(stats: LexiconStats, dest) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "wb") as fh:
            write_snapshot(stats, fh)
        return
    types = stats.types()
    index = {w: i for i, w in enumerate(types)}
    pairs = sorted((index[a], index[b], n) for (a, b), n in stats.fwd_bigram.items())
    dest.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, len(types), len(pairs)))
    buf = io.BytesIO()
    for w in types:
        raw = w.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
    dest.write(buf.getvalue())
    dest.write(np.array([stats.unigram[w] for w in types], dtype="<u8").tobytes())
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 3)
    dest.write(arr[:, 0].astype("<u4").tobytes())
    dest.write(arr[:, 1].astype("<u4").tobytes())
    dest.write(arr[:, 2].astype("<u8").tobytes())


def read_snapshot(source) -> LexiconStats:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return read_snapshot(fh)
    data = source.read()
    magic, version, n_types, n_pairs = _HEADER.unpack_from(data, 0)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError("not a lexicon snapshot (bad magic)")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    off = _HEADER.size
    types = []
    for _ in range(n_types):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        types.append(data[off:off + ln].decode("utf-8"))
        off += ln
    uni = np.frombuffer(data, dtype="<u8", count=n_types, offset=off)
    off += 8 * n_types
    left = np.frombuffer(data, dtype="<u4", count=n_pairs, offset=off)
    off += 4 * n_pairs
    right = np.frombuffer(data, dtype="<u4", count=n_pairs, offset=off)
    off += 4 * n_pairs
    cnt = np.frombuffer(data, dtype="<u8", count=n_pairs, offset=off)
    unigram = Counter({w: int(n) for w, n in zip(types, uni.tolist())})
    bigram = Counter({(types[a], types[b]): int(n) for a, b, n in zip(left.tolist(), right.tolist(), cnt.tolist())})
    return LexiconStats(unigram, bigram).freeze()
