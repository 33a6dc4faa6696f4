"""Descriptive statistics, the dependent-variable correlation matrix, and renderings."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_LABELS = {
    "dur_log10_ms": "Word duration (log10, ms)",
    "max_pitch_log10_hz": "Maximum pitch (log10, Hz)",
    "max_intensity_db": "Maximum intensity (dB)",
    "pitch_range_log10_hz": "Pitch range (log10, Hz)",
    "intensity_range_db": "Intensity range (dB)",
    "log2_frequency": "Frequency (log2)",
    "log2_fwd_pred": "Forward predictability (log2)",
    "log2_bwd_pred": "Backward predictability (log2)",
    "fwd_inf_bits": "Forward informativity (bits)",
    "bwd_inf_bits": "Backward informativity (bits)",
    "word_length": "Word length",
    "prec_pause_log10_ms": "Preceding pause duration (log10, ms)",
    "foll_pause_log10_ms": "Following pause duration (log10, ms)",
    "prec_rate": "Preceding speech rate",
    "foll_rate": "Following speech rate",
    "age": "Age",
    "prec_disfl": "Preceding disfluency",
    "foll_disfl": "Following disfluency",
    "self_mention": "Previous self-mention",
    "cross_mention": "Previous cross-speaker mention",
    "gender": "Gender",
}


@dataclass
class DescriptiveRow:
    variable: str
    mean: float | None = None
    sd: float | None = None
    iqr: float | None = None
    range: float | None = None
    levels: dict | None = None  # categorical: level -> count

    @property
    def categorical(self) -> bool:
        return self.levels is not None

    def level_text(self) -> str:
        return ", ".join(f"{k}: {v:,}" for k, v in self.levels.items())


@dataclass
class CorrelationMatrix:
    names: list
    r: np.ndarray


def quantile(x, q: float) -> float:
    """Linear interpolation between order statistics: position ``(n - 1) q``."""
    s = np.sort(np.asarray(x, dtype=float))
    h = (len(s) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(s) - 1)
    return float(s[lo] + (h - lo) * (s[hi] - s[lo]))


def describe_column(name: str, values) -> DescriptiveRow:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError(f"column {name!r} is empty")
    mean = float(x.mean())
    sd = float(math.sqrt(np.sum((x - mean) ** 2) / (x.size - 1))) if x.size > 1 else 0.0
    return DescriptiveRow(name, mean, sd, quantile(x, 0.75) - quantile(x, 0.25), float(x.max() - x.min()))


def describe_levels(name: str, values, labels=("False", "True")) -> DescriptiveRow:
    """Counts of a +1/-1 column; ``labels`` are the (-1, +1) level names."""
    x = np.asarray(values)
    if x.size == 0:
        raise ValueError(f"column {name!r} is empty")
    bad = set(np.unique(x)) - {-1, 1}
    if bad:
        raise ValueError(f"column {name!r} is not sum-coded: values {sorted(bad)}")
    return DescriptiveRow(name, levels={labels[1]: int(np.sum(x == 1)), labels[0]: int(np.sum(x == -1))})


def describe(table, continuous, binary=None) -> list:
    """``binary`` maps a sum-coded column to its (reference, other) level names."""
    rows = [describe_column(c, table[c]) for c in continuous]
    for c, labels in (binary or {}).items():
        rows.append(describe_levels(c, table[c], labels))
    return rows


def correlate(table, names) -> CorrelationMatrix:
    cols = []
    for n in names:
        x = np.asarray(table[n], dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError(f"column {n!r} has non-finite values")
        if not x.std() > 0:
            raise ValueError(f"column {n!r} has zero variance")
        cols.append(x)
    if len(cols[0]) < 3:
        raise ValueError("need at least 3 rows")
    r = np.clip(np.corrcoef(np.vstack(cols)), -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return CorrelationMatrix(list(names), r)


# -- rendering -----------------------------------------------------------------

def _f(v, digits=4) -> str:
    return f"{v:.{digits}f}"


def descriptive_markdown(rows: list, labels: dict | None = None) -> str:
    labels = {**DEFAULT_LABELS, **(labels or {})}
    out = ["| Variable | Mean | SD | IQR | Range |", "|---|---|---|---|---|"]
    for r in rows:
        name = labels.get(r.variable, r.variable)
        if r.categorical:
            out.append(f"| {name} | {r.level_text()} | | | |")
        else:
            out.append(f"| {name} | {_f(r.mean)} | {_f(r.sd)} | {_f(r.iqr)} | {_f(r.range)} |")
    return "\n".join(out) + "\n"


def descriptive_tsv(rows: list) -> str:
    out = ["variable\tmean\tsd\tiqr\trange\tlevels"]
    for r in rows:
        if r.categorical:
            out.append(f"{r.variable}\tNA\tNA\tNA\tNA\t{r.level_text()}")
        else:
            out.append(f"{r.variable}\t{r.mean!r}\t{r.sd!r}\t{r.iqr!r}\t{r.range!r}\t")
    return "\n".join(out) + "\n"


def correlation_markdown(cm: CorrelationMatrix, labels: dict | None = None) -> str:
    """Upper triangle only, like a published correlation table."""
    labels = {**DEFAULT_LABELS, **(labels or {})}
    names = [labels.get(n, n) for n in cm.names]
    out = ["| | " + " | ".join(names) + " |", "|---" * (len(names) + 1) + "|"]
    for i, n in enumerate(names):
        cells = ["-" if j <= i else f"{cm.r[i, j]:.2f}" for j in range(len(names))]
        out.append(f"| {n} | " + " | ".join(cells) + " |")
    return "\n".join(out) + "\n"


def correlation_tsv(cm: CorrelationMatrix) -> str:
    out = ["\t" + "\t".join(cm.names)]
    for i, n in enumerate(cm.names):
        out.append(n + "\t" + "\t".join(repr(float(v)) for v in cm.r[i]))
    return "\n".join(out) + "\n"


def frequency_informativity_rows(lexicon_rows: list) -> list:
    """Word-level (log2 frequency, informativity) pairs for a scatter plot."""
    return [r for r in lexicon_rows
            if r["log2_frequency"] is not None and r["fwd_informativity"] is not None
            and r["bwd_informativity"] is not None]


def write_frequency_informativity(lexicon_rows: list, dest) -> None:
    rows = frequency_informativity_rows(lexicon_rows)
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        fh.write("word\tlog2_frequency\tfwd_informativity\tbwd_informativity\n")
        for r in rows:
            fh.write(f"{r['word']}\t{r['log2_frequency']!r}\t{r['fwd_informativity']!r}\t{r['bwd_informativity']!r}\n")


def fit_markdown(result, title: str = "") -> str:
    """Fixed-effect and random-effect tables for one fit."""
    out = [f"### {title}", ""] if title else []
    out += ["| | β | SE | t | p |", "|---|---|---|---|---|"]
    for f in result.fixed:
        p = "< 0.0001" if f.p < 1e-4 else f"{f.p:.4f}"
        out.append(f"| {f.name} | {f.estimate:.4f} | {f.se:.4f} | {f.t:.4f} | {p} |")
    out += ["", "| Group | Term | SD | Correlations |", "|---|---|---|---|"]
    for v in result.varcomp:
        for i, (n, sd) in enumerate(zip(v.names, v.sds)):
            corr = " ".join(f"{v.corr[i][j]:.2f}" for j in range(i))
            out.append(f"| {v.group if i == 0 else ''} | {n} | {sd:.5f} | {corr} |")
    out.append(f"| Residual | | {result.sigma:.5f} | |")
    status = "converged" if result.converged else "NOT converged"
    out += ["", f"n = {result.n_obs}, REML deviance = {result.reml_deviance:.4f}, {status}"
            + (", singular" if result.singular else ""), ""]
    return "\n".join(out)


def mediation_markdown(reports: list) -> str:
    """One block per dependent variable: predictors x (none, mediators...)."""
    out = []
    for rep in reports:
        meds = list(rep.columns)
        out += [f"### {DEFAULT_LABELS.get(rep.dependent, rep.dependent)}", "",
                "| | | " + " | ".join(DEFAULT_LABELS.get(m, m) if m != "none" else "None" for m in meds) + " |",
                "|---|---" + "|---" * len(meds) + "|"]
        for pred in rep.predictors:
            for stat in ("beta", "se", "t"):
                cells = [f"{rep.columns[m][pred][stat]:.4f}" for m in meds]
                out.append(f"| {pred if stat == 'beta' else ''} | {stat} | " + " | ".join(cells) + " |")
        out.append("")
    return "\n".join(out)


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")
