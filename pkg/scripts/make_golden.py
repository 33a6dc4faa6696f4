"""Regenerate tests/golden/demo_lexicon.tsv from the bundled demo corpus.

Values come from the exhaustive reference iterator in tests/oracles.py, not
from the production counting code.
"""
import math
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracles import informativity_oracle  # noqa: E402

COLUMNS = ("word", "frequency", "log2_frequency", "fwd_informativity", "bwd_informativity", "attested")


def num(x):
    return "NA" if x is None else repr(float(x))


def main():
    text = (ROOT / "src" / "lexprosody" / "data" / "demo_corpus.txt").read_text(encoding="utf-8")
    corpus = [line.split() for line in text.splitlines() if line.strip()]
    counts = {}
    for utt in corpus:
        for w in utt:
            counts[w] = counts.get(w, 0) + 1
    out = ["\t".join(COLUMNS)]
    for w in sorted(counts):
        f = counts[w]
        out.append("\t".join([w, str(f), num(math.log2(f)), num(informativity_oracle(corpus, w, "forward")),
                              num(informativity_oracle(corpus, w, "backward")), "1"]))
    dest = ROOT / "tests" / "golden" / "demo_lexicon.tsv"
    dest.write_text("\n".join(out) + "\n", encoding="utf-8")
    print(f"wrote {dest}")


if __name__ == "__main__":
    main()
