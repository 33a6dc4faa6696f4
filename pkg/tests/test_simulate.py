import json

import numpy as np
import pytest

from lexprosody import lmm, ngram, predictors as pr, simulate as sm
from lexprosody.lmm import default_spec

from pipeline import run, tree_bytes


@pytest.fixture(scope="module")
def assembled():
    data = sm.simulate_dataset(sm.SimulationConfig(seed=3))
    stats = ngram.count_corpus(data["corpus"])
    speakers = {m.speaker_id: m for m in data["speakers"]}
    records = [r for recs in data["dialogues"].values() for r in recs]
    decisions = {r.turn_id: ("drop_mobile" if speakers[r.speaker_id].phone_type == "mobile"
                             else "drop_annotation" if pr.annotation_flagged(r) else "keep") for r in records}
    table, ledger = pr.assemble(data["dialogues"], data["acoustics"], stats, speakers, decisions)
    return data, table, ledger


def test_same_seed_same_dataset(tmp_path):
    for name in ("a", "b"):
        assert run("--seed", 9, "simulate", tmp_path / name, "--n-dialogues", 2, "--corpus-lines", 2000) == 0
    assert run("--seed", 10, "simulate", tmp_path / "c", "--n-dialogues", 2, "--corpus-lines", 2000) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    assert tree_bytes(tmp_path / "a") != tree_bytes(tmp_path / "c")


def test_zipfian_corpus(assembled):
    data = assembled[0]
    stats = ngram.count_corpus(data["corpus"])
    counts = np.sort(np.array(list(stats.unigram.values())))[::-1]
    ranks = np.arange(1, len(counts) + 1)
    slope = np.polyfit(np.log(ranks[:100]), np.log(counts[:100]), 1)[0]
    assert -1.5 < slope < -0.6


def test_ledger_conserved(assembled):
    _, table, ledger = assembled
    assert ledger.conserved and ledger.kept == len(table) > 300


def test_predictor_table_invariants(assembled):
    _, table, _ = assembled
    z_cols = list(pr.Z_COLUMNS.values()) + [pr.syncat_z(d) for d in pr.DEPENDENTS]
    for c in z_cols:
        z = table.numeric(c)
        assert abs(z.mean()) < 1e-9, c
        assert abs(z.std(ddof=1) - 1.0) < 1e-9, c
    for c in pr.BINARY_COLUMNS:
        assert set(np.unique(table[c])) <= {-1, 1}, c
    tags = [pr.main_tag(t) for t in table["pos_tag"]]
    for d in pr.DEPENDENTS:
        raw = table.numeric(pr.syncat_raw(d))
        y = table.numeric(d)
        for tag in set(tags):
            idx = [i for i, t in enumerate(tags) if t == tag]
            assert np.allclose(raw[idx], y[idx].mean(), atol=1e-12)
    assert list(table.columns) == list(pr.TABLE_COLUMNS)


def test_predictor_table_roundtrip(assembled, tmp_path):
    _, table, _ = assembled
    table.write_tsv(tmp_path / "t.tsv")
    back = pr.PredictorTable.read_tsv(tmp_path / "t.tsv")
    for c in table.columns:
        a, b = table[c], back[c]
        if isinstance(a, np.ndarray):
            assert np.array_equal(a, b), c
        else:
            assert list(a) == list(b), c


def _run_duration_fit(root, seed, null=False):
    extra = ["--null"] if null else []
    assert run("--seed", seed, "simulate", root, "--n-dialogues", 16, *extra) == 0
    spec = root / "spec.json"
    spec.write_text(json.dumps(default_spec("dur_log10_ms").to_dict()))
    cfg = root / "config.json"
    for stage in ("stats", "acoustics", "gate", "annotate"):
        assert run("--config", cfg, stage) == 0
    assert run("--config", cfg, "fit", "--model-spec", spec) == 0
    rec = json.loads((root / "out" / "fit" / "dur_log10_ms.json").read_text())
    fit = lmm.FitResult.from_dict(rec["final"])
    table = pr.PredictorTable.read_tsv(root / "out" / "annotate" / "predictors.tsv").take(rec["criticism"]["kept_rows"])
    truth = json.loads((root / "truth.json").read_text())
    return fit, table, truth


def test_injected_effects_recovered(tmp_path):
    fit, table, truth = _run_duration_fit(tmp_path / "sim", seed=21)
    for key, col, raw in (("fwd", "fwd_inf_z", "fwd_inf_bits"), ("bwd", "bwd_inf_z", "bwd_inf_bits")):
        # the model was generated per reference SD; the table is standardized on its own rows
        ref_sd = truth["informativity_reference"][key]["sd"]
        expected = truth["effects_per_sd"]["dur_log10_ms"][key] * table.numeric(raw).std(ddof=1) / ref_sd
        c = fit.coef(col)
        assert abs(c.estimate - expected) < 1.96 * c.se, (col, c.estimate, expected, c.se)


def test_null_effects_not_significant(tmp_path):
    fit, _, _ = _run_duration_fit(tmp_path / "sim", seed=22, null=True)
    for col in lmm.INFORMATIVITY:
        assert abs(fit.coef(col).t) < 2.5
