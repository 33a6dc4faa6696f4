import math
import time
import warnings

import numpy as np
import pytest

from lexprosody import lmm
from lexprosody.lmm import ModelSpec, RandomTerm
from lexprosody.simulate import Table, mixed_model_table

from oracles import anova_reml_oneway, ols

FULL = ModelSpec("y", ["fwd_inf_z", "bwd_inf_z", "x"],
                 [RandomTerm("word_type"), RandomTerm("tone_sequence"),
                  RandomTerm("speaker_id", ("fwd_inf_z", "bwd_inf_z"))])


@pytest.fixture(scope="module")
def sim():
    table, truth = mixed_model_table(np.random.default_rng(11), n=2000, n_speakers=30, n_words=80)
    return table, truth, lmm.fit(table, FULL)


def gradient(design, theta, h=1e-5):
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        lo = theta - e
        if lmm.theta_bounds(design)[i][0] == 0.0 and lo[i] < 0:
            # one-sided at the boundary
            g[i] = (lmm.reml_deviance(design, theta + e) - lmm.reml_deviance(design, theta)) / h
        else:
            g[i] = (lmm.reml_deviance(design, theta + e) - lmm.reml_deviance(design, lo)) / (2 * h)
    return g


# -- oracles ---------------------------------------------------------------------

def test_no_random_effects_matches_ols():
    rng = np.random.default_rng(0)
    n = 300
    x1, x2 = rng.standard_normal((2, n))
    y = 2.0 + 0.5 * x1 - 0.3 * x2 + rng.standard_normal(n)
    res = lmm.fit({"y": y, "a": x1, "b": x2}, ModelSpec("y", ["a", "b"]))
    beta, se, sigma = ols(np.column_stack([np.ones(n), x1, x2]), y)
    assert [f.estimate for f in res.fixed] == pytest.approx(beta, abs=1e-6)
    assert [f.se for f in res.fixed] == pytest.approx(se, abs=1e-6)
    assert res.sigma == pytest.approx(sigma, abs=1e-6)
    assert res.converged and res.n_obs == n


@pytest.mark.parametrize("seed", range(4))
def test_zero_variance_groups_match_ols(seed):
    rng = np.random.default_rng(seed)
    n, g = 400, 20
    x = rng.standard_normal(n)
    groups = np.arange(n) % g
    e = rng.standard_normal(n)
    e -= np.bincount(groups, e)[groups] / (n // g)  # no between-group variation in the sample
    y = 1.0 + x + e
    res = lmm.fit({"y": y, "x": x, "g": [f"g{i}" for i in groups]}, ModelSpec("y", ["x"], [RandomTerm("g")]))
    beta, _, _ = ols(np.column_stack([np.ones(n), x]), y)
    assert res.theta[0] < 1e-6 and res.singular
    assert [f.estimate for f in res.fixed] == pytest.approx(beta, abs=1e-4)


def test_criticism_without_outliers_keeps_fit():
    rng = np.random.default_rng(16)
    n = 200
    y = np.clip(rng.standard_normal(n), -2.0, 2.0)  # every residual well inside 2.5 SD
    table = Table({"y": y, "g": [f"g{i % 5}" for i in range(n)]})
    crit = lmm.model_criticism(table, ModelSpec("y", [], [RandomTerm("g")]))
    assert crit.excluded_fraction == 0.0 and crit.refit is crit.fit


@pytest.mark.parametrize("seed,between", [(2, 1.0), (3, 0.25), (4, 0.0)])
def test_balanced_oneway_matches_closed_form(seed, between):
    rng = np.random.default_rng(seed)
    g, m = 25, 8
    groups = np.repeat(np.arange(g), m)
    y = 3.0 + math.sqrt(between) * rng.standard_normal(g)[groups] + rng.standard_normal(g * m)
    labels = [f"g{i:02d}" for i in groups]
    res = lmm.fit({"y": y, "g": labels}, ModelSpec("y", [], [RandomTerm("g")]))
    vb, vw = anova_reml_oneway(y, labels)
    assert res.varcomp[0].sds[0] ** 2 == pytest.approx(vb, abs=1e-3)
    assert res.sigma ** 2 == pytest.approx(vw, abs=1e-3)


# -- optimiser behaviour -----------------------------------------------------------

def test_multistart_agreement(sim):
    table, _, base = sim
    design = lmm.build_design(table, FULL)
    rng = np.random.default_rng(5)
    fits = [base]
    for _ in range(5):
        start = rng.uniform(0.05, 2.0, size=len(base.theta))
        start[[lo is None for lo, _ in lmm.theta_bounds(design)]] -= 1.0
        fits.append(lmm.fit_reml(design, start=start))
    devs = np.array([f.reml_deviance for f in fits])
    betas = np.array([[e.estimate for e in f.fixed] for f in fits])
    assert all(f.converged for f in fits)
    assert np.ptp(devs) < 1e-4
    assert np.ptp(betas, axis=0).max() < 1e-4


def test_gradient_at_optimum(sim):
    table, _, res = sim
    g = gradient(lmm.build_design(table, FULL), res.theta)
    assert np.max(np.abs(g)) < 1e-3


def test_trace_is_monotone(sim):
    trace = sim[2].trace
    assert len(trace) > 1
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    assert trace[-1] == pytest.approx(sim[2].reml_deviance, abs=1e-9)


def test_recovers_fixed_effects(sim):
    _, truth, res = sim
    for name, b in truth["beta"].items():
        c = res.coef(name)
        assert abs(c.estimate - b) < 4 * c.se, name


def test_row_permutation_invariance(sim):
    table, _, res = sim
    perm = np.random.default_rng(6).permutation(len(table["y"]))
    other = lmm.fit(table.take(perm), FULL)
    assert other.reml_deviance == pytest.approx(res.reml_deviance, abs=1e-10)
    for a, b in zip(res.fixed, other.fixed):
        assert (a.estimate, a.se, a.t) == pytest.approx((b.estimate, b.se, b.t), abs=1e-10)
    assert other.sigma == pytest.approx(res.sigma, abs=1e-10)
    for va, vb in zip(res.varcomp, other.varcomp):
        assert va.sds == pytest.approx(vb.sds, abs=1e-10)
    # per-row outputs follow the caller's row order
    assert np.allclose(other.residuals, res.residuals[perm], atol=1e-10)
    assert np.allclose(res.fitted + res.residuals, table["y"])


def test_sparse_path_matches_dense():
    table, _ = mixed_model_table(np.random.default_rng(7), n=600, n_speakers=12, n_words=30, n_tones=5)
    design = lmm.build_design(table, FULL)
    theta = np.linspace(0.2, 0.9, len(lmm.theta_bounds(design)))
    dense = lmm._Profiler(design, dense_limit=10**9).deviance(theta)
    sparse = lmm._Profiler(design, dense_limit=0).deviance(theta)
    assert sparse == pytest.approx(dense, abs=1e-8)


# -- design and edge cases ------------------------------------------------------------

def test_random_design_columns():
    rng = np.random.default_rng(8)
    n = 40
    table = {"y": rng.standard_normal(n), "a": rng.standard_normal(n), "b": rng.standard_normal(n),
             "spk": ["A", "B"] * 20, "w": [f"w{i % 10}" for i in range(n)]}
    d = lmm.build_design(table, ModelSpec("y", ["a", "b"], [RandomTerm("spk", ("a", "b"))]))
    assert d.Z.shape == (n, 6)
    d = lmm.build_design(table, ModelSpec("y", ["a"], [RandomTerm("w")]))
    assert d.Z.shape == (n, 10)
    assert len(lmm.theta_bounds(lmm.build_design(table, ModelSpec("y", [], [RandomTerm("spk", ("a", "b"))])))) == 6


def test_rank_deficiency_names_columns():
    rng = np.random.default_rng(9)
    a = rng.standard_normal(30)
    table = {"y": rng.standard_normal(30), "a": a, "a2": 2 * a, "g": ["x", "y", "z"] * 10}
    with pytest.raises(lmm.RankDeficientError, match="a2|a"):
        lmm.fit(table, ModelSpec("y", ["a", "a2"], [RandomTerm("g")]))


def test_single_level_group_rejected():
    table = {"y": np.arange(5.0), "g": ["a"] * 5}
    with pytest.raises(ValueError, match="at least 2 levels"):
        lmm.fit(table, ModelSpec("y", [], [RandomTerm("g")]))


def test_constant_response_is_degenerate():
    table = {"y": np.full(20, 3.0), "g": ["a", "b"] * 10}
    res = lmm.fit(table, ModelSpec("y", [], [RandomTerm("g")]))
    assert res.degenerate and not res.converged
    assert res.fixed[0].estimate == pytest.approx(3.0)


def test_spec_roundtrip(tmp_path):
    p = tmp_path / "spec.json"
    import json
    p.write_text(json.dumps(FULL.to_dict()))
    assert ModelSpec.read_json(p) == FULL
    assert lmm.default_spec("dur_log10_ms").fixed[-1] == "syncat_dur_log10_ms_z"


def test_fit_report_json(sim, tmp_path):
    import json
    sim[2].write_json(tmp_path / "fit.json")
    d = json.loads((tmp_path / "fit.json").read_text())
    assert {f["name"] for f in d["fixed"]} == {"(Intercept)", "fwd_inf_z", "bwd_inf_z", "x"}
    assert set(d["fixed"][0]) == {"name", "estimate", "se", "t", "p"}
    assert [v["group"] for v in d["varcomp"]] == ["word_type", "tone_sequence", "speaker_id"]


# -- criticism and mediation ----------------------------------------------------------

def test_criticism_fraction():
    table, _ = mixed_model_table(np.random.default_rng(12), n=10000)
    with warnings.catch_warnings():
        warnings.simplefilter("error", lmm.ExcessTrimWarning)
        crit = lmm.model_criticism(table, FULL)
    expected = 2 * 0.00620966532577613  # 2 (1 - Phi(2.5))
    assert abs(crit.excluded_fraction - expected) <= 0.003
    assert len(crit.kept_index) == crit.refit.n_obs


def test_criticism_warns_on_heavy_tails():
    rng = np.random.default_rng(13)
    n = 1000
    y = rng.standard_t(1.5, size=n)
    table = Table({"y": y, "g": [f"g{i % 10}" for i in range(n)]})
    with pytest.warns(lmm.ExcessTrimWarning):
        crit = lmm.model_criticism(table, ModelSpec("y", [], [RandomTerm("g")]), threshold=0.5)
    assert crit.excluded_fraction > 0.04


def test_trim_mask():
    r = np.array([0.0] * 50 + [10.0])
    keep = lmm.trim_mask(r)
    assert keep.sum() == 50 and not keep[-1]


def test_mediation(sim):
    table, _, base = sim
    table = Table(table)
    table["m"] = np.random.default_rng(14).standard_normal(len(table["y"]))
    rep = lmm.mediate(table, FULL, "m")
    fresh = lmm.fit(table, FULL)
    for p in lmm.INFORMATIVITY:
        assert rep.columns["none"][p] == {"beta": fresh.coef(p).estimate, "se": fresh.coef(p).se,
                                          "t": fresh.coef(p).t}
        shift = abs(rep.columns["m"][p]["beta"] - rep.columns["none"][p]["beta"])
        assert shift < rep.columns["none"][p]["se"]
    rep2 = lmm.mediate(table, FULL, ["m"], base=base)
    assert rep2.columns["none"] == rep.columns["none"]
    with pytest.raises(ValueError, match="dependent"):
        lmm.mediate(table, FULL, "y", base=base)
    with pytest.raises(ValueError, match="already"):
        lmm.mediate(table, FULL, "x", base=base)


def test_large_fit_runtime():
    table, _ = mixed_model_table(np.random.default_rng(15), n=10000)
    t0 = time.perf_counter()
    res = lmm.fit(table, FULL)
    assert time.perf_counter() - t0 < 60
    assert res.converged
