"""Command-line pipeline: stats, acoustics, gate, annotate, fit, mediate, report, simulate.

Every stage writes its outputs plus ``manifest.json`` into ``<out_dir>/<stage>/``.
The manifest records SHA-256 hashes of the stage's inputs, parameters and
outputs. A stage refuses to run on upstream outputs that are missing (exit 3)
or stale (exit 3, unless ``--force``), and skips itself when its own manifest
shows it is already up to date (``--force`` reruns it).

Exit codes: 0 success, 2 input error, 3 missing or stale upstream stage,
4 a model fit did not converge.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path


from . import acoustics as ac
from . import corpus_io as cio
from . import lmm, ngram, predictors as pr, quality as qg, report as rp, simulate as sm
from .config import ConfigError, RunConfig

log = logging.getLogger("lexprosody")

EXIT_OK, EXIT_INPUT, EXIT_UPSTREAM, EXIT_NONCONVERGED = 0, 2, 3, 4
MANIFEST = "manifest.json"
MANIFEST_VERSION = 1
STAGES = ("stats", "acoustics", "gate", "annotate", "fit", "mediate", "report")

# dependent -> mediators added one at a time
MEDIATION_GRID = {
    "dur_log10_ms": ("max_pitch_log10_hz", "max_intensity_db"),
    "max_pitch_log10_hz": ("dur_log10_ms",),
    "max_intensity_db": ("dur_log10_ms",),
}


class UpstreamError(RuntimeError):
    """An upstream stage has not run, or its outputs no longer match its manifest."""


# -- hashing and manifests ----------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_path(path) -> str:
    """Files hash their bytes; directories hash their sorted (relative name, file hash) listing."""
    path = Path(path)
    if path.is_file():
        return sha256_file(path)
    h = hashlib.sha256()
    for f in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(f"{f.relative_to(path).as_posix()}\t{sha256_file(f)}\n".encode())
    return h.hexdigest()


def _json_dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _rel(path, root) -> str:
    """Path relative to the output directory, so manifests do not depend on where the run lives."""
    return Path(os.path.relpath(Path(path).resolve(), Path(root).resolve())).as_posix()


class Stage:
    """Bookkeeping for one stage run: input hashes, up-to-date check, manifest."""

    def __init__(self, cfg: RunConfig, name: str, inputs: dict, parameters: dict, upstream=()):
        self.cfg, self.name = cfg, name
        self.dir = cfg.stage_dir(name)
        self.inputs = {k: {"path": _rel(p, cfg.out_dir), "sha256": sha256_path(p)}
                       for k, p in sorted(inputs.items()) if p is not None}
        self.parameters = parameters
        self.upstream = {u: sha256_file(check_upstream(cfg, u)) for u in upstream}

    def _record(self) -> dict:
        return {"stage": self.name, "version": MANIFEST_VERSION, "inputs": self.inputs,
                "upstream": self.upstream, "parameters": self.parameters}

    def up_to_date(self) -> bool:
        m = self.dir / MANIFEST
        if not m.exists():
            return False
        old = json.loads(m.read_text(encoding="utf-8"))
        if {k: old.get(k) for k in self._record()} != self._record():
            return False
        return all((self.dir / f).exists() and sha256_file(self.dir / f) == h for f, h in old["outputs"].items())

    def begin(self, force: bool) -> bool:
        """False when the stage can be skipped."""
        if not force and self.up_to_date():
            log.info("%s: up to date (use --force to rerun)", self.name)
            return False
        self.dir.mkdir(parents=True, exist_ok=True)
        return True

    def finish(self, outputs, extra: dict | None = None) -> None:
        rec = self._record()
        rec["outputs"] = {f: sha256_file(self.dir / f) for f in sorted(outputs)}
        if extra:
            rec.update(extra)
        _json_dump(rec, self.dir / MANIFEST)
        log.info("%s: wrote %s", self.name, ", ".join(sorted(outputs)))


_FORCE = False  # set by main(); lets --force override stale upstream checks


def check_upstream(cfg: RunConfig, stage: str) -> Path:
    """Path of the upstream manifest after verifying its outputs and inputs still match."""
    m = cfg.stage_dir(stage) / MANIFEST
    if not m.exists():
        raise UpstreamError(f"missing output of stage {stage!r}; run `lexprosody {stage}` first")
    rec = json.loads(m.read_text(encoding="utf-8"))
    problems = []
    for f, h in rec["outputs"].items():
        p = cfg.stage_dir(stage) / f
        if not p.exists():
            raise UpstreamError(f"stage {stage!r} output {f} is missing; rerun `lexprosody {stage}`")
        if sha256_file(p) != h:
            problems.append(f"output {f} changed")
    for label, entry in rec["inputs"].items():
        p = Path(entry["path"])
        p = p if p.is_absolute() else Path(cfg.out_dir) / p
        if not p.exists() or sha256_path(p) != entry["sha256"]:
            problems.append(f"input {label} changed")
    if problems:
        msg = f"stage {stage!r} is stale ({'; '.join(problems)}); rerun it or pass --force"
        if not _FORCE:
            raise UpstreamError(msg)
        log.warning("%s (continuing because of --force)", msg)
    return m


# -- loading helpers ----------------------------------------------------------------

def load_dialogues(cfg: RunConfig) -> dict:
    """``{dialogue_id: [UtteranceRecord]}``, one alignment file per dialogue."""
    files = sorted(Path(cfg.alignment_dir).glob("*.tsv"))
    if not files:
        raise ConfigError(f"no alignment .tsv files in {cfg.alignment_dir}")
    out, seen = {}, set()
    for f in files:
        records = cio.parse_alignment(f)
        for r in records:
            if r.turn_id in seen:
                raise cio.CorpusFormatError(f"{f}: turn id {r.turn_id!r} also used in another dialogue")
            seen.add(r.turn_id)
        out[f.stem] = records
    return out


def load_speakers(cfg: RunConfig, dialogues: dict) -> dict:
    speakers = cio.parse_speakers(cfg.speakers)
    report = cio.validate_metadata((r for recs in dialogues.values() for r in recs), speakers)
    if report.missing:
        raise ConfigError(f"speakers without metadata: {', '.join(report.missing)}")
    return speakers


def _channel(cfg: RunConfig, did: str, spk: str) -> Path:
    return Path(cfg.audio_dir) / did / f"{spk}.wav"


def _pool_map(fn, jobs: list, threads: int) -> list:
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as ex:
        return list(ex.map(fn, *zip(*jobs)))


# -- stages ----------------------------------------------------------------------

def cmd_stats(cfg: RunConfig, force: bool = False) -> int:
    cfg.validate(["corpus"])
    st = Stage(cfg, "stats", {"corpus": cfg.corpus}, {})
    if not st.begin(force):
        return EXIT_OK
    stats = ngram.LexiconStats().add(cio.read_corpus(cfg.corpus)).freeze()
    ngram.write_snapshot(stats, st.dir / "lexicon.snapshot")
    ngram.write_rows_tsv(ngram.export_lexicon(stats), ngram.WORD_COLUMNS, st.dir / "lexicon.tsv")
    ngram.write_rows_tsv(ngram.export_bigrams(stats), ngram.BIGRAM_COLUMNS, st.dir / "bigrams.tsv")
    st.finish(["lexicon.snapshot", "lexicon.tsv", "bigrams.tsv"],
              {"tokens": stats.total_tokens, "types": len(stats.types())})
    return EXIT_OK


def _measure_channel(path, records, floor, ceiling, min_pitch) -> list:
    x, sr = ac.read_wav(path)
    pitch = ac.extract_pitch(x, sr, floor=floor, ceiling=ceiling)
    intensity = ac.extract_intensity(x, sr, min_pitch=min_pitch)
    return ac.measure_record_words(pitch, intensity, records)


def cmd_acoustics(cfg: RunConfig, force: bool = False) -> int:
    if cfg.audio_dir is None and cfg.acoustics_table is None:
        raise ConfigError("acoustics needs audio_dir or acoustics_table")
    source = "audio" if cfg.audio_dir is not None else "table"
    cfg.validate(["alignment_dir", "audio_dir" if source == "audio" else "acoustics_table"])
    params = {"source": source}
    if source == "audio":
        params.update(pitch_floor=cfg.pitch_floor, pitch_ceiling=cfg.pitch_ceiling,
                      intensity_min_pitch=cfg.intensity_min_pitch)
    st = Stage(cfg, "acoustics", {"alignment": cfg.alignment_dir, "audio": cfg.audio_dir,
                                  "acoustics_table": cfg.acoustics_table}, params)
    if not st.begin(force):
        return EXIT_OK
    dialogues = load_dialogues(cfg)
    rows = []
    if source == "audio":
        jobs = []
        for did, records in dialogues.items():
            for spk in sorted({r.speaker_id for r in records}):
                path = _channel(cfg, did, spk)
                if not path.exists():
                    raise ConfigError(f"missing audio channel {path}")
                jobs.append((path, [r for r in records if r.speaker_id == spk],
                             cfg.pitch_floor, cfg.pitch_ceiling, cfg.intensity_min_pitch))
        for part in _pool_map(_measure_channel, jobs, cfg.threads):
            rows.extend(part)
    else:
        table = ac.read_acoustics_tsv(cfg.acoustics_table)
        for records in dialogues.values():
            for r in records:
                for k, w in enumerate(r.words):
                    # words absent from the table are kept as unusable
                    rows.append((r.turn_id, k, table.get((r.turn_id, k),
                                                         ac.WordAcoustics(1000.0 * w.duration_s, None, None,
                                                                          None, None, False))))
    rows.sort(key=lambda t: (t[0], t[1]))
    ac.write_acoustics_tsv(rows, st.dir / "acoustics.tsv")
    st.finish(["acoustics.tsv"], {"words": len(rows), "usable": sum(int(a.usable) for _, _, a in rows)})
    return EXIT_OK


def _chunk_snr(path, records) -> list:
    x, sr = ac.read_wav(path)
    out = []
    for r in records:
        seg = x[int(round(r.turn_onset_s * sr)):int(round(r.turn_offset_s * sr))]
        try:
            out.append((r.turn_id, qg.wada_snr(seg), qg.nist_snr(seg, sr)))
        except qg.NoSignalError:
            out.append((r.turn_id, None, None))
    return out


def cmd_gate(cfg: RunConfig, force: bool = False) -> int:
    cfg.validate(["alignment_dir", "speakers"])
    t = cfg.thresholds
    st = Stage(cfg, "gate", {"alignment": cfg.alignment_dir, "audio": cfg.audio_dir, "speakers": cfg.speakers},
               {"thresholds": [t.tone_nist_z, t.noisy_nist_z, t.noisy_wada_z]})
    if not st.begin(force):
        return EXIT_OK
    dialogues = load_dialogues(cfg)
    speakers = load_speakers(cfg, dialogues)
    records = [r for did in dialogues for r in dialogues[did]]
    if cfg.audio_dir is not None:
        jobs = [(_channel(cfg, did, spk), [r for r in recs if r.speaker_id == spk])
                for did, recs in dialogues.items() for spk in sorted({r.speaker_id for r in recs})]
        snr = {tid: (w, n) for part in _pool_map(_chunk_snr, jobs, cfg.threads) for tid, w, n in part}
        chunks, silent = [], []
        for r in records:
            w, n = snr[r.turn_id]
            if w is None:
                silent.append(r.turn_id)
            else:
                chunks.append(qg.Chunk(r.turn_id, r.speaker_id, w, n, pr.annotation_flagged(r)))
        by_id = {rep.chunk_id: rep for rep in qg.gate(chunks, speakers, t)}
        for tid in silent:  # digital silence: no usable signal at all
            by_id[tid] = qg.SnrReport(tid, None, None, decision=qg.DROP_NOISY)
        reports = [by_id[r.turn_id] for r in records]
    else:
        log.warning("gate: no audio_dir; SNR rules skipped, only phone-type and annotation rules applied")
        reports = []
        for r in records:
            if speakers[r.speaker_id].phone_type == "mobile":
                d = qg.DROP_MOBILE
            else:
                d = qg.DROP_ANNOTATION if pr.annotation_flagged(r) else qg.KEEP
            reports.append(qg.SnrReport(r.turn_id, None, None, decision=d))
    qg.write_manifest(reports, st.dir / "snr_manifest.tsv")
    counts = {d: sum(rep.decision == d for rep in reports) for d in qg.DECISIONS}
    st.finish(["snr_manifest.tsv"], {"decisions": counts})
    return EXIT_OK


def cmd_annotate(cfg: RunConfig, force: bool = False) -> int:
    cfg.validate(["alignment_dir", "speakers"])
    st = Stage(cfg, "annotate", {"alignment": cfg.alignment_dir, "speakers": cfg.speakers}, {},
               upstream=("stats", "acoustics", "gate"))
    if not st.begin(force):
        return EXIT_OK
    dialogues = load_dialogues(cfg)
    speakers = load_speakers(cfg, dialogues)
    stats = ngram.read_snapshot(cfg.stage_dir("stats") / "lexicon.snapshot")
    acoustics = ac.read_acoustics_tsv(cfg.stage_dir("acoustics") / "acoustics.tsv")
    decisions = {k: v.decision for k, v in qg.read_manifest(cfg.stage_dir("gate") / "snr_manifest.tsv").items()}
    table, ledger = pr.assemble(dialogues, acoustics, stats, speakers, decisions)
    table.write_tsv(st.dir / "predictors.tsv")
    ledger.write_json(st.dir / "ledger.json")
    st.finish(["predictors.tsv", "ledger.json"], {"rows": len(table)})
    return EXIT_OK


def load_specs(cfg: RunConfig) -> list:
    if cfg.model_spec is None:
        return [lmm.default_spec(d) for d in pr.DEPENDENTS]
    d = json.loads(Path(cfg.model_spec).read_text(encoding="utf-8"))
    return [lmm.ModelSpec.from_dict(x) for x in (d if isinstance(d, list) else [d])]


def _fit_job(table_path, spec_dict) -> dict:
    table = pr.PredictorTable.read_tsv(table_path)
    spec = lmm.ModelSpec.from_dict(spec_dict)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", lmm.ExcessTrimWarning)
        crit = lmm.model_criticism(table, spec)
    return {
        "spec": spec.to_dict(),
        "initial": crit.fit.to_dict(),
        "final": crit.refit.to_dict(),
        "criticism": {"threshold_sd": lmm.TRIM_SD, "excluded_fraction": crit.excluded_fraction,
                      "excluded": len(table) - len(crit.kept_index),
                      "kept_rows": [int(i) for i in crit.kept_index]},
        "warnings": [str(w.message) for w in caught],
    }


def cmd_fit(cfg: RunConfig, force: bool = False) -> int:
    cfg.validate(["model_spec"] if cfg.model_spec is not None else [])
    specs = load_specs(cfg)
    st = Stage(cfg, "fit", {"model_spec": cfg.model_spec}, {"specs": [s.to_dict() for s in specs]},
               upstream=("annotate",))
    if not st.begin(force):
        return _fit_status(cfg)
    table_path = cfg.stage_dir("annotate") / "predictors.tsv"
    results = _pool_map(_fit_job, [(table_path, s.to_dict()) for s in specs], cfg.threads)
    outputs = []
    for spec, res in zip(specs, results):
        name = f"{spec.dependent}.json"
        _json_dump(res, st.dir / name)
        outputs.append(name)
        for w in res["warnings"]:
            log.warning("fit %s: %s", spec.dependent, w)
    status = {r["spec"]["dependent"]: bool(r["initial"]["converged"] and r["final"]["converged"]) for r in results}
    st.finish(outputs, {"converged": status})
    return _fit_status(cfg)


def _fit_status(cfg: RunConfig) -> int:
    rec = json.loads((cfg.stage_dir("fit") / MANIFEST).read_text(encoding="utf-8"))
    bad = [d for d, ok in rec["converged"].items() if not ok]
    if bad:
        log.error("fit: no convergence for %s", ", ".join(bad))
        return EXIT_NONCONVERGED
    return EXIT_OK


def _mediation_job(table_path, fit_path, mediators) -> dict:
    rec = json.loads(Path(fit_path).read_text(encoding="utf-8"))
    spec = lmm.ModelSpec.from_dict(rec["spec"])
    table = pr.PredictorTable.read_tsv(table_path).take(rec["criticism"]["kept_rows"])
    base = lmm.FitResult.from_dict(rec["final"])
    return lmm.mediate(table, spec, list(mediators), base=base).to_dict()


def cmd_mediate(cfg: RunConfig, force: bool = False) -> int:
    st = Stage(cfg, "mediate", {}, {"grid": {k: list(v) for k, v in MEDIATION_GRID.items()}},
               upstream=("annotate", "fit"))
    if not st.begin(force):
        return EXIT_OK
    table_path = cfg.stage_dir("annotate") / "predictors.tsv"
    jobs = []
    for dep, meds in MEDIATION_GRID.items():
        fit_path = cfg.stage_dir("fit") / f"{dep}.json"
        if not fit_path.exists():
            raise UpstreamError(f"no fit for {dep}; the mediation grid needs the default models")
        jobs.append((table_path, fit_path, meds))
    dicts = _pool_map(_mediation_job, jobs, cfg.threads)
    reports = [lmm.MediationReport(d["dependent"], tuple(d["predictors"]), d["columns"]) for d in dicts]
    lmm.write_mediation(reports, st.dir / "mediation.json", st.dir / "mediation.tsv")
    st.finish(["mediation.json", "mediation.tsv"])
    return EXIT_OK


def cmd_report(cfg: RunConfig, force: bool = False) -> int:
    upstream = ["stats", "annotate", "fit"]
    if (cfg.stage_dir("mediate") / MANIFEST).exists():
        upstream.append("mediate")
    st = Stage(cfg, "report", {}, {}, upstream=upstream)
    if not st.begin(force):
        return EXIT_OK
    table = pr.PredictorTable.read_tsv(cfg.stage_dir("annotate") / "predictors.tsv")
    continuous = [c for c in pr.DEPENDENTS + tuple(pr.Z_COLUMNS) if c in table]
    rows = rp.describe(table, continuous, {c: pr.BINARY_LEVELS[c] for c in pr.BINARY_COLUMNS if c in table})
    rp.write_text(st.dir / "descriptives.md", rp.descriptive_markdown(rows))
    rp.write_text(st.dir / "descriptives.tsv", rp.descriptive_tsv(rows))
    cm = rp.correlate(table, list(pr.DEPENDENTS))
    rp.write_text(st.dir / "correlations.md", rp.correlation_markdown(cm))
    rp.write_text(st.dir / "correlations.tsv", rp.correlation_tsv(cm))
    stats = ngram.read_snapshot(cfg.stage_dir("stats") / "lexicon.snapshot")
    rp.write_frequency_informativity(ngram.export_lexicon(stats), st.dir / "frequency_informativity.tsv")

    ledger = json.loads((cfg.stage_dir("annotate") / "ledger.json").read_text(encoding="utf-8"))
    parts = ["# Run summary", "", f"Tokens: {ledger['total']:,}; kept: {ledger['kept']:,}", "",
             "| Exclusion rule | Tokens |", "|---|---|"]
    parts += [f"| {k} | {v:,} |" for k, v in ledger["excluded"].items()]
    parts += ["", "## Descriptive statistics", "", rp.descriptive_markdown(rows),
              "## Correlations of the dependent variables", "", rp.correlation_markdown(cm), "## Models", ""]
    for path in sorted(cfg.stage_dir("fit").glob("*.json")):
        if path.name == MANIFEST:
            continue
        rec = json.loads(path.read_text(encoding="utf-8"))
        crit = rec["criticism"]
        title = (f"{rp.DEFAULT_LABELS.get(rec['spec']['dependent'], rec['spec']['dependent'])} "
                 f"(after trimming {100 * crit['excluded_fraction']:.2f}% of rows)")
        parts.append(rp.fit_markdown(lmm.FitResult.from_dict(rec["final"]), title))
    med = cfg.stage_dir("mediate") / "mediation.json"
    if "mediate" in upstream:
        reports = [lmm.MediationReport(d["dependent"], tuple(d["predictors"]), d["columns"])
                   for d in json.loads(med.read_text(encoding="utf-8"))]
        parts += ["## Mediation", "", rp.mediation_markdown(reports)]
    rp.write_text(st.dir / "summary.md", "\n".join(parts))
    st.finish(["descriptives.md", "descriptives.tsv", "correlations.md", "correlations.tsv",
               "frequency_informativity.tsv", "summary.md"])
    return EXIT_OK


def cmd_simulate(dest, seed: int, audio: bool = False, null: bool = False, **overrides) -> int:
    """Write a synthetic dataset and a ready-to-use ``config.json`` into ``dest``."""
    scfg = sm.SimulationConfig(seed=seed, audio=audio, **{k: v for k, v in overrides.items() if v is not None})
    if null:
        scfg.effects = {d: {"fwd": 0.0, "bwd": 0.0} for d in scfg.effects}
    data = sm.simulate_dataset(scfg)
    dest = Path(dest)
    paths = sm.write_dataset(data, dest)
    run = {"corpus": "corpus.txt", "alignment_dir": "alignment", "speakers": "speakers.tsv", "out_dir": "out",
           "seed": seed}
    if "audio" in paths:
        run["audio_dir"] = "audio"
    else:
        run["acoustics_table"] = "acoustics_model.tsv"
    _json_dump(run, dest / "config.json")
    log.info("simulate: wrote %s (config: %s)", dest, dest / "config.json")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lexprosody", description=__doc__.split("\n")[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter,
                                epilog="Exit codes: 0 success, 2 input error, 3 missing or stale upstream stage, "
                                       "4 non-convergence.")
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--threads", type=int, help="worker processes for independent jobs (default 1)")
    p.add_argument("--force", action="store_true", help="rerun up-to-date stages and accept stale upstream output")
    p.add_argument("--seed", type=int, help="random seed for simulation")
    p.add_argument("--snr-thresholds", metavar="TONE,NOISY_NIST,NOISY_WADA",
                   help="z-score cutoffs for the SNR gate (default 2.5,-1,-1)")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("stats", help="count the corpus; lexicon snapshot and TSV exports")
    s.add_argument("--corpus", type=Path)
    s = sub.add_parser("acoustics", help="per-word duration, pitch and intensity")
    s.add_argument("--alignment", type=Path, dest="alignment_dir")
    s.add_argument("--audio", type=Path, dest="audio_dir")
    s.add_argument("--acoustics-table", type=Path)
    s.add_argument("--pitch-floor", type=float)
    s.add_argument("--pitch-ceiling", type=float)
    s = sub.add_parser("gate", help="SNR estimates and keep/drop decisions per chunk")
    s.add_argument("--alignment", type=Path, dest="alignment_dir")
    s.add_argument("--audio", type=Path, dest="audio_dir")
    s.add_argument("--speakers", type=Path)
    s = sub.add_parser("annotate", help="exclusions and the predictor table")
    s.add_argument("--alignment", type=Path, dest="alignment_dir")
    s.add_argument("--speakers", type=Path)
    s = sub.add_parser("fit", help="mixed models for the five dependent variables, with one trim-refit pass")
    s.add_argument("--model-spec", type=Path)
    sub.add_parser("mediate", help="refit with each mediator added")
    sub.add_parser("report", help="descriptive tables, correlations and a run summary")
    s = sub.add_parser("simulate", help="write a synthetic dataset with known effects")
    s.add_argument("dest", type=Path)
    s.add_argument("--audio", action="store_true", help="also synthesize audio channels")
    s.add_argument("--null", action="store_true", help="inject no informativity effects")
    s.add_argument("--n-dialogues", type=int)
    s.add_argument("--turns-per-dialogue", type=int)
    s.add_argument("--corpus-lines", type=int)
    s.add_argument("--n-types", type=int)
    return p


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for name in ("corpus", "alignment_dir", "audio_dir", "speakers", "acoustics_table", "model_spec",
                 "pitch_floor", "pitch_ceiling"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if args.out is not None:
        cfg.out_dir = args.out
    if args.threads is not None:
        cfg.threads = args.threads
    if args.seed is not None:
        cfg.seed = args.seed
    if args.snr_thresholds:
        cfg.thresholds = qg.Thresholds.parse(args.snr_thresholds)
    cfg.validate()
    return cfg


COMMANDS = {"stats": cmd_stats, "acoustics": cmd_acoustics, "gate": cmd_gate, "annotate": cmd_annotate,
            "fit": cmd_fit, "mediate": cmd_mediate, "report": cmd_report}


def main(argv=None) -> int:
    global _FORCE
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr, force=True)
    _FORCE = args.force
    try:
        if args.command == "simulate":
            return cmd_simulate(args.dest, args.seed if args.seed is not None else 1, args.audio, args.null,
                                n_dialogues=args.n_dialogues, turns_per_dialogue=args.turns_per_dialogue,
                                corpus_lines=args.corpus_lines, n_types=args.n_types)
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args.force)
    except UpstreamError as e:
        log.error("error: %s", e)
        return EXIT_UPSTREAM
    except (ConfigError, cio.CorpusFormatError, ac.AudioFormatError, FileNotFoundError, ValueError, KeyError) as e:
        log.error("error: %s", e)
        return EXIT_INPUT
    finally:
        _FORCE = False


if __name__ == "__main__":
    sys.exit(main())
