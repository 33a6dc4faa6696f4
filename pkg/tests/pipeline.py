"""Helpers that drive the command-line pipeline in-process."""
from pathlib import Path

from lexprosody import cli

PIPELINE = ("stats", "acoustics", "gate", "annotate", "fit", "mediate", "report")


def run(*argv) -> int:
    return cli.main(["-q", *map(str, argv)])


def run_pipeline(sim_dir, threads=1, force=False) -> dict:
    cfg = Path(sim_dir) / "config.json"
    extra = ["--force"] if force else []
    return {s: run("--config", cfg, "--threads", threads, *extra, s) for s in PIPELINE}


def tree_bytes(root) -> dict:
    root = Path(root)
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
