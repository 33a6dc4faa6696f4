"""Run configuration: input paths, stage parameters and the output directory."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import acoustics as ac
from .quality import Thresholds


class ConfigError(ValueError):
    """Bad or missing configuration; the CLI maps this to exit code 2."""


PATH_FIELDS = ("corpus", "alignment_dir", "audio_dir", "speakers", "acoustics_table", "model_spec", "out_dir")


@dataclass
class RunConfig:
    corpus: Path | None = None
    alignment_dir: Path | None = None  # one <dialogue_id>.tsv per dialogue
    audio_dir: Path | None = None  # <audio_dir>/<dialogue_id>/<speaker_id>.wav
    speakers: Path | None = None
    acoustics_table: Path | None = None  # precomputed per-word acoustics, used when there is no audio
    model_spec: Path | None = None  # JSON spec or list of specs; default: the five standard models
    out_dir: Path = Path("lexprosody-out")
    thresholds: Thresholds = field(default_factory=Thresholds)
    pitch_floor: float = ac.PITCH_FLOOR
    pitch_ceiling: float = ac.PITCH_CEILING
    intensity_min_pitch: float = ac.INTENSITY_MIN_PITCH
    seed: int = 1
    threads: int = 1

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "RunConfig":
        """Relative paths are resolved against ``base`` (the config file's directory)."""
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kw = dict(d)
        for k in PATH_FIELDS:
            if kw.get(k) is not None:
                p = Path(kw[k])
                kw[k] = p if p.is_absolute() or base is None else base / p
        if "thresholds" in kw:
            t = kw["thresholds"]
            kw["thresholds"] = Thresholds.parse(t) if isinstance(t, str) else Thresholds(**t)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(d, path.parent)

    def to_dict(self, relative_to: Path | None = None) -> dict:
        d = asdict(self)
        for k in PATH_FIELDS:
            if d[k] is not None:
                p = Path(d[k])
                if relative_to is not None:
                    try:
                        p = p.relative_to(relative_to)
                    except ValueError:
                        pass
                d[k] = str(p)
        return d

    def validate(self, required=()) -> None:
        """Check parameter ranges and that the ``required`` path fields exist."""
        if not 0 < self.pitch_floor < self.pitch_ceiling:
            raise ConfigError(f"pitch floor ({self.pitch_floor}) must be positive and below the ceiling "
                              f"({self.pitch_ceiling})")
        if self.intensity_min_pitch <= 0:
            raise ConfigError("intensity_min_pitch must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        for name in required:
            p = getattr(self, name)
            if p is None:
                raise ConfigError(f"missing required path: {name}")
            if not Path(p).exists():
                raise ConfigError(f"{name} not found: {p}")

    def stage_dir(self, stage: str) -> Path:
        return Path(self.out_dir) / stage
