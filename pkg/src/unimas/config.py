"""Run configuration: paper constants plus harness knobs.

Config files are line-oriented ``key = value``; per-subject marks bounds
use dotted keys (``max_marks.Math = 50``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    cap: int = 1000
    min_lectures_mid: int = 16
    min_lectures_final: int = 32
    min_marks: int = 0
    max_marks: int = 100
    liveness_k: int = 100
    seed: int = 0
    max_rounds: int = 1_000_000
    lab_count: int = 1
    cs_roster: tuple[str, ...] = ("CS",)
    pipeline_window: int = 1
    inject: str | None = None
    marks_overrides: tuple[tuple[str, int, int], ...] = ()  # (subject, min, max)

    def __post_init__(self) -> None:
        for name in (
            "cap",
            "min_lectures_mid",
            "min_lectures_final",
            "liveness_k",
            "max_rounds",
            "lab_count",
            "pipeline_window",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.min_marks > self.max_marks:
            raise ConfigError("min_marks must not exceed max_marks")

    def marks_bounds(self, subject: str) -> tuple[int, int]:
        for sub, lo, hi in self.marks_overrides:
            if sub == subject:
                return lo, hi
        return self.min_marks, self.max_marks

    def header(self) -> str:
        """Canonical one-line form recorded in the trace header."""
        parts = [
            f"cap={self.cap}",
            f"min_lectures_mid={self.min_lectures_mid}",
            f"min_lectures_final={self.min_lectures_final}",
            f"min_marks={self.min_marks}",
            f"max_marks={self.max_marks}",
            f"liveness_k={self.liveness_k}",
            f"seed={self.seed}",
            f"max_rounds={self.max_rounds}",
            f"lab_count={self.lab_count}",
            f"cs_roster={'+'.join(self.cs_roster)}",
            f"pipeline_window={self.pipeline_window}",
            f"inject={self.inject or '-'}",
        ]
        parts.extend(f"marks.{s}={lo}:{hi}" for s, lo, hi in self.marks_overrides)
        return ",".join(parts)


_INT_KEYS = {
    "cap",
    "min_lectures_mid",
    "min_lectures_final",
    "min_marks",
    "max_marks",
    "liveness_k",
    "seed",
    "max_rounds",
    "lab_count",
    "pipeline_window",
}


def apply_setting(cfg: RunConfig, key: str, value: str) -> RunConfig:
    key = key.strip()
    value = value.strip()
    try:
        if key in _INT_KEYS:
            return replace(cfg, **{key: int(value)})
        if key == "cs_roster":
            roster = tuple(t for t in value.replace("+", " ").split() if t)
            if not roster:
                raise ConfigError("cs_roster must not be empty")
            return replace(cfg, cs_roster=roster)
        if key == "inject":
            return replace(cfg, inject=None if value in ("-", "") else value)
        if key.startswith("min_marks.") or key.startswith("max_marks."):
            field_name, subject = key.split(".", 1)
            lo, hi = cfg.marks_bounds(subject)
            lo, hi = (int(value), hi) if field_name == "min_marks" else (lo, int(value))
            kept = tuple(o for o in cfg.marks_overrides if o[0] != subject)
            return replace(cfg, marks_overrides=kept + ((subject, lo, hi),))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
    raise ConfigError(f"unknown config key: {key}")


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        try:
            cfg = apply_setting(cfg, key, value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
    return cfg


def parse_header(header: str) -> RunConfig:
    """Rebuild a RunConfig from a trace header line."""
    cfg = RunConfig()
    overrides: list[tuple[str, int, int]] = []
    for part in header.split(","):
        key, eq, value = part.partition("=")
        if not eq:
            raise ConfigError(f"bad header field: {part!r}")
        if key.startswith("marks."):
            lo, _, hi = value.partition(":")
            overrides.append((key[len("marks."):], int(lo), int(hi)))
        else:
            cfg = apply_setting(cfg, key, value)
    if overrides:
        cfg = replace(cfg, marks_overrides=tuple(overrides))
    return cfg
