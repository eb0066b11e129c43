"""Flat ``key = value`` configuration files with ``#`` comments."""

from __future__ import annotations

from pathlib import Path

from .errors import ParameterError

KEYS = {
    "experiment",
    "C",
    "N",
    "w",
    "z",
    "r",
    "s",
    "H",
    "slots",
    "runs",
    "seed",
    "r_step",
    "h_max",
    "k_trunc",
    "out",
    "format",
    "seq_file",
    "budget",
    "screen_slots",
    "screen_runs",
    "screen_keep",
}


def parse_config(text: str) -> dict[str, str]:
    """Parse config text into raw string values; later keys win."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ParameterError(f"line {lineno}: unknown key {key!r}")
        if not value:
            raise ParameterError(f"line {lineno}: empty value for {key!r}")
        out[key] = value
    return out


def load_config(path: str | Path) -> dict[str, str]:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]
