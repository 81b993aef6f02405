"""Declarative experiment configuration (``key = value`` lines, comma lists form the grid)."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import InvalidParameterError

MODEL_KINDS = ("glm", "sparse_glm", "btl", "nonparam")
GRID_KEYS = ("n", "d", "s_star", "p", "eps", "delta", "alpha", "C")
INT_KEYS = {"n", "d", "s_star", "alpha", "replicates", "seed", "s", "T", "K", "grid_size", "burn_in", "thin"}
_POWER = re.compile(r"^n\s*\^\s*(-?\d+(?:\.\d*)?(?:[eE]-?\d+)?)$")


class ConfigError(InvalidParameterError):
    """Malformed or inconsistent experiment configuration."""


def _parse_scalar(key: str, text: str):
    text = text.strip()
    if key == "delta" and _POWER.match(text.replace(" ", "")):
        return text.replace(" ", "")
    try:
        value = float(text)
    except ValueError:
        return text
    if key in INT_KEYS:
        if value != int(value):
            raise ConfigError(f"{key} must be an integer, got {text!r}")
        return int(value)
    return value


def resolve_delta(delta, n: int) -> float:
    """Turn a literal or an ``n^-a`` expression into a number."""
    if isinstance(delta, str):
        m = _POWER.match(delta.replace(" ", ""))
        if not m:
            raise ConfigError(f"cannot interpret delta {delta!r}")
        return float(n) ** float(m.group(1))
    return float(delta)


@dataclass
class ExperimentConfig:
    model: str
    grid: dict
    replicates: int = 1
    seed: int = 0
    output: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise ConfigError("the parameter grid is empty")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be at least 1, got {self.replicates}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        for key in self.grid:
            if key not in GRID_KEYS:
                raise ConfigError(f"{key!r} cannot be a grid axis; grid axes are {GRID_KEYS}")

    def cells(self) -> list[dict]:
        """Cartesian product of the grid, in declaration order, with ``delta`` resolved."""
        keys = list(self.grid)
        out = []
        for combo in itertools.product(*(self.grid[k] for k in keys)):
            cell = dict(zip(keys, combo))
            if "delta" in cell:
                if "n" not in cell:
                    raise ConfigError("delta expressions need an n axis")
                cell["delta"] = resolve_delta(cell["delta"], cell["n"])
            out.append(cell)
        return out


def parse_config(text: str) -> ExperimentConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        parts = [p for p in (s.strip() for s in val.split(",")) if p]
        if not parts:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        values[key] = [_parse_scalar(key, p) for p in parts]

    def single(key, default=None):
        if key not in values:
            return default
        if len(values[key]) != 1:
            raise ConfigError(f"{key} takes a single value")
        return values.pop(key)[0]

    model = single("model")
    if model is None:
        raise ConfigError("missing required key 'model'")
    replicates = single("replicates", 1)
    seed = single("seed", 0)
    output = single("output")
    grid = {k: values.pop(k) for k in list(values) if k in GRID_KEYS}
    options = {}
    for k, v in values.items():
        if len(v) != 1:
            raise ConfigError(f"{k} is not a grid axis and takes a single value")
        options[k] = v[0]
    return ExperimentConfig(str(model), grid, int(replicates), int(seed), output, options)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
