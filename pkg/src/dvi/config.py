"""Run configuration and the flat ``key = value`` config file format.

Each non-blank, non-comment line is ``key = <JSON literal>``::

    # default sampling settings at toy dims
    steps = 25
    guidance = 4.0
    mode = "full"
    alpha = [0.8, 0.8, 0.6, 0.6]

Keys mirror :class:`RunConfig` fields. Values carry their own type (quoted
strings, ints, floats, lists), which is then checked against the field.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

MODES = ("full", "no_visual", "concat")


@dataclass(frozen=True)
class RunConfig:
    steps: int = 25
    guidance: float = 4.0
    lambda_base: float = 1.0
    psi: float = 0.5
    alpha: float | tuple[float, ...] = 0.8
    mode: str = "full"
    # seeds
    noise_seed: int = 0
    weight_seed: int = 1
    id_seed: int = 2
    prompt_seed: int = 3
    # dims
    C: int = 16
    h: int = 8
    w: int = 8
    d_model: int = 64
    heads: int = 4
    layers: int = 4
    patch: int = 2
    D: int = 2048
    N: int = 8
    eps_norm: float = 1e-5
    bias_source: str = "raw"

    def __post_init__(self):
        if isinstance(self.alpha, list):
            object.__setattr__(self, "alpha", tuple(self.alpha))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.guidance < 0:
            raise ValueError(f"guidance must be >= 0, got {self.guidance}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.lambda_base < 0:
            raise ValueError(f"lambda_base must be >= 0, got {self.lambda_base}")
        for name in ("noise_seed", "weight_seed", "id_seed", "prompt_seed"):
            if not 0 <= getattr(self, name) < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer")
        dims = (self.C, self.h, self.w, self.d_model, self.heads, self.layers, self.patch, self.D, self.N)
        if min(dims) < 1:
            raise ValueError(f"all dims must be positive: {self.dims}")
        if self.h % self.patch or self.w % self.patch:
            raise ValueError(f"latent {self.h}x{self.w} is not divisible by patch {self.patch}")

    @property
    def seeds(self) -> dict[str, int]:
        return {"noise": self.noise_seed, "weights": self.weight_seed, "id": self.id_seed, "prompt": self.prompt_seed}

    @property
    def dims(self) -> dict[str, int]:
        keys = ("C", "h", "w", "d_model", "heads", "layers", "patch", "D", "N")
        return {k: getattr(self, k) for k in keys}

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        if isinstance(d["alpha"], tuple):
            d["alpha"] = list(d["alpha"])
        return d

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, value: Any) -> Any:
    kind = _FIELD_TYPES[key]
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ValueError(f"{key}: expected a quoted string, got {value!r}")
        return value
    # alpha: number or list of numbers
    if isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return tuple(float(v) for v in value)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ValueError(f"{key}: expected a number or list of numbers, got {value!r}")


def parse_config_text(text: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        if key not in _FIELD_TYPES:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        try:
            literal = json.loads(value.strip())
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: cannot parse value for {key!r}: {exc.msg}") from None
        out[key] = _coerce(key, literal)
    return out


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Defaults, then the file at ``path``, then non-None ``overrides``."""
    values: dict[str, Any] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in cfg.to_dict().items())
