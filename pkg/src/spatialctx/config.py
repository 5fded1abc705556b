"""Run configuration.

A config file is flat ``key = value`` lines; ``#`` starts a comment.  Values
from command-line flags override the file, which overrides the defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .core import DEFAULT_RADII, RadiiGrid
from .errors import InvalidArgumentError, ParseError


@dataclass(frozen=True)
class Config:
    radii: tuple = DEFAULT_RADII
    patch_size: float = 180.0
    n_max: float = 100.0
    k: int = 5
    max_halfwidth: int = 4
    min_gap: int = 1
    threshold: float = 0.5
    min_size: int = 5
    match_radius: float = 6.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        RadiiGrid(self.radii)
        for name in ("patch_size", "n_max", "k", "max_halfwidth", "min_size", "match_radius", "workers"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"config {name} must be positive")
        if not 0 < self.threshold < 1:
            raise InvalidArgumentError("config threshold must lie in (0, 1)")
        if self.min_gap < 0:
            raise InvalidArgumentError("config min_gap must be >= 0")

    @property
    def radii_grid(self) -> RadiiGrid:
        return RadiiGrid(self.radii)

    @property
    def max_square_width(self) -> int:
        return 2 * self.max_halfwidth + 1

    def with_overrides(self, **kw) -> "Config":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **_coerce(kw, "<flags>")) if kw else self


_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(raw: dict, source: str) -> dict:
    out = {}
    for key, val in raw.items():
        if key not in _TYPES:
            raise ParseError(f"{source}: unknown config key {key!r}")
        kind = _TYPES[key]
        try:
            if key == "radii":
                if isinstance(val, str):
                    val = [float(v) for v in val.replace(" ", "").split(",") if v]
                out[key] = tuple(float(v) for v in val)
            elif kind == "int":
                f = float(val)
                if f != int(f):
                    raise ValueError(val)
                out[key] = int(f)
            else:
                out[key] = float(val)
        except (TypeError, ValueError):
            raise ParseError(f"{source}: bad value for {key}: {val!r}") from None
    return out


def parse_config_text(text: str, source: str = "<config>") -> dict:
    raw = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{source}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ParseError(f"{source}:{n}: duplicate key {key!r}")
        raw.update(_coerce({key: val}, f"{source}:{n}"))
    return raw


def load_config(path=None, **overrides) -> Config:
    cfg = Config()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as e:
            raise ParseError(f"{p}: {e.strerror}") from e
        cfg = replace(cfg, **parse_config_text(text, str(p)))
    return cfg.with_overrides(**overrides)
