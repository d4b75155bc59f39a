"""Run configuration: defaults, a TOML file, then command-line overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

FAMILIES = ("E", "B", "Bm", "Bm_general")


@dataclass(frozen=True)
class RunConfig:
    # velocity basis and collision assembly
    degree: int = 10
    samples: int = 10_000_000
    seed: int = 0
    cache_dir: str = ".cache"
    # operator family; a, b only matter for Bm_general
    family: str = "Bm"
    a: float = 1.0
    b: float = 1.0
    # low-frequency branch window
    r0: float = 0.3
    s_min: float = 1e-3
    branch_points: int = 40
    # gap scan
    gap_s_min: float = 1e-2
    gap_s_max: float = 10.0
    gap_points: int = 60
    # dispersion root scan (Re lambda, Im lambda, s)
    scan_re: int = 50
    scan_im: int = 50
    scan_s: int = 20
    # time grid and decay fits
    t_max: float = 100.0
    fit_lo: float = 10.0
    fit_hi: float = 100.0
    window_points: int = 46
    radial_grid: str = "panels"
    radial_points: int = 64
    # initial data
    d0: float = 1.0
    d1: float = 1.0
    r_param: float = 0.3
    # output
    out: str = "runs"
    threads: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.degree < 4:
            raise ValueError("degree must be at least 4")
        if self.samples <= 0 or self.threads <= 0:
            raise ValueError("samples and threads must be positive")
        if self.a <= 0 or self.b <= 0:
            raise ValueError("a and b must be positive")
        if not 0 < self.fit_lo < self.fit_hi <= self.t_max:
            raise ValueError("need 0 < fit_lo < fit_hi <= t_max")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)


def _flatten(tree: dict) -> dict:
    """Tables only group keys; their names are dropped."""
    flat = {}
    for key, value in tree.items():
        if isinstance(value, dict):
            for k, v in _flatten(value).items():
                if k in flat:
                    raise ValueError(f"key {k!r} set twice in config")
                flat[k] = v
        else:
            if key in flat:
                raise ValueError(f"key {key!r} set twice in config")
            flat[key] = value
    return flat


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Defaults, then the TOML file at ``path``, then non-None ``overrides``."""
    values = {}
    if path is not None:
        with open(path, "rb") as fh:
            values = _flatten(tomllib.load(fh))
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    typed = {}
    for key, value in values.items():
        kind = type(getattr(RunConfig, key))
        typed[key] = kind(value) if kind is not bool else bool(value)
    return RunConfig(**typed)
