"""Run configuration files (TOML or JSON).

Layout::

    schema_version = 1
    seed = 0

    [problem]
    preset = "plateau1d"      # or: u0_file = "u0.lgf", T = 0.1, g = 0.0
    n = 200                   # remaining keys go to the preset

    [lagrangian]
    kind = "tv"               # tv | area | weighted_tv | anisotropic_tv
    mu = 0.0

    [solve]
    tau = 0.01
    method = "primal_dual"    # or "newton"

    [certify]
    battery = 16
"""

from __future__ import annotations

import dataclasses
import hashlib
import inspect
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Dict

from . import grid as gr
from . import lagrangian as lg
from . import problems
from .errors import InvalidConfig, LGFlowError
from .solver import Problem, SolveConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1
SECTIONS = ("problem", "lagrangian", "solve", "certify")
TOP_KEYS = {"schema_version", "seed", *SECTIONS}
CERTIFY_KEYS = {"battery", "seed", "tol", "canonical"}


@dataclass
class RunConfig:
    path: str
    schema_version: int
    seed: int
    problem: Dict[str, Any] = field(default_factory=dict)
    lagrangian: Dict[str, Any] = field(default_factory=dict)
    solve: Dict[str, Any] = field(default_factory=dict)
    certify: Dict[str, Any] = field(default_factory=dict)

    @property
    def base_dir(self) -> str:
        return os.path.dirname(os.path.abspath(self.path))

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "seed": self.seed,
                "problem": self.problem, "lagrangian": self.lagrangian,
                "solve": self.solve, "certify": self.certify}

    @property
    def hash(self) -> str:
        """SHA-256 of the canonical JSON form (independent of file formatting)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def load_config(path) -> RunConfig:
    """Parse and validate a config file.

    Raises
    ------
    InvalidConfig
        With the offending line (parse errors) or field name.
    """
    path = str(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InvalidConfig(f"{path}: {exc.strerror}") from None
    if path.endswith(".json"):
        try:
            data = json.loads(raw.decode())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise InvalidConfig(f"{path}: {exc}") from None
    else:
        try:
            data = tomllib.loads(raw.decode())
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise InvalidConfig(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path}: top level must be a table")
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise InvalidConfig(f"{path}: unknown top-level keys {sorted(unknown)}")
    ver = data.get("schema_version")
    if ver != SCHEMA_VERSION:
        raise InvalidConfig(f"{path}: schema_version must be {SCHEMA_VERSION}, got {ver!r}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise InvalidConfig(f"{path}: seed must be a nonnegative integer")
    secs = {}
    for s in SECTIONS:
        v = data.get(s, {})
        if not isinstance(v, dict):
            raise InvalidConfig(f"{path}: [{s}] must be a table")
        secs[s] = v
    cfg = RunConfig(path, ver, seed, **secs)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    p = cfg.problem
    if "preset" not in p and "u0_file" not in p:
        raise InvalidConfig(f"{cfg.path}: [problem] needs 'preset' or 'u0_file'")
    if "preset" in p and p["preset"] not in problems.PRESETS:
        raise InvalidConfig(f"{cfg.path}: problem.preset {p['preset']!r} not one of "
                            f"{sorted(problems.PRESETS)}")
    if "preset" in p:
        fn = problems.PRESETS[p["preset"]]
        allowed = set(inspect.signature(fn).parameters) - {"spec"}
        bad = set(p) - allowed - {"preset"}
        if bad:
            raise InvalidConfig(f"{cfg.path}: problem.{sorted(bad)[0]} is not a parameter of "
                                f"preset {p['preset']!r} (allowed: {sorted(allowed)})")
    else:
        bad = set(p) - {"u0_file", "T", "g", "name"}
        if bad:
            raise InvalidConfig(f"{cfg.path}: unknown problem key {sorted(bad)[0]!r}")
        if "T" not in p:
            raise InvalidConfig(f"{cfg.path}: problem.T is required with u0_file")
    known = {f.name for f in dataclasses.fields(SolveConfig)}
    bad = set(cfg.solve) - known
    if bad:
        raise InvalidConfig(f"{cfg.path}: unknown solve key {sorted(bad)[0]!r}")
    if "tau" not in cfg.solve:
        raise InvalidConfig(f"{cfg.path}: solve.tau is required")
    bad = set(cfg.lagrangian) - {"kind", "mu", "weights", "axis_weights"}
    if bad:
        raise InvalidConfig(f"{cfg.path}: unknown lagrangian key {sorted(bad)[0]!r}")
    bad = set(cfg.certify) - CERTIFY_KEYS
    if bad:
        raise InvalidConfig(f"{cfg.path}: unknown certify key {sorted(bad)[0]!r}")
    # surface value errors now, with the field name attached
    solve_config(cfg)


def solve_config(cfg: RunConfig) -> SolveConfig:
    try:
        return SolveConfig(**cfg.solve)
    except (TypeError, LGFlowError) as exc:
        raise InvalidConfig(f"{cfg.path}: [solve] {exc}") from None


def build_problem(cfg: RunConfig) -> Problem:
    p = dict(cfg.problem)
    try:
        if "preset" in p:
            name = p.pop("preset")
            spec = _spec(cfg, None)
            return problems.preset(name, spec=spec, **p)
        u0 = gr.read_field(_resolve(cfg, p["u0_file"]))
        spec = _spec(cfg, u0.grid)
        return Problem(u0.grid, float(p["T"]), u0, spec, float(p.get("g", 0.0)),
                       name=str(p.get("name", "custom")))
    except InvalidConfig:
        raise
    except (TypeError, ValueError, OSError) as exc:
        raise InvalidConfig(f"{cfg.path}: [problem] {exc}") from None


def _spec(cfg: RunConfig, grid):
    if not cfg.lagrangian:
        return lg.total_variation()
    try:
        return lg.spec_from_dict(cfg.lagrangian, grid, base_dir=cfg.base_dir)
    except (LGFlowError, OSError, ValueError) as exc:
        raise InvalidConfig(f"{cfg.path}: [lagrangian] {exc}") from None


def _resolve(cfg: RunConfig, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(cfg.base_dir, path)
