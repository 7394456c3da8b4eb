"""Scenario configuration files.

A scenario is one YAML document::

    schema_version: 1
    kind: sticky            # newton | vlasov | sticky | elasto
    T: 2.0
    seed: 0
    integrator: {dt: 1.0e-3, scheme: rk4}
    potential: {name: quadratic, kappa: 1.0, modulus: 1.0}
    initial: {kind: uniform_grid, N: 16, low: -1.0, high: 1.0,
              velocity: {kind: affine, slope: -1.0}}
    output: {dir: runs/sticky}

Unknown keys anywhere are rejected, so typos fail loudly.  Validation
errors raise ``ConfigError``, which the command line maps to exit status 2.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .integrators import SCHEMES, IntegratorConfig

SCHEMA_VERSION = 1
KINDS = ("newton", "vlasov", "sticky", "elasto")

TOLERANCE_KEYS = {
    "apriori": 1e-8,
    "moments": 1e-8,
    "momentum": 1e-10,
    "entropy": 1e-8,
    "qspp": 1e-8,
    "time_zero": 1e-8,
    "energy_monotone": 1e-8,
    "energy_identity": 1e-6,
    "averaging": 1e-8,
    "conditional_velocity": 1e-6,
    "replay": 1e-12,
}

_TOP_KEYS = {"schema_version", "kind", "T", "seed", "integrator", "potential", "energy", "initial", "output", "tolerances", "sticky", "galerkin", "checks"}
_INTEGRATOR_KEYS = {"dt", "scheme", "max_steps", "output_stride"}
_OUTPUT_KEYS = {"dir"}
_STICKY_KEYS = {"event_tol", "merge_tol"}
_GALERKIN_KEYS = {"lengths", "modes", "quad_order", "mu", "space_cells", "time_cells", "bins"}
_CHECK_KEYS = {"times"}

_INITIAL_KEYS = {
    "newton": {
        "points": {"kind", "x", "v", "masses"},
        "gaussian": {"kind", "N", "dim", "mean_x", "std_x", "mean_v", "std_v", "sampling"},
        "uniform": {"kind", "N", "dim", "low_x", "high_x", "low_v", "high_v"},
        "file": {"kind", "path"},
    },
    "sticky": {
        "points": {"kind", "x", "masses", "velocity", "v"},
        "uniform_grid": {"kind", "N", "low", "high", "velocity", "masses"},
        "random": {"kind", "N", "low", "high", "velocity", "masses"},
    },
    "elasto": {
        "fields": {"kind", "field", "amplitude", "seed"},
    },
}
_INITIAL_KEYS["vlasov"] = _INITIAL_KEYS["newton"]

_POTENTIAL_KEYS = {
    "zero": {"name"},
    "harmonic": {"name", "stiffness"},
    "quadratic": {"name", "kappa", "modulus"},
    "soft_attractive": {"name"},
    "gaussian_repulsive": {"name"},
}
_ENERGY_KEYS = {"quadratic": {"name"}, "cosine": {"name", "alpha", "B"}}


class ConfigError(ValueError):
    """Invalid scenario configuration (exit status 2)."""


def _check_keys(where: str, got: dict, allowed: set) -> None:
    if not isinstance(got, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(got).__name__}")
    extra = set(got) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}; allowed {sorted(allowed)}")


def _positive(where: str, value, integer: bool = False):
    try:
        num = int(value) if integer else float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a number, got {value!r}") from None
    if integer and num != value:
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if not (num > 0 and math.isfinite(num)):
        raise ConfigError(f"{where} must be positive, got {value!r}")
    return num


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    T: float
    seed: int
    integrator: IntegratorConfig
    potential: dict[str, Any]
    initial: dict[str, Any]
    output_dir: Path | None
    tolerances: dict[str, float]
    sticky: dict[str, float] = field(default_factory=dict)
    galerkin: dict[str, Any] = field(default_factory=dict)
    check_times: tuple[float, ...] = ()
    raw: dict[str, Any] = field(default_factory=dict)
    base_dir: Path = Path(".")

    def echo(self) -> dict[str, Any]:
        """The document as loaded, for the run manifest."""
        return copy.deepcopy(self.raw)

    def with_overrides(self, **changes) -> "ScenarioConfig":
        """A copy with top-level fields of ``raw`` replaced, re-validated."""
        raw = copy.deepcopy(self.raw)
        for key, value in changes.items():
            if key in ("dt", "scheme", "output_stride", "max_steps"):
                raw.setdefault("integrator", {})[key] = value
            elif key == "N":
                raw.setdefault("initial", {})["N"] = value
            elif key == "modes":
                raw.setdefault("galerkin", {})["modes"] = value
            elif key == "output_dir":
                if value is None:
                    raw.pop("output", None)
                else:
                    raw["output"] = {"dir": str(value)}
            else:
                raw[key] = value
        return parse_config(raw, self.base_dir)


def _default_scheme(kind: str) -> str:
    return "rk4" if kind in ("sticky", "elasto") else "velocity-verlet"


def parse_config(raw: dict[str, Any], base_dir: Path | str = ".") -> ScenarioConfig:
    base = Path(base_dir)
    _check_keys("config", raw, _TOP_KEYS)
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    if "T" not in raw:
        raise ConfigError("T is required")
    T = _positive("T", raw["T"])
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")

    integ = raw.get("integrator", {})
    _check_keys("integrator", integ, _INTEGRATOR_KEYS)
    scheme = integ.get("scheme", _default_scheme(kind))
    if scheme not in SCHEMES:
        raise ConfigError(f"integrator.scheme must be one of {SCHEMES}, got {scheme!r}")
    icfg = IntegratorConfig(
        dt=_positive("integrator.dt", integ.get("dt", 1e-3)),
        scheme=scheme,
        max_steps=_positive("integrator.max_steps", integ.get("max_steps", 10_000_000), integer=True),
        output_stride=_positive("integrator.output_stride", integ.get("output_stride", 10 if kind == "vlasov" else 1), integer=True),
    )

    if kind == "elasto":
        if "potential" in raw:
            raise ConfigError("elasto scenarios take 'energy', not 'potential'")
        pot = dict(raw.get("energy", {"name": "quadratic"}))
        name = pot.get("name")
        if name not in _ENERGY_KEYS:
            raise ConfigError(f"energy.name must be one of {sorted(_ENERGY_KEYS)}, got {name!r}")
        _check_keys("energy", pot, _ENERGY_KEYS[name])
    else:
        if "energy" in raw:
            raise ConfigError(f"{kind} scenarios take 'potential', not 'energy'")
        pot = dict(raw.get("potential", {"name": "zero"}))
        name = pot.get("name")
        if name not in _POTENTIAL_KEYS or (kind != "newton" and name == "harmonic"):
            raise ConfigError(f"potential.name {name!r} is not available for {kind} scenarios")
        _check_keys("potential", pot, _POTENTIAL_KEYS[name])

    init = dict(raw.get("initial", {"kind": "fields", "field": "bump"} if kind == "elasto" else {}))
    ikind = init.get("kind")
    allowed = _INITIAL_KEYS[kind]
    if ikind not in allowed:
        raise ConfigError(f"initial.kind must be one of {sorted(allowed)}, got {ikind!r}")
    _check_keys("initial", init, allowed[ikind])
    if "N" in init:
        _positive("initial.N", init["N"], integer=True)
    if ikind == "file":
        path = Path(init["path"])
        if not path.is_absolute():
            path = base / path
        if not path.is_file():
            raise ConfigError(f"initial.path {str(path)!r} does not exist")
        init["path"] = str(path)
    if kind == "sticky":
        vel = init.get("velocity")
        if ikind != "points" and vel is None:
            raise ConfigError("sticky initial data needs a velocity profile")
        if vel is not None:
            _check_velocity(vel)

    out = raw.get("output")
    out_dir = None
    if out is not None:
        _check_keys("output", out, _OUTPUT_KEYS)
        if "dir" in out and out["dir"] is not None:
            out_dir = Path(out["dir"])
            if not out_dir.is_absolute():
                out_dir = base / out_dir

    tol_raw = raw.get("tolerances", {})
    _check_keys("tolerances", tol_raw, set(TOLERANCE_KEYS))
    tolerances = dict(TOLERANCE_KEYS)
    for key, value in tol_raw.items():
        tolerances[key] = _positive(f"tolerances.{key}", value)

    sticky = raw.get("sticky", {})
    if sticky and kind != "sticky":
        raise ConfigError("'sticky' section only applies to sticky scenarios")
    _check_keys("sticky", sticky, _STICKY_KEYS)
    sticky = {k: _positive(f"sticky.{k}", v) for k, v in sticky.items()}

    gal = raw.get("galerkin", {})
    if gal and kind != "elasto":
        raise ConfigError("'galerkin' section only applies to elasto scenarios")
    _check_keys("galerkin", gal, _GALERKIN_KEYS)
    gal = dict(gal)
    if kind == "elasto":
        gal.setdefault("lengths", [1.0])
        gal.setdefault("modes", 8)
        gal.setdefault("mu", 0.0)
        _positive("galerkin.modes", gal["modes"], integer=True)
        if float(gal["mu"]) < 0:
            raise ConfigError("galerkin.mu must be nonnegative")

    checks = raw.get("checks", {})
    _check_keys("checks", checks, _CHECK_KEYS)
    times = tuple(float(t) for t in checks.get("times", (0.1, 0.5, 1.0, 2.0)))
    if any(t < 0 for t in times):
        raise ConfigError("check times must be nonnegative")

    return ScenarioConfig(
        kind=kind,
        T=float(T),
        seed=int(seed),
        integrator=icfg,
        potential=pot,
        initial=init,
        output_dir=out_dir,
        tolerances=tolerances,
        sticky=sticky,
        galerkin=gal,
        check_times=times,
        raw=copy.deepcopy(raw),
        base_dir=base,
    )


def _check_velocity(vel: dict) -> None:
    kind = vel.get("kind") if isinstance(vel, dict) else None
    if kind == "affine":
        _check_keys("initial.velocity", vel, {"kind", "slope", "intercept"})
    elif kind == "piecewise_linear":
        _check_keys("initial.velocity", vel, {"kind", "knots", "values"})
        if len(vel.get("knots", [])) != len(vel.get("values", [])) or len(vel.get("knots", [])) < 2:
            raise ConfigError("piecewise_linear velocity needs matching knots and values (at least two)")
    else:
        raise ConfigError(f"initial.velocity.kind must be affine or piecewise_linear, got {kind!r}")


def load_config(path: str | Path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(p)!r}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return parse_config(raw, p.parent)
