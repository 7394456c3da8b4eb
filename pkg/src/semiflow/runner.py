"""Scenario execution, artifact writing and artifact verification."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from . import elasto, sticky
from .config import ScenarioConfig, parse_config
from .measures import format_float
from .newton import (
    ParticleSystemState,
    SemiconvexPotential,
    Trajectory,
    harmonic_potential,
    integrate,
    total_energy,
    velocity_bound_report,
    zero_potential,
)
from .report import CheckReport
from .vlasov import (
    PhaseSeries,
    lift_potential,
    make_interaction,
    moment_bounds_check,
    sample_initial,
    weak_residual,
)

MANIFEST = "manifest.json"
REPORT = "report.json"
ARTIFACTS = {
    "newton": ("trajectory.csv",),
    "vlasov": ("trajectory.csv",),
    "sticky": ("flowmap.csv", "events.json"),
    "elasto": ("modes.csv", "energy.csv", "young.json"),
}


class ArtifactError(ValueError):
    """A run directory is missing files or holds unreadable data."""


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    checks: list[CheckReport]
    files: dict[str, str]  # artifact name -> text
    payload: Any = None  # the solver output object
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.floating, float)):
        f = float(value)
        return f if math.isfinite(f) else str(f)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, Path):
        return str(value)
    return value


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def report_dict(checks: list[CheckReport], **extra) -> dict:
    return {"passed": all(c.passed for c in checks), "checks": [c.as_dict() for c in checks], **extra}


# ---------------------------------------------------------------- builders


def _read_phase_csv(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Columns ``m,x1..xd,v1..vd``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ArtifactError(f"{path}: empty file")
    header = rows[0]
    d = (len(header) - 1) // 2
    expected = ["m"] + [f"x{k + 1}" for k in range(d)] + [f"v{k + 1}" for k in range(d)]
    if d < 1 or header != expected:
        raise ArtifactError(f"{path}: header must be {expected}, got {header}")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r])
    return data[:, 1 : 1 + d], data[:, 1 + d :], data[:, 0]


def system_potential(cfg: ScenarioConfig, state: ParticleSystemState) -> SemiconvexPotential:
    """External potential for ``newton`` zero/harmonic runs, else the lifted pair potential."""
    name = cfg.potential["name"]
    if cfg.kind == "newton" and name == "zero":
        return zero_potential()
    if name == "harmonic":
        return harmonic_potential(float(cfg.potential.get("stiffness", 1.0)))
    if abs(float(np.sum(state.masses)) - 1.0) > 1e-12:
        raise ValueError("pair-interaction scenarios need masses summing to 1")
    return lift_potential(interaction_for(cfg, state.dim), state.masses)


def interaction_for(cfg: ScenarioConfig, dim: int):
    spec = dict(cfg.potential)
    name = spec.pop("name")
    return make_interaction(name, dim, **spec)


def build_particles(cfg: ScenarioConfig) -> ParticleSystemState:
    init = dict(cfg.initial)
    kind = init.pop("kind")
    if kind == "file":
        x, v, m = _read_phase_csv(init["path"])
        return ParticleSystemState(x, v, m)
    if kind == "points":
        x = np.asarray(init["x"], dtype=float)
        n = x.shape[0]
        m = np.asarray(init.get("masses", np.full(n, 1.0 / n)), dtype=float)
        return ParticleSystemState(x, init["v"], m)
    N = int(init.pop("N", 32))
    f0 = sample_initial({"kind": kind, **init}, N, cfg.seed)
    return ParticleSystemState(f0.x, f0.v, f0.weights)


def _newton_like(cfg: ScenarioConfig) -> ScenarioResult:
    state = build_particles(cfg)
    pot = system_potential(cfg, state)
    traj = integrate(pot, state, cfg.T, cfg.integrator)
    tol = cfg.tolerances
    checks = [velocity_bound_report(traj, pot, tol["apriori"])]
    if pot.translation_invariant or cfg.potential["name"] == "zero":
        p = traj.momentum()
        drift = float(np.max(np.abs(p - p[0]))) / (1.0 + float(np.max(np.abs(p[0]))))
        checks.append(CheckReport("momentum", drift, tol["momentum"], {}))
    energy = np.array([total_energy(traj.state(k), pot) for k in range(len(traj))])
    extra = {"energy_drift": float(np.max(np.abs(energy - energy[0])))}
    if cfg.kind == "vlasov":
        inter = interaction_for(cfg, state.dim)
        series = PhaseSeries(traj.times, traj.positions, traj.velocities, traj.masses)
        checks.append(moment_bounds_check(series, inter, rel_tol=tol["moments"]))
        for psi in ("1", "v"):
            r = weak_residual(series, inter, psi, float(series.times[-1]))
            checks.append(CheckReport(f"weak_residual[{psi}]", r, 1e-10, {}))
    return ScenarioResult(cfg, checks, {"trajectory.csv": traj.to_csv()}, traj, extra)


def velocity_profile(spec: dict):
    if spec["kind"] == "affine":
        return sticky.AffineProfile(spec.get("slope", 0.0), spec.get("intercept", 0.0))
    return sticky.PiecewiseLinearProfile(spec["knots"], spec["values"])


def build_sticky(cfg: ScenarioConfig) -> sticky.StickyInitialData:
    init = cfg.initial
    pot = interaction_for(cfg, 1)
    kind = init["kind"]
    if kind == "points":
        x = np.asarray(init["x"], dtype=float)
    else:
        N = int(init.get("N", 16))
        lo, hi = float(init.get("low", -1.0)), float(init.get("high", 1.0))
        if not hi > lo:
            raise ValueError("initial.high must exceed initial.low")
        if kind == "uniform_grid":
            x = lo + (np.arange(N) + 0.5) * (hi - lo) / N
        else:
            x = np.sort(np.random.default_rng(cfg.seed).uniform(lo, hi, N))
    n = x.shape[0]
    m = np.asarray(init.get("masses", np.full(n, 1.0 / n)), dtype=float)
    if "velocity" in init:
        prof = velocity_profile(init["velocity"])
        return sticky.StickyInitialData(x, prof(x), m, pot, prof)
    return sticky.StickyInitialData(x, np.asarray(init["v"], dtype=float), m, pot, None)


def sticky_config(cfg: ScenarioConfig) -> sticky.StickyConfig:
    ic = cfg.integrator
    return sticky.StickyConfig(
        dt=ic.dt,
        scheme=ic.scheme,
        max_steps=ic.max_steps,
        output_stride=ic.output_stride,
        event_tol=cfg.sticky.get("event_tol", 1e-10),
        merge_tol=cfg.sticky.get("merge_tol", 1e-9),
    )


def _sticky(cfg: ScenarioConfig) -> ScenarioResult:
    data = build_sticky(cfg)
    fm = sticky.evolve(data, cfg.T, sticky_config(cfg))
    report = sticky.run_checks(fm, [t for t in cfg.check_times if t <= cfg.T])
    tol = cfg.tolerances
    checks = [_retol(c, tol) for c in report.checks]
    for t in sticky._regular_times(fm, cfg.check_times):
        r = sticky.averaging_check(fm, lambda y: np.ones_like(y), 0.0, t)
        checks.append(CheckReport("averaging[g=1]", r, tol["averaging"], {"s": 0.0, "t": t}))
    files = {"flowmap.csv": fm.to_csv(), "events.json": fm.events_json() + "\n"}
    return ScenarioResult(cfg, checks, files, fm, {"events": len(fm.events)})


_TOL_NAMES = {
    "entropy": "entropy",
    "qspp": "qspp",
    "time_zero_bound": "time_zero",
    "energy_monotone": "energy_monotone",
    "conditional_velocity": "conditional_velocity",
}


def _retol(c: CheckReport, tol: dict) -> CheckReport:
    key = _TOL_NAMES.get(c.name)
    if key is None:
        return c
    return CheckReport(c.name, c.max_violation, tol[key], c.details)


def build_galerkin(cfg: ScenarioConfig):
    g = cfg.galerkin
    lengths = [float(v) for v in np.atleast_1d(g["lengths"])]
    basis = elasto.build_basis(lengths, int(g["modes"]), g.get("quad_order"))
    spec = dict(cfg.potential)
    F = elasto.make_energy(spec.pop("name"), basis.dim, **spec)
    init = cfg.initial
    gf, hf = elasto.reference_fields(init.get("field", "bump"), lengths, int(init.get("seed", cfg.seed)))
    proj = elasto.project_initial(gf, hf, basis)
    amp = float(init.get("amplitude", 1.0))
    return basis, F, amp * proj.g, amp * proj.h


def _elasto(cfg: ScenarioConfig) -> ScenarioResult:
    basis, F, g, h = build_galerkin(cfg)
    mu = float(cfg.galerkin.get("mu", 0.0))
    series = elasto.evolve_galerkin(g, h, F, basis, cfg.T, cfg.integrator, mu)
    rep = elasto.energy_report(series)
    tol = cfg.tolerances["energy_identity"]
    if mu == 0:
        ident = CheckReport("energy_conservation", rep.relative_drift, tol, {"relative": True})
    else:
        ident = CheckReport("energy_identity", rep.max_residual, tol, {"relative": False})
    gal = cfg.galerkin
    hist = elasto.young_histogram(
        series,
        gal.get("space_cells", 4),
        min(int(gal.get("time_cells", 4)), len(series.times) - 1),
        gal.get("bins"),
    )
    checks = [
        elasto.check_stored_energy(F, seed=cfg.seed),
        ident,
        elasto.young_mean_check(series, hist),
        elasto.young_second_moment_check(series, hist),
    ]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "energy", "dissipation", "residual"])
    for row in zip(rep.times, rep.energy, rep.dissipation, rep.residual):
        w.writerow([format_float(v) for v in row])
    files = {"modes.csv": series.to_csv(), "energy.csv": buf.getvalue(), "young.json": hist.to_json() + "\n"}
    return ScenarioResult(cfg, checks, files, series)


def execute(cfg: ScenarioConfig) -> ScenarioResult:
    """Run a scenario in memory and evaluate its built-in checks."""
    if cfg.kind in ("newton", "vlasov"):
        return _newton_like(cfg)
    if cfg.kind == "sticky":
        return _sticky(cfg)
    return _elasto(cfg)


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_artifacts(result: ScenarioResult, out_dir: Path, wall_time: float) -> dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, text in result.files.items():
        p = out_dir / name
        p.write_text(text)
        paths[name] = p
    report = dump_json(report_dict(result.checks, kind=result.config.kind, **result.extra))
    (out_dir / REPORT).write_text(report)
    paths[REPORT] = out_dir / REPORT
    manifest = {
        "schema_version": 1,
        "semiflow_version": __version__,
        "kind": result.config.kind,
        "seed": result.config.seed,
        "config": result.config.echo(),
        "files": {name: _sha256(text) for name, text in sorted(result.files.items())},
        "passed": result.passed,
        "wall_time_s": wall_time,
    }
    (out_dir / MANIFEST).write_text(dump_json(manifest))
    paths[MANIFEST] = out_dir / MANIFEST
    return paths


def run(cfg: ScenarioConfig, out_dir: Path | None = None) -> tuple[ScenarioResult, dict[str, Path]]:
    start = time.perf_counter()
    result = execute(cfg)
    wall = time.perf_counter() - start
    target = out_dir or cfg.output_dir
    paths = write_artifacts(result, Path(target), wall) if target is not None else {}
    return result, paths


# ---------------------------------------------------------------- verification of stored runs


def _load_manifest(run_dir: Path) -> dict:
    path = run_dir / MANIFEST
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"{path}: unreadable manifest ({exc})") from None


def _relative_gap(stored: np.ndarray, fresh: np.ndarray) -> float:
    if stored.shape != fresh.shape:
        return math.inf
    scale = max(1.0, float(np.max(np.abs(fresh))) if fresh.size else 1.0)
    with np.errstate(invalid="ignore"):
        gap = float(np.max(np.abs(stored - fresh))) / scale if fresh.size else 0.0
    return gap if math.isfinite(gap) else math.inf


def _csv_numbers(text: str) -> tuple[list[str], np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ArtifactError("empty CSV")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ArtifactError(f"non-numeric CSV entry: {exc}") from None
    if data.ndim != 2 or data.shape[0] == 0 or len({len(r) for r in rows[1:] if r}) != 1:
        raise ArtifactError("ragged or empty CSV body")
    return rows[0], data


def verify_run_dir(run_dir: Path | str) -> list[CheckReport]:
    """Re-check a stored run from its files alone plus a deterministic replay.

    Physical invariants are recomputed from the stored numbers (so edits to
    a data file are caught even where they keep the file well formed), the
    checksums in the manifest are compared, and the scenario is re-run
    from the echoed configuration and compared entry by entry.
    """
    run_dir = Path(run_dir)
    manifest = _load_manifest(run_dir)
    cfg = parse_config(manifest["config"], run_dir)
    cfg = cfg.with_overrides(output_dir=None)
    checks: list[CheckReport] = []
    texts = {}
    for name in ARTIFACTS[cfg.kind]:
        try:
            texts[name] = (run_dir / name).read_text()
        except OSError as exc:
            raise ArtifactError(f"missing artifact {name}: {exc}") from None
        ok = manifest.get("files", {}).get(name) == _sha256(texts[name])
        checks.append(CheckReport(f"checksum[{name}]", 0.0 if ok else 1.0, 0.0, {}))
    fresh = execute(cfg)
    tol = cfg.tolerances
    for name in ARTIFACTS[cfg.kind]:
        if not name.endswith(".csv"):
            continue
        try:
            h1, stored = _csv_numbers(texts[name])
            h2, again = _csv_numbers(fresh.files[name])
            gap = _relative_gap(stored, again) if h1 == h2 else math.inf
        except ArtifactError as exc:
            checks.append(CheckReport(f"replay[{name}]", math.inf, tol["replay"], {"error": str(exc)}))
            continue
        checks.append(CheckReport(f"replay[{name}]", gap, tol["replay"], {}))
    try:
        checks += _stored_invariants(cfg, texts, fresh)
    except (ArtifactError, ValueError, KeyError, IndexError) as exc:
        checks.append(CheckReport("stored_invariants", math.inf, 0.0, {"error": str(exc)}))
    return checks


def _stored_invariants(cfg: ScenarioConfig, texts: dict[str, str], fresh: ScenarioResult) -> list[CheckReport]:
    tol = cfg.tolerances
    if cfg.kind in ("newton", "vlasov"):
        masses = fresh.payload.masses
        traj = Trajectory.from_csv(texts["trajectory.csv"], masses)
        state0 = traj.state(0)
        pot = system_potential(cfg, state0)
        out = [velocity_bound_report(traj, pot, tol["apriori"])]
        if cfg.kind == "vlasov":
            series = PhaseSeries(traj.times, traj.positions, traj.velocities, masses)
            out.append(moment_bounds_check(series, interaction_for(cfg, state0.dim), rel_tol=tol["moments"]))
        if pot.translation_invariant or cfg.potential["name"] == "zero":
            p = traj.momentum()
            drift = float(np.max(np.abs(p - p[0]))) / (1.0 + float(np.max(np.abs(p[0]))))
            out.append(CheckReport("stored_momentum", drift, tol["momentum"], {}))
        return out
    if cfg.kind == "sticky":
        return _sticky_file_checks(cfg, texts)
    return _elasto_file_checks(cfg, texts, fresh)


def _sticky_file_checks(cfg: ScenarioConfig, texts: dict[str, str]) -> list[CheckReport]:
    header, data = _csv_numbers(texts["flowmap.csv"])
    if header != ["t", "cluster_id", "position", "velocity_left", "velocity_right", "mass"]:
        raise ArtifactError(f"bad flow-map header {header}")
    pot = interaction_for(cfg, 1)
    tol = cfg.tolerances
    times = np.unique(data[:, 0])
    mass_err = order_err = 0.0
    momenta, e_left, e_right = [], [], []
    entropy_worst = 0.0
    L = pot.modulus
    for t in times:
        rows = data[data[:, 0] == t]
        y, vl, vr, M = rows[:, 2], rows[:, 3], rows[:, 4], rows[:, 5]
        mass_err = max(mass_err, abs(float(np.sum(M)) - 1.0))
        if rows.shape[0] > 1:
            order_err = max(order_err, 0.0 if np.all(np.diff(y) > 0) else 1.0)
        momenta.append((float(M @ vl), float(M @ vr)))
        diff = (y[:, None] - y[None, :])[..., None]
        pe = 0.5 * float(M @ pot.w(diff) @ M)
        e_left.append(0.5 * float(M @ (vl * vl)) + pe)
        e_right.append(0.5 * float(M @ (vr * vr)) + pe)
        if L > 0 and t > 0 and rows.shape[0] > 1:
            dx = y[:, None] - y[None, :]
            dv = vr[:, None] - vr[None, :]
            rL = math.sqrt(L)
            viol = (dv * dx - rL / math.tanh(rL * t) * dx * dx) / (1.0 + dx * dx)
            entropy_worst = max(entropy_worst, float(np.max(viol)))
    p = np.array(momenta)
    p_drift = float(np.max(np.abs(p - p[0, 1])))
    rise = float(np.max(np.array(e_left[1:]) - np.array(e_right[:-1]))) if len(times) > 1 else 0.0
    try:
        events = json.loads(texts["events.json"])
        ev_defect = max(
            (abs(math.fsum(m * v for m, v in zip(e["cluster_masses"], e["pre_velocities"])) - math.fsum(e["cluster_masses"]) * e["post_velocity"]) for e in events),
            default=0.0,
        )
        jensen_fail = sum(
            1
            for e in events
            if len(set(e["pre_velocities"])) > 1
            and not math.fsum(m * v * v for m, v in zip(e["cluster_masses"], e["pre_velocities"])) > math.fsum(e["cluster_masses"]) * e["post_velocity"] ** 2
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ArtifactError(f"events.json unreadable: {exc}") from None
    out = [
        CheckReport("stored_total_mass", mass_err, 1e-12, {}),
        CheckReport("stored_cluster_order", order_err, 0.0, {}),
        CheckReport("stored_momentum", p_drift, tol["momentum"], {}),
        CheckReport("stored_energy_monotone", rise, tol["energy_monotone"], {}),
        CheckReport("stored_event_momentum", ev_defect, 1e-12, {"events": len(events)}),
        CheckReport("stored_event_energy_drop", float(jensen_fail), 0.0, {"events": len(events)}),
    ]
    if L > 0:
        out.append(CheckReport("stored_entropy", entropy_worst, tol["entropy"], {}))
    return out


def _elasto_file_checks(cfg: ScenarioConfig, texts: dict[str, str], fresh: ScenarioResult) -> list[CheckReport]:
    times, a, ad = elasto.read_modes_csv(texts["modes.csv"])
    series = fresh.payload
    if a.shape != series.a.shape:
        raise ArtifactError("mode-coefficient CSV does not match the configured basis")
    E = np.array(
        [0.5 * float(np.sum(ad[k] ** 2)) + elasto.discrete_potential(a[k], series.basis, series.energy)[0] for k in range(len(times))]
    )
    tol = cfg.tolerances["energy_identity"]
    if series.mu == 0:
        drift = float(np.max(np.abs(E - E[0]))) / max(abs(float(E[0])), np.finfo(float).tiny)
        return [CheckReport("stored_energy_conservation", drift, tol, {"relative": True})]
    rise = float(np.max(np.diff(E))) if len(E) > 1 else 0.0
    return [CheckReport("stored_energy_nonincreasing", max(rise, 0.0), tol, {})]


# ---------------------------------------------------------------- convergence ladders

LADDER_KEYS = ("N", "dt", "modes")


def parse_ladder(spec: str) -> tuple[str, list[float]]:
    """``"N=8,16,32"`` -> ``("N", [8, 16, 32])``."""
    key, sep, values = spec.partition("=")
    key = key.strip()
    if not sep or key not in LADDER_KEYS:
        raise ValueError(f"ladder must look like KEY=v1,v2,... with KEY in {LADDER_KEYS}, got {spec!r}")
    try:
        vals = [float(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"ladder values must be numbers: {values!r}") from None
    if len(vals) < 2:
        raise ValueError("a ladder needs at least two entries")
    if key in ("N", "modes"):
        if any(v != int(v) or v < 1 for v in vals):
            raise ValueError(f"{key} ladder entries must be positive integers")
        vals = [int(v) for v in vals]
    elif any(v <= 0 for v in vals):
        raise ValueError("dt ladder entries must be positive")
    return key, vals


def _stored_index(times: np.ndarray, t: float) -> int:
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 1e-9 * max(1.0, abs(times[-1])):
        raise ValueError(f"time {t} is not on the output grid of every ladder run")
    return k


def _spatial_distance(a: np.ndarray, wa: np.ndarray, b: np.ndarray, wb: np.ndarray) -> tuple[str, float]:
    from .measures import EmpiricalMeasure, LipschitzDictionary, bl_distance, wasserstein1_1d

    mu, nu = EmpiricalMeasure(a, wa), EmpiricalMeasure(b, wb)
    if mu.dim == 1:
        return "wasserstein1", wasserstein1_1d(mu, nu)
    return "bounded_lipschitz", bl_distance(mu, nu, LipschitzDictionary.random(mu.dim, seed=0))


def convergence_study(cfg: ScenarioConfig, key: str, values: list, times: list[float] | None = None) -> list[dict]:
    """Distances between runs at consecutive ladder entries.

    Particle and sticky runs compare the spatial marginals at matched times
    (1-d Wasserstein or bounded-Lipschitz); elasto runs report the
    space-time gradient distance for a modes ladder and the spectral
    energy-norm distance at matched times for a dt ladder.
    """
    if key == "N" and cfg.kind == "elasto":
        key = "modes"
    if key == "modes" and cfg.kind != "elasto":
        raise ValueError("a modes ladder needs an elasto scenario")
    if key == "N" and cfg.kind in ("newton", "vlasov", "sticky") and cfg.initial["kind"] in ("points", "file"):
        raise ValueError("an N ladder needs sampled initial data, not explicit points")
    times = list(times) if times else [cfg.T]
    runs = [execute(cfg.with_overrides(output_dir=None, **{key: v})) for v in values]
    rows = []
    for (va, ra), (vb, rb) in zip(zip(values, runs[:-1]), zip(values[1:], runs[1:])):
        if cfg.kind == "elasto" and key == "modes":
            grid, _ = elasto.cauchy_gradient_check(ra.payload, rb.payload) if va <= vb else elasto.cauchy_gradient_check(rb.payload, ra.payload)
            rows.append({"key": key, "a": va, "b": vb, "t": cfg.T, "metric": "gradient_l2_spacetime", "distance": grid})
            continue
        for t in times:
            if cfg.kind == "elasto":
                sa, sb = ra.payload, rb.payload
                ka, kb = _stored_index(sa.times, t), _stored_index(sb.times, t)
                diff = sa.a[ka] - sb.a[kb]
                dist = math.sqrt(float(np.sum(sa.basis.lambdas[:, None] * diff * diff)))
                rows.append({"key": key, "a": va, "b": vb, "t": t, "metric": "spectral_energy_norm", "distance": dist})
            elif cfg.kind == "sticky":
                pa = sticky.state_at(ra.payload, t).positions
                pb = sticky.state_at(rb.payload, t).positions
                metric, dist = _spatial_distance(pa, ra.payload.masses, pb, rb.payload.masses)
                rows.append({"key": key, "a": va, "b": vb, "t": t, "metric": metric, "distance": dist})
            else:
                ta, tb = ra.payload, rb.payload
                ka, kb = _stored_index(ta.times, t), _stored_index(tb.times, t)
                metric, dist = _spatial_distance(ta.positions[ka], ta.masses, tb.positions[kb], tb.masses)
                rows.append({"key": key, "a": va, "b": vb, "t": t, "metric": metric, "distance": dist})
    return rows


def ladder_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "a", "b", "t", "metric", "distance"])
    for r in rows:
        w.writerow([r["key"], r["a"], r["b"], format_float(r["t"]), r["metric"], format_float(r["distance"])])
    return buf.getvalue()
