from pathlib import Path

import pytest
import yaml

from semiflow.config import TOLERANCE_KEYS, ConfigError, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def base(**extra):
    raw = {"schema_version": 1, "kind": "newton", "T": 1.0, "initial": {"kind": "points", "x": [[0.0]], "v": [[1.0]], "masses": [1.0]}}
    raw.update(extra)
    return raw


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.T > 0 and cfg.output_dir is not None


def test_defaults():
    cfg = parse_config(base())
    assert cfg.integrator.scheme == "velocity-verlet"
    assert cfg.tolerances == TOLERANCE_KEYS
    sticky = parse_config({"schema_version": 1, "kind": "sticky", "T": 1.0, "initial": {"kind": "points", "x": [0.0, 1.0], "v": [0.0, 0.0]}})
    assert sticky.integrator.scheme == "rk4"


@pytest.mark.parametrize(
    "change",
    [
        {"schema_version": 2},
        {"kind": "fluid"},
        {"T": 0.0},
        {"T": "soon"},
        {"seed": -1},
        {"typo": 1},
        {"integrator": {"dt": -1e-3}},
        {"integrator": {"scheme": "euler"}},
        {"integrator": {"output_stride": 1.5}},
        {"tolerances": {"entropy": 0.0}},
        {"tolerances": {"unknown": 1e-8}},
        {"potential": {"name": "quadratic", "kappa": 1.0, "stiffness": 2.0}},
        {"energy": {"name": "quadratic"}},
        {"galerkin": {"modes": 4}},
        {"initial": {"kind": "file", "path": "does/not/exist.csv"}},
        {"initial": {"kind": "gaussian", "N": 0}},
        {"checks": {"times": [-1.0]}},
    ],
)
def test_invalid_configs(change):
    with pytest.raises(ConfigError):
        parse_config(base(**change))


def test_sticky_needs_profile_for_sampled_data():
    raw = {"schema_version": 1, "kind": "sticky", "T": 1.0, "initial": {"kind": "uniform_grid", "N": 4}}
    with pytest.raises(ConfigError):
        parse_config(raw)
    raw["initial"]["velocity"] = {"kind": "piecewise_linear", "knots": [0.0], "values": [1.0]}
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_relative_paths_resolve_against_config(tmp_path):
    (tmp_path / "init.csv").write_text("m,x1,v1\n1,0,1\n")
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(base(initial={"kind": "file", "path": "init.csv"}, output={"dir": "out"})))
    cfg = load_config(path)
    assert Path(cfg.initial["path"]) == tmp_path / "init.csv"
    assert cfg.output_dir == tmp_path / "out"


def test_unreadable_documents(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("kind: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_overrides_revalidate():
    cfg = parse_config(base(initial={"kind": "gaussian", "N": 8}))
    assert cfg.with_overrides(N=16).initial["N"] == 16
    assert cfg.with_overrides(dt=0.5).integrator.dt == 0.5
    with pytest.raises(ConfigError):
        cfg.with_overrides(dt=-1.0)
    assert cfg.echo() == cfg.raw and cfg.echo() is not cfg.raw
