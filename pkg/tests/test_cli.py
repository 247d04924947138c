import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from isothermic import cli
from isothermic.cli import EXIT_INVALID, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, ExperimentConfig, load_config, main, validate
from isothermic.errors import SolverError

CONFIGS = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.yaml"))
COMMAND_OF = {
    "balance_ball": "balance-check",
    "curvature_ellipse": "curvature",
    "elliptic_ball": "solve-elliptic",
    "heat_ball": "solve-heat",
    "thm42_disk": "thm42",
    "varadhan_disk": "varadhan",
    "varadhan_oracle": "varadhan",
    "wave_ball": "wave-check",
}


def write_config(tmp_path, d, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(d))
    return str(path)


def base(**over):
    d = {
        "space": {"k": 0, "n": 2},
        "domain": {"name": "geodesic-ball", "params": {"radius": 1.0}},
        "grid": {"h": 0.0625},
        "heat": {"dt": 0.01, "t_end": 0.1},
        "ladder": {"s": [1.0, 4.0, 16.0]},
    }
    d.update(over)
    return d


@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_shipped_configs_validate(path):
    cfg, findings = load_config(path)
    assert findings == []
    assert validate(cfg, COMMAND_OF.get(path.stem, "rigidity")) == []


def test_usage_errors(tmp_path, capsys):
    cfg = write_config(tmp_path, base())
    assert main(["explode", "--config", cfg]) == EXIT_USAGE
    assert "unknown command" in capsys.readouterr().err
    with pytest.raises(SystemExit) as err:
        main(["solve-heat"])
    assert err.value.code == EXIT_USAGE


def test_invalid_time_step_is_one_finding():
    cfg, _ = ExperimentConfig.from_dict(base(heat={"dt": 0.0, "t_end": 0.1}))
    findings = validate(cfg)
    assert len(findings) == 1 and findings[0].startswith("heat.dt")


def test_shape_leaving_hemisphere_exits_2(tmp_path, capsys):
    d = base(space={"k": 1, "n": 2}, domain={"name": "geodesic-ball", "params": {"radius": 2.0}})
    assert main(["solve-heat", "--config", write_config(tmp_path, d)]) == EXIT_INVALID
    assert "hemisphere" in capsys.readouterr().err


def test_varadhan_needs_three_ladder_points(tmp_path, capsys):
    d = base(ladder={"s": [10.0]})
    assert main(["varadhan", "--config", write_config(tmp_path, d)]) == EXIT_INVALID
    assert ">= 3 ladder points required" in capsys.readouterr().err


def test_wave_step_beyond_stability_bound():
    cfg, _ = ExperimentConfig.from_dict(base(options={"wave_dt": 1.0}))
    findings = validate(cfg, "wave-check")
    assert len(findings) == 1 and "stability bound" in findings[0]


def test_malformed_configs(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("space: {k: 0\n")
    assert main(["solve-heat", "--config", str(bad)]) == EXIT_INVALID
    assert main(["solve-heat", "--config", write_config(tmp_path, base(colour="blue"))]) == EXIT_INVALID
    assert main(["solve-heat", "--config", str(tmp_path / "missing.yaml")]) == EXIT_INVALID
    cfg, _ = ExperimentConfig.from_dict(base(ladder={"s": [4.0, 1.0]}))
    assert [f.split(":")[0] for f in validate(cfg)] == ["ladder"]
    cfg, _ = ExperimentConfig.from_dict(base(probes=[[2.0, 0.0], [0.1]]))
    assert [f.split(":")[0] for f in validate(cfg)] == ["probes[1]"]
    cfg, _ = ExperimentConfig.from_dict(base(probes=[[2.0, 0.0]]))
    assert [f.split(":")[0] for f in validate(cfg)] == ["probes[0]"]


def test_solver_error_exits_3(tmp_path, monkeypatch):
    def boom(cfg, out):
        raise SolverError("no convergence")

    monkeypatch.setitem(cli._HANDLERS, "solve-heat", boom)
    cfg, _ = ExperimentConfig.from_dict(base())
    assert cli.run("solve-heat", cfg, tmp_path) == EXIT_SOLVER


def run_twice(tmp_path, command, d):
    cfg = write_config(tmp_path, d)
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main([command, "--config", cfg, "--out", str(out)]) == EXIT_OK
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
    return outs[0]


def test_solve_heat_outputs_are_reproducible(tmp_path):
    files = run_twice(tmp_path, "solve-heat", base(probes=[[0.0, 0.0]], options={"laplace_s": [2.0]}))
    assert set(files) == {"heat.json", "heat_final.csv", "heat_probes.csv", "heat_transform_0.csv"}
    cfg, _ = ExperimentConfig.from_dict(base(probes=[[0.0, 0.0]], options={"laplace_s": [2.0]}))
    for name, data in files.items():
        text = data.decode()
        meta = json.loads(text.splitlines()[0][2:]) if name.endswith(".csv") else json.loads(text)["metadata"]
        assert meta["config_digest"] == cfg.digest()
        assert meta["h"] == 0.0625 and meta["ladder"] == [1.0, 4.0, 16.0]
    # full round-trip precision
    row = files["heat_final.csv"].decode().splitlines()[2].split(",")
    assert all(repr(float(v)) == v for v in row)


def test_solve_elliptic_and_curvature(tmp_path, capsys):
    files = run_twice(tmp_path, "solve-elliptic", base(probes=[[0.0, 0.0]]))
    solves = json.loads(files["elliptic.json"])["solves"]
    assert [s["s"] for s in solves] == [1.0, 4.0, 16.0]
    assert all(0 < s["probe_values"][0] < 1 for s in solves)
    d = base(domain={"name": "ellipse", "params": {"a": 1.0, "b": 0.6}}, options={"m": 8})
    assert main(["curvature", "--config", write_config(tmp_path, d), "--out", str(tmp_path / "c")]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out.splitlines()[-1])
    # coordinate ellipse curvatures range over [b / a^2, a / b^2] / 2 in the flat metric
    assert summary["min"] == pytest.approx(0.3, rel=1e-6) and summary["max"] == pytest.approx(1 / 0.72, rel=1e-6)


def test_rigidity_command_on_ball(tmp_path):
    d = base(space={"k": -1, "n": 2}, domain={"name": "geodesic-ball", "params": {"radius": 1.0, "center": [0.1, 0.05]}},
             grid={"h": 1 / 64}, heat={"dt": 2e-3, "t_end": 1.0}, surface={"fraction": 0.3})
    files = run_twice(tmp_path, "rigidity", d)
    report = json.loads(files["rigidity.json"])["report"]
    assert report["verdict"] == "consistent-with-geodesic-ball"
    assert np.isclose(report["R_true"], 0.3)
