import json

import pytest
import yaml
from click.testing import CliRunner

from torusgas.cli import main
from torusgas.config import (ConfigError, EXPERIMENTS, apply_overrides,
                             validate_config)


BASE_CONFIG = {
    "experiment": "sample-gibbs",
    "model": {
        "d": 1, "L": 10.0, "z": 0.2,
        "potential": {"kind": "square_well", "J": 1.0, "R": 0.5},
        "kernel": {"kind": "uniform_ball", "r": 0.5},
    },
    "sampler": {"n_samples": 150, "burn_in": 300, "seed": 7},
    "output": {"directory": "out"},
}


def write_config(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def test_validate_ok():
    rc = validate_config(json.loads(json.dumps(BASE_CONFIG)))
    assert rc.experiment == "sample-gibbs"
    assert rc.model.z == 0.2
    assert rc.eps_grid == [1.0]


def test_missing_field_names_path():
    cfg = json.loads(json.dumps(BASE_CONFIG))
    del cfg["model"]["z"]
    with pytest.raises(ConfigError) as err:
        validate_config(cfg)
    assert err.value.path == "model.z"


def test_seed_required():
    cfg = json.loads(json.dumps(BASE_CONFIG))
    del cfg["sampler"]["seed"]
    with pytest.raises(ConfigError) as err:
        validate_config(cfg)
    assert err.value.path == "sampler.seed"


def test_unknown_experiment_lists_names():
    cfg = json.loads(json.dumps(BASE_CONFIG))
    cfg["experiment"] = "nope"
    with pytest.raises(ConfigError) as err:
        validate_config(cfg)
    assert "sample-gibbs" in str(err.value)


def test_range_constraint_enforced():
    cfg = json.loads(json.dumps(BASE_CONFIG))
    cfg["model"]["potential"]["R"] = 6.0  # >= L/2
    with pytest.raises(ConfigError, match="L/2"):
        validate_config(cfg)


def test_overrides():
    cfg = json.loads(json.dumps(BASE_CONFIG))
    apply_overrides(cfg, ["model.z=0.3", "sampler.seed=9",
                          "model.potential.J=2.5"])
    rc = validate_config(cfg)
    assert rc.model.z == 0.3
    assert rc.sampler["seed"] == 9
    assert rc.model.phi.params[0] == 2.5


def test_cli_list_experiments():
    runner = CliRunner()
    res = runner.invoke(main, ["list-experiments"])
    assert res.exit_code == 0
    lines = [l for l in res.output.strip().splitlines() if l.strip()]
    assert len(lines) == 7
    res = runner.invoke(main, ["list-experiments", "--json"])
    catalog = json.loads(res.output)
    assert set(catalog) == set(EXPERIMENTS)
    assert all("required_blocks" in v for v in catalog.values())


def test_cli_run_sample_gibbs(tmp_path):
    cfg_path = write_config(tmp_path, BASE_CONFIG)
    runner = CliRunner()
    res = runner.invoke(main, ["run", str(cfg_path), "--out",
                               str(tmp_path / "out")])
    assert res.exit_code == 0, res.output
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["experiment"] == "sample-gibbs"
    assert "content_hash" in report
    assert (tmp_path / "out" / "samples.txt").exists()
    assert (tmp_path / "out" / "counts.csv").exists()
    assert (tmp_path / "out" / "telemetry.json").exists()


def test_cli_exit_2_on_bad_config(tmp_path):
    cfg = json.loads(json.dumps(BASE_CONFIG))
    del cfg["model"]["z"]
    cfg_path = write_config(tmp_path, cfg)
    runner = CliRunner()
    res = runner.invoke(main, ["run", str(cfg_path)])
    assert res.exit_code == 2
    assert "model.z" in res.output


def test_cli_exit_2_unknown_experiment(tmp_path):
    cfg = json.loads(json.dumps(BASE_CONFIG))
    cfg["experiment"] = "warp-drive"
    cfg_path = write_config(tmp_path, cfg)
    runner = CliRunner()
    res = runner.invoke(main, ["run", str(cfg_path)])
    assert res.exit_code == 2
    assert "valid names" in res.output


@pytest.mark.filterwarnings("ignore:model is outside the low-activity")
def test_cli_exit_3_on_rate_bound(tmp_path):
    cfg = {
        "experiment": "run-kawasaki",
        "model": {
            "d": 1, "L": 10.0, "z": 0.2,
            "potential": {"kind": "square_well", "J": 3.0, "R": 0.5},
            "kernel": {"kind": "uniform_ball", "r": 0.5},
            "s": 1.0, "rate_cap": 1.01,
        },
        "sampler": {"n_samples": 20, "burn_in": 300, "seed": 3},
        "dynamics": {"T": 500.0, "seed": 4, "replicas": 8},
        "output": {"directory": "out"},
    }
    cfg_path = write_config(tmp_path, cfg)
    runner = CliRunner()
    res = runner.invoke(main, ["run", str(cfg_path), "--out",
                               str(tmp_path / "o")])
    assert res.exit_code == 3
    assert "rate bound" in res.output


def test_cli_byte_determinism(tmp_path):
    cfg_path = write_config(tmp_path, BASE_CONFIG)
    runner = CliRunner()
    payloads = []
    for sub in ("a", "b"):
        res = runner.invoke(main, ["run", str(cfg_path), "--out",
                                   str(tmp_path / sub)])
        assert res.exit_code == 0
        payloads.append({
            "report": (tmp_path / sub / "report.json").read_bytes(),
            "counts": (tmp_path / sub / "counts.csv").read_bytes(),
            "samples": (tmp_path / sub / "samples.txt").read_bytes(),
        })
    assert payloads[0] == payloads[1]


def test_cli_scaling_sweep_smoke(tmp_path):
    cfg = {
        "experiment": "scaling-sweep",
        "model": {
            "d": 1, "L": 16.0, "z": 0.2,
            "potential": {"kind": "square_well", "J": 1.0, "R": 0.5},
            "kernel": {"kind": "uniform_ball", "r": 0.5},
            "eps_grid": [1.0, 0.5],
        },
        "sampler": {"n_samples": 400, "burn_in": 500, "seed": 11},
        "verdicts": {"ratio": 0.9},
        "output": {"directory": "out"},
    }
    cfg_path = write_config(tmp_path, cfg)
    runner = CliRunner()
    res = runner.invoke(main, ["run", str(cfg_path), "--out",
                               str(tmp_path / "sw")])
    assert res.exit_code in (0, 1), res.output  # trend may be noisy this small
    report = json.loads((tmp_path / "sw" / "report.json").read_text())
    assert len(report["results"]["distances"]) == 2
    assert (tmp_path / "sw" / "sweep.csv").exists()
    assert report["results"]["richardson_max"] < 1e-4


def test_cli_gap_probe_smoke(tmp_path):
    cfg = {
        "experiment": "gap-probe",
        "model": {
            "d": 1, "L": 10.0, "z": 0.2,
            "potential": {"kind": "zero"},
            "kernel": {"kind": "uniform_ball", "r": 0.5},
        },
        "sampler": {"burn_in": 400, "seed": 12},
        "dynamics": {"T": 6.0, "replicas": 150, "seed": 13, "alpha": 1.0},
        "output": {"directory": "out"},
    }
    cfg_path = write_config(tmp_path, cfg)
    runner = CliRunner()
    res = runner.invoke(main, ["run", str(cfg_path), "--out",
                               str(tmp_path / "gap")])
    report = json.loads((tmp_path / "gap" / "report.json").read_text())
    assert report["verdicts"]["gap_above_bound"] in (True, False)
    assert "gap_matches_alpha_10pct" in report["verdicts"]
    assert (tmp_path / "gap" / "autocov.csv").exists()


def test_cli_fdd_smoke(tmp_path):
    cfg = {
        "experiment": "fdd-compare",
        "model": {
            "d": 1, "L": 10.0, "z": 0.2,
            "potential": {"kind": "zero"},
            "kernel": {"kind": "uniform_ball", "r": 0.5},
            "eps_grid": [1.0, 0.25],
        },
        "sampler": {"burn_in": 400, "seed": 14},
        "dynamics": {"times_in_relaxations": [0.5], "replicas": 500,
                     "n_perm": 20, "seed": 15, "alpha": 1.0},
        "output": {"directory": "out"},
    }
    cfg_path = write_config(tmp_path, cfg)
    runner = CliRunner()
    res = runner.invoke(main, ["run", str(cfg_path), "--out",
                               str(tmp_path / "fdd")])
    report = json.loads((tmp_path / "fdd" / "report.json").read_text())
    assert len(report["results"]["cases"]) == 2
    assert report["verdicts"]["t0_shared_law_ok"] in (True, False)
    assert (tmp_path / "fdd" / "fdd.csv").exists()


def test_cli_dynamics_run_and_verdicts(tmp_path):
    cfg = {
        "experiment": "run-kawasaki",
        "model": {
            "d": 1, "L": 10.0, "z": 0.2,
            "potential": {"kind": "square_well", "J": 1.0, "R": 0.5},
            "kernel": {"kind": "uniform_ball", "r": 0.5},
        },
        "sampler": {"n_samples": 20, "burn_in": 300, "seed": 3},
        "dynamics": {"T": 5.0, "seed": 4, "replicas": 4,
                     "snapshot_times": [0.0, 2.5, 5.0]},
        "output": {"directory": "out"},
    }
    cfg_path = write_config(tmp_path, cfg)
    runner = CliRunner()
    res = runner.invoke(main, ["run", str(cfg_path), "--out",
                               str(tmp_path / "dyn")])
    assert res.exit_code == 0, res.output
    report = json.loads((tmp_path / "dyn" / "report.json").read_text())
    assert report["verdicts"]["trajectory_replay_valid"]
    assert report["verdicts"]["particle_number_conserved"]
    assert (tmp_path / "dyn" / "events.csv").exists()
    assert (tmp_path / "dyn" / "snapshots.txt").exists()
