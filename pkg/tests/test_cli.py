import hashlib
import json

import numpy as np
import pytest

from conftest import SMALL_TOML, small_config, validate_csv
from repufed.cli import main
from repufed.config import ScenarioConfig, config_from_dict, load_config
from repufed.errors import ValidationError
from repufed.experiments import (SweepSpec, ablate, derived_seed, parse_values, run_scenario, sweep, sweep_metadata,
                                 to_csv)

ABLATION_SCHEMA = {"variant": str, "mode": str, "ade": float, "fde": float, "rmse": float, "cost": float,
                   "time_to_target": "float?"}
SWEEP_SCHEMA = {"value": float, "repeat": int, "ade": float, "fde": float, "rmse": float, "cost": float}
CURVE_SCHEMA = {"episode": int, "reward": float, "loss_a": float, "loss_b": float}

TWO_VEHICLES = """seed = 0
[scene]
n_vehicles = 2
shard_vehicles = 2
shard_frames = 20
test_scenes = 1
[fl]
slots = 2
local_epochs = 1
committee_k = 2
[drl]
episodes = 5
pretrain_episodes = 4
finetune_episodes = 1
warmup_slots = 1
hidden = [4]
"""


def digest(directory):
    h = hashlib.sha256()
    for p in sorted(directory.rglob("*")):
        if p.is_file():
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# --------------------------------------------------------------------------- config

def test_seed_mandatory():
    with pytest.raises(ValidationError):
        config_from_dict({"fl": {"slots": 2}})
    assert config_from_dict({}, seed=5).seed == 5


def test_unknown_keys_and_types():
    with pytest.raises(ValidationError):
        config_from_dict({"seed": 1, "nonsense": {}})
    with pytest.raises(ValidationError):
        config_from_dict({"seed": 1, "fl": {"bogus": 1}})
    with pytest.raises(ValidationError):
        config_from_dict({"seed": 1, "fl": {"slots": "many"}})
    with pytest.raises(ValidationError):
        config_from_dict({"seed": 1, "fl": {"mode": "turbo"}})


def test_every_default_overridable():
    cfg = ScenarioConfig(seed=0)
    for sec, values in cfg.to_dict().items():
        if not isinstance(values, dict):
            continue
        for key, val in values.items():
            assert getattr(getattr(cfg.override(f"{sec}.{key}", val), sec), key) == val


def test_load_config_errors(tmp_path):
    with pytest.raises(ValidationError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = [")
    with pytest.raises(ValidationError):
        load_config(bad)


def test_parse_values():
    assert len(parse_values("0.1:1.0:0.1")) == 10
    assert parse_values("1, 2,3") == (1, 2, 3)
    assert parse_values("0.5,1e-1") == (0.5, 0.1)
    with pytest.raises(ValidationError):
        parse_values("a,b")
    with pytest.raises(ValidationError):
        parse_values("1:0:0.1")


def test_sweep_spec_validation():
    with pytest.raises(ValidationError):
        SweepSpec("dp.epsilon", ())
    with pytest.raises(ValidationError):
        SweepSpec("dp.epsilon", (0.1,), 0)


def test_derived_seeds_distinct():
    assert len({derived_seed(7, r) for r in range(50)}) == 50


# --------------------------------------------------------------------------- experiments

def test_epsilon_sweep_rows():
    spec = SweepSpec("dp.epsilon", parse_values("0.1:1.0:0.1"), 1)
    rows, meta = sweep(small_config(0, **{"fl.slots": 1, "drl.enabled": False}), spec)
    assert len(rows) == 10 and meta["trend"] in ("non-decreasing", "non-increasing", "mixed")
    validate_csv(to_csv(rows, list(SWEEP_SCHEMA)), SWEEP_SCHEMA)


def test_sweep_metadata_band_and_trend():
    spec = SweepSpec("fl.aggregate_every", (1, 2, 3), 2)
    rows = [{"value": v, "repeat": r, "ade": float(v), "fde": 0, "rmse": 0, "cost": 0} for v in (1, 2, 3) for r in (0, 1)]
    meta = sweep_metadata(spec, rows, band=0.5)
    assert meta["trend"] == "non-decreasing" and meta["relative_spread"] == 2.0 and meta["within_band"] is False


def test_bad_node_sweep_within_band():
    spec = SweepSpec("scene.bad_fraction", (0.0, 0.1, 0.2, 0.3), 1)
    cfg = small_config(0, **{"fl.slots": 4, "scene.n_vehicles": 10, "drl.enabled": False})
    _, meta = sweep(cfg, spec)
    assert sweep_metadata(spec, _, band=0.25)["within_band"]


def test_ablate_rules():
    cfg = small_config(0)
    with pytest.raises(ValidationError):
        ablate(cfg, ["base"])
    with pytest.raises(ValidationError):
        ablate(cfg, ["base", "turbo"])
    rows = ablate(cfg, ["base", "low-r", "no-afl"])
    assert [r["variant"] for r in rows] == ["base", "low-r", "no-afl"]
    validate_csv(to_csv(rows, list(ABLATION_SCHEMA)), ABLATION_SCHEMA)


def test_run_summary_fields():
    _, reports, summary = run_scenario(small_config(2))
    assert len(reports) == summary["slots"] == 3
    assert {"ade", "fde", "rmse", "total_cost", "durations"} <= set(summary)
    assert len(summary["durations"]) == 3


# --------------------------------------------------------------------------- command line

def test_cli_run_two_vehicles(tmp_path):
    cfg = tmp_path / "two.toml"
    cfg.write_text(TWO_VEHICLES)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "rounds.jsonl").read_text().splitlines()
    assert len(lines) == 2 and all(json.loads(l)["slot"] == k for k, l in enumerate(lines))
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert np.isfinite(summary["ade"])


def test_cli_missing_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 2


def test_cli_config_error_exit_two(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("seed = 1\n[fl]\nmode = 'turbo'\n")
    assert main(["run", "--config", str(p)]) == 2


def test_cli_usage_error_exit_two(tiny_toml):
    assert main([]) == 2
    assert main(["drl", "--config", str(tiny_toml), "--algo", "a2c"]) == 2


def test_cli_unknown_variant(tiny_toml, tmp_path):
    assert main(["ablate", "--config", str(tiny_toml), "--variants", "base,turbo", "--out", str(tmp_path)]) == 2
    assert main(["ablate", "--config", str(tiny_toml), "--variants", "base", "--out", str(tmp_path)]) == 2


def test_cli_bad_sweep_path(tiny_toml, tmp_path):
    assert main(["sweep", "--config", str(tiny_toml), "--param", "fl.warp", "--values", "1",
                 "--out", str(tmp_path)]) == 2


def test_cli_runtime_error_exit_one(tmp_path, monkeypatch):
    import repufed.cli as cli

    def boom(*a, **k):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(cli, "run_scenario", boom)
    p = tmp_path / "c.toml"
    p.write_text(SMALL_TOML)
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_cli_outputs_parse(tiny_toml, tmp_path):
    out = tmp_path / "o"
    assert main(["ablate", "--config", str(tiny_toml), "--variants", "base,no-dp", "--out", str(out)]) == 0
    assert main(["sweep", "--config", str(tiny_toml), "--param", "dp.epsilon", "--values", "0.2,0.4",
                 "--repeats", "2", "--band", "0.3", "--out", str(out)]) == 0
    for algo in ("ppo", "dqn"):
        assert main(["drl", "--config", str(tiny_toml), "--algo", algo, "--out", str(out)]) == 0
        rows = validate_csv((out / f"curve_{algo}.csv").read_text(), CURVE_SCHEMA)
        assert [r["episode"] for r in rows] == list(range(12))
        assert (out / f"policy_{algo}.json").exists()
    assert len(validate_csv((out / "ablation.csv").read_text(), ABLATION_SCHEMA)) == 2
    assert len(validate_csv((out / "sweep.csv").read_text(), SWEEP_SCHEMA)) == 4
    meta = json.loads((out / "sweep_meta.json").read_text())
    assert meta["band"] == 0.3 and "within_band" in meta


def test_cli_ppo_curve_improves(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SMALL_TOML.replace("episodes = 12", "episodes = 300").replace("hidden = [8, 8]", "hidden = [32, 32]"))
    assert main(["drl", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    r = [row["reward"] for row in validate_csv((tmp_path / "curve_ppo.csv").read_text(), CURVE_SCHEMA)]
    assert np.mean(r[-100:]) > np.mean(r[:100])


def test_seed_flag_overrides(tiny_toml, tmp_path):
    assert main(["run", "--config", str(tiny_toml), "--seed", "11", "--out", str(tmp_path / "a")]) == 0
    assert json.loads((tmp_path / "a" / "summary.json").read_text())["seed"] == 11


@pytest.mark.parametrize("argv", [
    ["run"],
    ["ablate", "--variants", "base,no-drl,no-dp,no-afl,low-r"],
    ["sweep", "--param", "dp.epsilon", "--values", "0.1:0.3:0.1", "--repeats", "2"],
    ["drl", "--algo", "ppo"],
    ["drl", "--algo", "dqn"],
])
def test_byte_identical_reruns(argv, tiny_toml, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--config", str(tiny_toml), "--out", str(a)]) == 0
    assert main(argv + ["--config", str(tiny_toml), "--out", str(b)]) == 0
    assert digest(a) == digest(b)
