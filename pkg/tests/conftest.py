import csv
import io
import math

import numpy as np
import pytest

from repufed.config import ScenarioConfig


def small_config(seed: int = 0, **overrides) -> ScenarioConfig:
    """A few-second scenario used by integration tests."""
    cfg = ScenarioConfig(seed=seed)
    base = {
        "scene.n_vehicles": 6,
        "scene.shard_vehicles": 3,
        "scene.shard_frames": 30,
        "scene.test_scenes": 2,
        "fl.slots": 3,
        "fl.local_epochs": 2,
        "fl.committee_k": 3,
        "drl.episodes": 10,
        "drl.pretrain_episodes": 10,
        "drl.finetune_episodes": 2,
        "drl.warmup_slots": 1,
        "drl.hidden": (8, 8),
    }
    base.update(overrides)
    for k, v in base.items():
        cfg = cfg.override(k, v)
    return cfg


@pytest.fixture
def tiny_cfg():
    return small_config()


SMALL_TOML = """seed = 3
[scene]
n_vehicles = 6
shard_vehicles = 3
shard_frames = 30
test_scenes = 2
[fl]
slots = 3
local_epochs = 2
committee_k = 3
[drl]
episodes = 12
pretrain_episodes = 10
finetune_episodes = 2
warmup_slots = 1
hidden = [8, 8]
"""


@pytest.fixture
def tiny_toml(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(SMALL_TOML)
    return p


def validate_csv(text: str, schema: dict) -> list[dict]:
    """Parse CSV text against {column: type}; types are int, float, str or 'float?' (empty allowed)."""
    rows = list(csv.reader(io.StringIO(text)))
    assert rows, "empty csv"
    assert tuple(rows[0]) == tuple(schema), f"header {rows[0]} != {list(schema)}"
    out = []
    for line in rows[1:]:
        assert len(line) == len(schema)
        rec = {}
        for (name, kind), cell in zip(schema.items(), line):
            if kind == "float?":
                rec[name] = None if cell == "" else float(cell)
            elif kind is float:
                rec[name] = float(cell)
                assert math.isfinite(rec[name])
            else:
                rec[name] = kind(cell)
        out.append(rec)
    return out


def rng(seed=0):
    return np.random.default_rng(seed)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
