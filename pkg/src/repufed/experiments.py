"""Scenario runs, ablations, parameter sweeps and standalone selector training."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ScenarioConfig
from .drl.dqn import DQNHyper, dqn_train
from .drl.env import SelectEnv, greedy_episode, random_policy_reward
from .drl.ppo import PPOHyper, ppo_train
from .errors import ValidationError
from .world import World, build_world, env_config, evaluate, reputation_step, run_slot, select_world

VARIANTS = {"base": "afl", "no-drl": "no_drl", "no-dp": "no_dp", "no-afl": "sfl", "low-r": "low_r_priority"}
ABLATION_COLUMNS = ("variant", "mode", "ade", "fde", "rmse", "cost", "time_to_target")
SWEEP_COLUMNS = ("value", "repeat", "ade", "fde", "rmse", "cost")
CURVE_COLUMNS = ("episode", "reward", "loss_a", "loss_b")


@dataclass(frozen=True)
class SweepSpec:
    path: str
    values: tuple
    repeats: int = 1

    def __post_init__(self):
        if not self.values:
            raise ValidationError("sweep needs at least one value")
        if self.repeats < 1:
            raise ValidationError("repeats must be >= 1")


def derived_seed(seed: int, *words: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, *words]).generate_state(1)[0] & 0x7FFFFFFF)


# --------------------------------------------------------------------------- run


def run_scenario(cfg: ScenarioConfig, mode: str | None = None):
    """Build the world, run every slot, return (world, reports, summary)."""
    world = build_world(cfg if mode is None else cfg.override("fl.mode", mode))
    _, first = evaluate(world)
    target = cfg.fl.target_ratio * first["ade"]
    reports, reached = [], None
    for s in range(cfg.fl.slots):
        r = run_slot(world, s)
        reports.append(r)
        if reached is None and r.metrics["ade"] <= target:
            reached = r.clock
    last = reports[-1]
    summary = {
        "mode": world.cfg.fl.mode,
        "seed": cfg.seed,
        "slots": cfg.fl.slots,
        "initial_ade": first["ade"],
        "ade": last.metrics["ade"],
        "fde": last.metrics["fde"],
        "rmse": last.metrics["rmse"],
        "total_cost": float(sum(r.costs["total"] for r in reports)),
        "durations": [r.duration for r in reports],
        "sim_time": last.clock,
        "target_ade": target,
        "time_to_target": reached,
        "accepted": int(sum(r.accepted for r in reports)),
        "bad_ids": sorted(world.bad_ids()),
        "reputations": {str(n.id): n.reputation for n in world.nodes},
    }
    return world, reports, summary


def write_run(out: Path, reports, summary) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "rounds.jsonl", "".join(r.to_json() + "\n" for r in reports))
    _atomic_write(out / "summary.json", json.dumps(summary, sort_keys=True, indent=2, allow_nan=False) + "\n")


# --------------------------------------------------------------------------- ablation


def ablate(cfg: ScenarioConfig, variants: Sequence[str]) -> list[dict]:
    if len(variants) < 2:
        raise ValidationError("ablation needs at least two variants")
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ValidationError(f"unknown variants {unknown}; choose from {sorted(VARIANTS)}")
    if len(set(variants)) != len(variants):
        raise ValidationError("duplicate variants")
    rows = []
    for v in variants:
        _, _, s = run_scenario(cfg, VARIANTS[v])
        rows.append({"variant": v, "mode": VARIANTS[v], "ade": s["ade"], "fde": s["fde"], "rmse": s["rmse"],
                     "cost": s["total_cost"], "time_to_target": s["time_to_target"]})
    return rows


# --------------------------------------------------------------------------- sweep


def parse_values(text: str) -> tuple:
    """'0.1,0.2' or 'lo:hi:step' (inclusive) into a tuple of numbers."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValidationError("range needs step > 0 and hi >= lo")
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return tuple(round(lo + k * step, 10) for k in range(n))
        vals = []
        for tok in text.split(","):
            tok = tok.strip()
            vals.append(int(tok) if tok.lstrip("-").isdigit() else float(tok))
        return tuple(vals)
    except ValueError as exc:
        raise ValidationError(f"bad sweep values {text!r}") from exc


def _cast(cfg: ScenarioConfig, path: str, value):
    sec, key = path.split(".", 1) if "." in path else (None, path)
    try:
        current = getattr(getattr(cfg, sec), key) if sec else getattr(cfg, key)
    except AttributeError:
        raise ValidationError(f"unknown parameter path {path!r}") from None
    if isinstance(current, int) and not isinstance(current, bool) and isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def sweep(cfg: ScenarioConfig, spec: SweepSpec) -> tuple[list[dict], dict]:
    cfg.override(spec.path, _cast(cfg, spec.path, spec.values[0]))  # resolve the path up front
    rows = []
    for value in spec.values:
        for rep in range(spec.repeats):
            c = cfg.override(spec.path, _cast(cfg, spec.path, value)).override("seed", derived_seed(cfg.seed, rep))
            _, _, s = run_scenario(c)
            rows.append({"value": value, "repeat": rep, "ade": s["ade"], "fde": s["fde"], "rmse": s["rmse"],
                         "cost": s["total_cost"]})
    return rows, sweep_metadata(spec, rows)


def sweep_metadata(spec: SweepSpec, rows: list[dict], band: float | None = None) -> dict:
    means = [float(np.mean([r["ade"] for r in rows if r["value"] == v])) for v in spec.values]
    diffs = np.diff(means)
    if len(diffs) and np.all(diffs >= 0):
        trend = "non-decreasing"
    elif len(diffs) and np.all(diffs <= 0):
        trend = "non-increasing"
    else:
        trend = "mixed"
    lo = min(means)
    meta = {"path": spec.path, "values": list(spec.values), "repeats": spec.repeats, "mean_ade": means,
            "trend": trend, "relative_spread": (max(means) - lo) / lo if lo > 0 else 0.0}
    if band is not None:
        meta["band"] = band
        meta["within_band"] = meta["relative_spread"] <= band
    return meta


# --------------------------------------------------------------------------- selector


def drl_env(cfg: ScenarioConfig) -> SelectEnv:
    """Selector environment over the scenario's fleet after a few reputation-only slots."""
    world = build_world(cfg.override("drl.enabled", False))
    for s in range(cfg.drl.warmup_slots):
        reputation_step(world, s, cfg.dp.enabled)
    return SelectEnv(env_config(world), select_world(world))


def drl_train(cfg: ScenarioConfig, algo: str, env: SelectEnv | None = None):
    d = cfg.drl
    env = drl_env(cfg) if env is None else env
    if algo == "ppo":
        hyper = PPOHyper(episodes=d.episodes, episodes_per_batch=d.episodes_per_batch,
                         epochs_per_batch=d.epochs_per_batch, clip_eps=d.clip_eps, lr=d.lr, value_lr=d.lr,
                         gamma=d.gamma_discount, lam=d.gae_lambda, hidden=tuple(d.hidden))
        res = ppo_train(env, hyper, seed=cfg.seed)
        loss_keys = ("objective", "value_loss")
    elif algo == "dqn":
        res = dqn_train(env, DQNHyper(episodes=d.episodes, gamma=d.gamma_discount, hidden=tuple(d.hidden)), seed=cfg.seed)
        loss_keys = ("td_loss", "epsilon")
    else:
        raise ValidationError(f"unknown algorithm {algo!r}")
    rows = [{"episode": k, "reward": r, "loss_a": res.losses[k].get(loss_keys[0], 0.0),
             "loss_b": res.losses[k].get(loss_keys[1], 0.0)} for k, r in enumerate(res.curve)]
    return res, rows, env


def baselines(env: SelectEnv, seed: int, episodes: int = 200) -> dict:
    return {"greedy": greedy_episode(env)[0], "random": random_policy_reward(env, episodes, seed)}


# --------------------------------------------------------------------------- files


def to_csv(rows: list[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in columns])
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def write_csv(path: Path, rows: list[dict], columns: Sequence[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, to_csv(rows, columns))


def write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n")
