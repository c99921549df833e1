"""Scenario configuration: TOML sections [scene] [fl] [dp] [drl] [reputation]."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .errors import ValidationError

MODES = ("afl", "sfl", "low_r_priority", "no_dp", "no_drl")


@dataclass(frozen=True)
class SceneSection:
    csv: str = ""  # optional road scene; synthesized when empty
    n_vehicles: int = 20
    bad_fraction: float = 0.3
    bad_mode: str = "jitter"
    bad_magnitude: float = 1.5
    tau: int = 6
    t_f: int = 6
    stride: int = 2
    frame_rate: float = 2.0
    road_lanes: int = 3
    shard_vehicles: int = 10
    shard_frames: int = 100
    test_scenes: int = 4
    speed_range: tuple = (18.0, 32.0)
    wobble_range: tuple = (0.5, 3.0)
    lane_change_range: tuple = (0.01, 0.06)
    xi_range: tuple = (60.0, 600.0)  # compute spread x10
    tau_rate_range: tuple = (100.0, 300.0)
    s_comm_range: tuple = (0.6, 1.0)
    sense_noise: float = 0.3
    comm_range: float = 250.0

    def __post_init__(self):
        if self.n_vehicles < 2:
            raise ValidationError("scene.n_vehicles must be >= 2")
        if not 0 <= self.bad_fraction <= 1:
            raise ValidationError("scene.bad_fraction must lie in [0, 1]")
        if self.bad_mode not in ("scale", "jitter", "swap"):
            raise ValidationError("scene.bad_mode must be scale, jitter or swap")
        if self.tau < 2 or self.t_f < 1 or self.stride < 1:
            raise ValidationError("scene.tau >= 2, t_f >= 1, stride >= 1 required")
        if self.shard_frames < self.tau + self.t_f:
            raise ValidationError("scene.shard_frames shorter than one window")
        for name in ("speed_range", "wobble_range", "lane_change_range", "xi_range", "tau_rate_range", "s_comm_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"scene.{name} must be ordered")
        if self.xi_range[0] <= 0 or self.tau_rate_range[0] <= 0:
            raise ValidationError("compute and uplink rates must be positive")


@dataclass(frozen=True)
class FlSection:
    mode: str = "afl"
    slots: int = 30
    local_epochs: int = 5
    lr: float = 0.1
    init_scale: float = 0.0
    deep_rounds: int = 3
    shallow_weight: float = 0.25
    mix0: float = 0.5
    decay: float = 0.5
    quorum: float = 0.5
    aggregate_every: int = 1
    committee_k: int = 5
    por_tolerance: float = 0.02
    beta_m: float = 2.0
    adjacency: str = "similarity"
    gossip_rounds: int = 2
    gossip_fanout: int = 2
    target_ratio: float = 0.8  # time-to-target goal: ADE <= ratio * initial ADE

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"fl.mode must be one of {MODES}")
        if self.slots < 1 or self.local_epochs < 1 or self.deep_rounds < 1:
            raise ValidationError("fl.slots, local_epochs and deep_rounds must be >= 1")
        if not 0 < self.quorum <= 1:
            raise ValidationError("fl.quorum must lie in (0, 1]")
        if self.aggregate_every < 1:
            raise ValidationError("fl.aggregate_every must be >= 1")
        if self.adjacency not in ("similarity", "distance", "none"):
            raise ValidationError("fl.adjacency must be similarity, distance or none")
        if self.committee_k < 1:
            raise ValidationError("fl.committee_k must be >= 1")


@dataclass(frozen=True)
class DpSection:
    enabled: bool = True
    epsilon: float = 0.3
    sensitivity_s: float = 1.0
    dp_every: int = 1
    protect_reputation: bool = True
    redundancy_threshold: float = 0.8
    seq_k: int = 4

    def __post_init__(self):
        if not self.epsilon > 0 or not self.sensitivity_s > 0:
            raise ValidationError("dp.epsilon and dp.sensitivity_s must be positive")
        if self.dp_every < 1:
            raise ValidationError("dp.dp_every must be >= 1")


@dataclass(frozen=True)
class DrlSection:
    enabled: bool = True
    algo: str = "ppo"
    episodes: int = 500
    pretrain_episodes: int = 200
    finetune_episodes: int = 20
    warmup_slots: int = 3
    high_rep_threshold: float = 0.5
    group_cap: int = 0  # 0 means ceil(n/2)
    r0: float = 200.0
    cost_scale: float = 0.1
    gamma_discount: float = 0.99
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    lr: float = 3e-3
    episodes_per_batch: int = 10
    epochs_per_batch: int = 4
    hidden: tuple = (64, 64)
    rol: str = "surrogate"

    def __post_init__(self):
        if self.algo not in ("ppo", "dqn"):
            raise ValidationError("drl.algo must be ppo or dqn")
        if self.episodes < 1:
            raise ValidationError("drl.episodes must be >= 1")
        if self.group_cap < 0:
            raise ValidationError("drl.group_cap must be >= 0")
        if not self.r0 > 0:
            raise ValidationError("drl.r0 must be positive")


@dataclass(frozen=True)
class ReputationSection:
    gamma: float = 0.5
    sim_threshold: float = 0.95
    eps_lcs: float = 2.0
    rho: tuple = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValidationError("reputation.gamma must lie in [0, 1]")
        if not 0 <= self.sim_threshold <= 1:
            raise ValidationError("reputation.sim_threshold must lie in [0, 1]")


SECTIONS = {"scene": SceneSection, "fl": FlSection, "dp": DpSection, "drl": DrlSection, "reputation": ReputationSection}


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    scene: SceneSection = field(default_factory=SceneSection)
    fl: FlSection = field(default_factory=FlSection)
    dp: DpSection = field(default_factory=DpSection)
    drl: DrlSection = field(default_factory=DrlSection)
    reputation: ReputationSection = field(default_factory=ReputationSection)
    out: str = "out"

    def override(self, path: str, value) -> "ScenarioConfig":
        """Return a copy with a dotted ``section.key`` replaced."""
        parts = path.split(".")
        if len(parts) == 1:
            if parts[0] not in ("seed", "out"):
                raise ValidationError(f"unknown parameter path {path!r}")
            return replace(self, **{parts[0]: value})
        if len(parts) != 2 or parts[0] not in SECTIONS:
            raise ValidationError(f"unknown parameter path {path!r}")
        sec = getattr(self, parts[0])
        names = {f.name: f for f in fields(sec)}
        if parts[1] not in names:
            raise ValidationError(f"unknown parameter path {path!r}")
        return replace(self, **{parts[0]: replace(sec, **{parts[1]: _coerce(getattr(sec, parts[1]), value, path)})})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(default, value, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValidationError(f"{where}: expected a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{where}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{where}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValidationError(f"{where}: expected a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ValidationError(f"{where}: expected an array")
        return tuple(float(v) if isinstance(d, float) else v for v, d in zip(value, list(default) + [0.0] * len(value)))
    return value


def config_from_dict(doc: dict, seed: int | None = None) -> ScenarioConfig:
    unknown = set(doc) - set(SECTIONS) - {"seed", "out"}
    if unknown:
        raise ValidationError(f"unknown config keys {sorted(unknown)}")
    if seed is None:
        seed = doc.get("seed")
    if seed is None:
        raise ValidationError("seed is mandatory (config 'seed' or --seed)")
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ValidationError("seed must be an integer")
    cfg = ScenarioConfig(seed=seed)
    if "out" in doc:
        cfg = cfg.override("out", str(doc["out"]))
    for name in SECTIONS:
        sec = doc.get(name, {})
        if not isinstance(sec, dict):
            raise ValidationError(f"[{name}] must be a table")
        for key, value in sec.items():
            cfg = cfg.override(f"{name}.{key}", value)
    return cfg


def load_config(path, seed: int | None = None) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {p}")
    try:
        doc = tomllib.loads(p.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"config parse error: {exc}") from exc
    cfg = config_from_dict(doc, seed)
    if cfg.scene.csv and not Path(cfg.scene.csv).is_absolute():
        cfg = cfg.override("scene.csv", str((p.parent / cfg.scene.csv).resolve()))
    return cfg
