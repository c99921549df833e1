"""Sequential vehicle-selection MDP with reputation-shaped rewards.

One step picks one vehicle.  The running selection is the 0/1 mask; a pick
earns the (negated, scaled) per-vehicle cost of the current selection plus a
shaping term: +1 for a high-reputation pick, -1 for a low one, an extra -10
and termination after ``consec_low_limit`` low picks in a row, and +20 with
termination once ``group_cap`` high-reputation vehicles are in.  Vehicles
farther than ``r0`` from the centroid are never selectable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..errors import InvalidActionError, ValidationError


@dataclass(frozen=True)
class SelectWorld:
    """Per-vehicle snapshot the selector sees (all arrays length n)."""

    ids: tuple[int, ...]
    tau_rates: np.ndarray  # uplink rate, parameter units / s
    xi: np.ndarray  # compute rate, cycles / s
    reps: np.ndarray  # final reputations in [0, 1]
    positions: np.ndarray  # (n, 2) meters
    n_samples: np.ndarray  # |d_i|
    n_params: int  # |w|

    @property
    def n(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class EnvConfig:
    n_vehicles: int
    high_rep_threshold: float = 0.5
    group_cap: int | None = None  # defaults to ceil(n/2)
    r0: float = 200.0
    gamma_discount: float = 0.99
    beta_m: float = 2.0
    horizon: int | None = None  # defaults to n_vehicles
    cost_scale: float = 0.1
    consec_low_limit: int = 5
    high_bonus: float = 1.0
    low_penalty: float = 1.0
    streak_penalty: float = 10.0
    cap_bonus: float = 20.0
    rol: str = "surrogate"  # or "literal"

    def __post_init__(self):
        if self.n_vehicles < 1:
            raise ValidationError("n_vehicles must be >= 1")
        if self.group_cap is not None and self.group_cap < 1:
            raise ValidationError("group_cap must be >= 1")
        if not self.r0 > 0:
            raise ValidationError("r0 must be positive")
        if not 0 < self.gamma_discount <= 1:
            raise ValidationError("gamma_discount must lie in (0, 1]")
        if self.rol not in ("surrogate", "literal"):
            raise ValidationError("rol must be 'surrogate' or 'literal'")

    @property
    def cap(self) -> int:
        return self.group_cap if self.group_cap is not None else math.ceil(self.n_vehicles / 2)

    @property
    def max_steps(self) -> int:
        return self.horizon if self.horizon is not None else self.n_vehicles


@dataclass(frozen=True, eq=False)
class SelectState:
    tau_rates: np.ndarray
    xi: np.ndarray
    rep: np.ndarray
    lambda_prev: np.ndarray  # 0/1 selection mask
    consec_low: int
    centroid: np.ndarray
    feasible: np.ndarray  # within r0 of the centroid
    high_count: int = 0
    steps: int = 0
    order: tuple[int, ...] = ()  # indices in pick order

    @property
    def valid_actions(self) -> np.ndarray:
        return (self.lambda_prev == 0) & self.feasible


# --------------------------------------------------------------------------- costs


def rol_cost(selected: Sequence[int], reps, literal: bool = False) -> float:
    """Reputation-of-learning cost of a selection: sum of (1 - rep).

    ``literal=True`` uses |1 - 1/rep| instead, a direct reading of the
    loss-of-inverse-reputation form (unbounded as rep -> 0).
    """
    reps = np.asarray(reps, dtype=float)
    if np.any((reps < 0) | (reps > 1)):
        raise ValidationError("reputations must lie in [0, 1]")
    sel = list(selected)
    if literal:
        return float(sum(abs(1.0 - 1.0 / max(reps[i], 1e-6)) for i in sel))
    return float(sum(1.0 - reps[i] for i in sel))


def time_cost(n_samples: float, beta_m: float, xi: float, n_params: float, tau_rate: float) -> tuple[float, float]:
    """(training time, upload time) = (|d| * beta_m / xi, |w| / tau)."""
    if not (xi > 0 and tau_rate > 0):
        raise ValidationError("xi and tau_rate must be positive")
    return n_samples * beta_m / xi, n_params / tau_rate


def node_time_costs(world: SelectWorld, beta_m: float) -> tuple[np.ndarray, np.ndarray]:
    if np.any(world.xi <= 0) or np.any(world.tau_rates <= 0):
        raise ValidationError("xi and tau_rate must be positive")
    return world.n_samples * beta_m / world.xi, world.n_params / world.tau_rates


def total_cost(selection: Sequence[int], world: SelectWorld, beta_m: float, literal_rol: bool = False) -> float:
    """RoL cost plus the mean (training + upload) time over the selection."""
    sel = list(selection)
    if not sel:
        raise ValidationError("selection is empty")
    ca, cu = node_time_costs(world, beta_m)
    return rol_cost(sel, world.reps, literal_rol) + float(np.mean(ca[sel] + cu[sel]))


def per_vehicle_cost(world: SelectWorld, cfg: EnvConfig) -> np.ndarray:
    ca, cu = node_time_costs(world, cfg.beta_m)
    if cfg.rol == "literal":
        sigma = np.abs(1.0 - 1.0 / np.maximum(world.reps, 1e-6))
    else:
        sigma = 1.0 - world.reps
    return ca + cu + sigma


# --------------------------------------------------------------------------- dynamics


def env_reset(cfg: EnvConfig, world: SelectWorld, seed=None) -> SelectState:
    """Fresh episode: empty mask, streak 0, snapshot of the world.

    The selector world is static, so ``seed`` only exists for interface symmetry.
    """
    if world.n < cfg.n_vehicles:
        raise ValidationError(f"world has {world.n} vehicles, config wants {cfg.n_vehicles}")
    n = cfg.n_vehicles
    pos = np.asarray(world.positions[:n], dtype=float)
    centroid = pos.mean(axis=0)
    feasible = np.linalg.norm(pos - centroid, axis=1) <= cfg.r0
    return SelectState(
        tau_rates=np.asarray(world.tau_rates[:n], float).copy(),
        xi=np.asarray(world.xi[:n], float).copy(),
        rep=np.asarray(world.reps[:n], float).copy(),
        lambda_prev=np.zeros(n, dtype=np.int8),
        consec_low=0,
        centroid=centroid,
        feasible=feasible,
    )


def env_step(state: SelectState, action: int, cfg: EnvConfig, costs: np.ndarray) -> tuple[SelectState, float, bool]:
    """Apply one pick; ``costs`` is ``per_vehicle_cost(world, cfg)``."""
    n = len(state.lambda_prev)
    if not (0 <= action < n) or not state.valid_actions[action]:
        raise InvalidActionError(f"action {action} is already selected or infeasible")
    mask = state.lambda_prev.copy()
    mask[action] = 1
    sel = np.flatnonzero(mask)
    reward = -cfg.cost_scale * float(costs[sel].mean())
    done = False
    consec, high = state.consec_low, state.high_count
    if state.rep[action] >= cfg.high_rep_threshold:
        reward += cfg.high_bonus
        consec = 0
        high += 1
        if high >= cfg.cap:
            reward += cfg.cap_bonus
            done = True
    else:
        reward -= cfg.low_penalty
        consec += 1
        if consec >= cfg.consec_low_limit:
            reward -= cfg.streak_penalty
            done = True
    steps = state.steps + 1
    nxt = replace(state, lambda_prev=mask, consec_low=consec, high_count=high, steps=steps, order=state.order + (action,))
    if not done and (steps >= cfg.max_steps or not nxt.valid_actions.any()):
        done = True
    return nxt, reward, done


def observe(state: SelectState, cfg: EnvConfig, scale: tuple[float, float]) -> np.ndarray:
    """Flat network input: 5 features per vehicle plus streak and cap progress."""
    tau_max, xi_max = scale
    per = np.column_stack([
        state.tau_rates / tau_max,
        state.xi / xi_max,
        state.rep,
        state.lambda_prev.astype(float),
        state.valid_actions.astype(float),
    ])
    extra = [state.consec_low / cfg.consec_low_limit, state.high_count / cfg.cap]
    return np.concatenate([per.ravel(), extra])


class SelectEnv:
    """Stateful wrapper used by the trainers."""

    def __init__(self, cfg: EnvConfig, world: SelectWorld):
        self.cfg = cfg
        self.world = world
        self.costs = per_vehicle_cost(world, cfg)[: cfg.n_vehicles]
        self.scale = (float(np.max(world.tau_rates[: cfg.n_vehicles])), float(np.max(world.xi[: cfg.n_vehicles])))
        self.state: SelectState | None = None

    @property
    def n_actions(self) -> int:
        return self.cfg.n_vehicles

    @property
    def obs_size(self) -> int:
        return 5 * self.cfg.n_vehicles + 2

    @property
    def max_cost(self) -> float:
        return float(self.costs.max())

    def reset(self, seed=None) -> np.ndarray:
        self.state = env_reset(self.cfg, self.world, seed)
        return self.obs()

    def obs(self) -> np.ndarray:
        return observe(self.state, self.cfg, self.scale)

    def valid(self) -> np.ndarray:
        return self.state.valid_actions.copy()

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        self.state, r, done = env_step(self.state, int(action), self.cfg, self.costs)
        return self.obs(), r, done


def greedy_episode(env: SelectEnv) -> tuple[float, list[int]]:
    """Always pick the highest-reputation selectable vehicle (ties by index)."""
    env.reset()
    total, done = 0.0, False
    while not done:
        valid = env.valid()
        if not valid.any():
            break
        reps = np.where(valid, env.state.rep, -np.inf)
        a = int(np.argmax(reps))
        _, r, done = env.step(a)
        total += r
    return total, list(env.state.order)


def random_policy_reward(env: SelectEnv, episodes: int, seed) -> float:
    rng = np.random.default_rng(seed)
    rewards = []
    for _ in range(episodes):
        env.reset()
        total, done = 0.0, False
        while not done:
            choices = np.flatnonzero(env.valid())
            _, r, done = env.step(int(rng.choice(choices)))
            total += r
        rewards.append(total)
    return float(np.mean(rewards))
