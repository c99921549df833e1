"""Clipped-surrogate policy optimisation for the selection MDP."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import TrainingError, ValidationError
from .env import SelectEnv
from .nets import MLP, Adam, seed_sequence, masked_log_softmax


@dataclass(frozen=True, eq=False)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool
    log_prob: float = 0.0
    value_estimate: float = 0.0
    mask: np.ndarray | None = None

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise ValidationError("reward must be finite")


@dataclass(frozen=True)
class PPOHyper:
    episodes: int = 500
    episodes_per_batch: int = 10
    epochs_per_batch: int = 4
    clip_eps: float = 0.2
    lr: float = 3e-3
    value_lr: float = 3e-3
    gamma: float = 0.99
    lam: float = 0.95
    entropy_coef: float = 0.01
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if self.episodes < 1 or self.episodes_per_batch < 1 or self.epochs_per_batch < 1:
            raise ValidationError("episode and epoch counts must be >= 1")
        if not 0 < self.clip_eps < 1:
            raise ValidationError("clip_eps must lie in (0, 1)")


@dataclass
class TrainResult:
    policy: MLP
    curve: list[float]
    value: MLP | None = None
    losses: list[dict] = field(default_factory=list)


def rewards_to_go(rewards: Sequence, gamma: float) -> np.ndarray:
    """Discounted suffix sums of one terminated episode (rewards or transitions)."""
    r = np.array([t.reward if isinstance(t, Transition) else t for t in rewards], dtype=float)
    out = np.zeros_like(r)
    acc = 0.0
    for t in range(len(r) - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


def gae_advantages(transitions: Sequence[Transition], gamma: float, lam: float, normalize: bool = True) -> np.ndarray:
    """Generalised advantage estimates over one or more concatenated episodes."""
    n = len(transitions)
    adv = np.zeros(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        tr = transitions[t]
        if tr.done or t == n - 1:
            next_v, acc = 0.0, 0.0
            if not tr.done:
                raise ValidationError("last transition must terminate its episode")
        else:
            next_v = transitions[t + 1].value_estimate
        delta = tr.reward + gamma * next_v - tr.value_estimate
        acc = delta + gamma * lam * acc
        adv[t] = acc
    if normalize and n:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv


def make_nets(env: SelectEnv, hidden: Sequence[int], seed) -> tuple[MLP, MLP]:
    ss = seed_sequence(seed)
    a, b = ss.spawn(2)
    policy = MLP([env.obs_size, *hidden, env.n_actions], seed=a, out_scale=0.01)
    value = MLP([env.obs_size, *hidden, 1], seed=b)
    return policy, value


def policy_objective(policy: MLP, batch: dict, clip_eps: float, entropy_coef: float = 0.0):
    """Mean clipped surrogate (+ entropy bonus) and its gradient w.r.t. the flat params."""
    logits, acts = policy.forward(batch["obs"], keep=True)
    mask = batch["masks"]
    logp_all = masked_log_softmax(logits, mask)
    pi = np.where(mask, np.exp(logp_all), 0.0)
    idx = np.arange(len(logits))
    a = batch["actions"]
    adv = batch["adv"]
    ratio = np.exp(logp_all[idx, a] - batch["old_logp"])
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - clip_eps, 1 + clip_eps) * adv
    surr = np.minimum(unclipped, clipped)
    safe_logp = np.where(mask, logp_all, 0.0)
    ent = -(pi * safe_logp).sum(axis=1)
    n = len(logits)
    obj = float(surr.mean() + entropy_coef * ent.mean())
    g_logp = np.where(unclipped <= clipped, ratio * adv, 0.0)
    onehot = np.zeros_like(logits)
    onehot[idx, a] = 1.0
    d_logits = g_logp[:, None] * (onehot - pi)
    d_logits += entropy_coef * (-pi * (safe_logp + ent[:, None]))
    d_logits /= n
    dW, db = policy.backward(acts, d_logits)
    stats = {"surrogate": float(surr.mean()), "entropy": float(ent.mean()), "clip_frac": float(np.mean(np.abs(ratio - 1) > clip_eps))}
    return obj, MLP.flat_grads(dW, db), stats


def value_objective(value: MLP, batch: dict):
    """Mean squared error to the returns and its gradient."""
    v, acts = value.forward(batch["obs"], keep=True)
    err = v[:, 0] - batch["returns"]
    loss = float(np.mean(err**2))
    d = (2.0 * err / len(err))[:, None]
    dW, db = value.backward(acts, d)
    return loss, MLP.flat_grads(dW, db)


class PPOOptimizers:
    def __init__(self, policy: MLP, value: MLP, lr: float, value_lr: float):
        self.policy = Adam(policy.flat().size, lr)
        self.value = Adam(value.flat().size, value_lr)


def ppo_update(policy: MLP, value: MLP, batch: dict, clip_eps: float, lr: float, epochs_per_batch: int,
               opt: PPOOptimizers | None = None, value_lr: float | None = None, entropy_coef: float = 0.0):
    """Full-batch Adam ascent on the surrogate and descent on the value MSE."""
    if len(batch["actions"]) == 0:
        raise ValidationError("empty batch")
    policy, value = policy.copy(), value.copy()
    if opt is None:
        opt = PPOOptimizers(policy, value, lr, lr if value_lr is None else value_lr)
    stats = {}
    for _ in range(epochs_per_batch):
        obj, g, stats = policy_objective(policy, batch, clip_eps, entropy_coef)
        vloss, vg = value_objective(value, batch)
        if not (np.isfinite(obj) and np.isfinite(vloss)):
            raise TrainingError("non-finite PPO loss")
        policy.set_flat(opt.policy.step(policy.flat(), -g))
        value.set_flat(opt.value.step(value.flat(), vg))
        stats = dict(stats, objective=obj, value_loss=vloss)
    return policy, value, stats


def sample_action(policy: MLP, obs: np.ndarray, mask: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
    logp = masked_log_softmax(policy.forward(obs)[0], mask)
    p = np.where(mask, np.exp(logp), 0.0)
    p /= p.sum()
    a = int(rng.choice(len(p), p=p))
    return a, float(logp[a])


def collect_episode(env: SelectEnv, policy: MLP, value: MLP, rng) -> list[Transition]:
    obs = env.reset()
    out, done = [], False
    while not done:
        mask = env.valid()
        a, lp = sample_action(policy, obs, mask, rng)
        v = float(value.forward(obs)[0, 0])
        nxt, r, done = env.step(a)
        out.append(Transition(obs, a, r, nxt, done, lp, v, mask))
        obs = nxt
    return out


def _batch(episodes: list[list[Transition]], gamma: float, lam: float) -> dict:
    flat = [t for ep in episodes for t in ep]
    returns = np.concatenate([rewards_to_go(ep, gamma) for ep in episodes])
    return {
        "obs": np.stack([t.state for t in flat]),
        "actions": np.array([t.action for t in flat]),
        "masks": np.stack([t.mask for t in flat]),
        "old_logp": np.array([t.log_prob for t in flat]),
        "adv": gae_advantages(flat, gamma, lam),
        "returns": returns,
    }


def ppo_train(env: SelectEnv, hyper: PPOHyper = PPOHyper(), seed=0, policy: MLP | None = None,
              value: MLP | None = None) -> TrainResult:
    """Collect, score, update; returns the per-episode reward curve."""
    rng = np.random.default_rng(seed_sequence(seed).spawn(3)[2])
    if policy is None or value is None:
        policy, value = make_nets(env, hyper.hidden, seed)
    opt = PPOOptimizers(policy, value, hyper.lr, hyper.value_lr)
    curve, losses = [], []
    done_eps = 0
    while done_eps < hyper.episodes:
        k = min(hyper.episodes_per_batch, hyper.episodes - done_eps)
        eps = [collect_episode(env, policy, value, rng) for _ in range(k)]
        curve.extend(float(sum(t.reward for t in ep)) for ep in eps)
        done_eps += k
        batch = _batch(eps, hyper.gamma, hyper.lam)
        policy, value, stats = ppo_update(policy, value, batch, hyper.clip_eps, hyper.lr, hyper.epochs_per_batch,
                                          opt=opt, entropy_coef=hyper.entropy_coef)
        losses.extend([stats] * k)
    return TrainResult(policy, curve, value, losses)


def greedy_rollout(net: MLP, env: SelectEnv) -> tuple[float, list[int]]:
    """Deterministic rollout taking the best-scoring valid action each step."""
    obs = env.reset()
    total, done = 0.0, False
    while not done:
        scores = np.where(env.valid(), net.forward(obs)[0], -np.inf)
        obs, r, done = env.step(int(np.argmax(scores)))
        total += r
    return total, list(env.state.order)


def policy_group(net: MLP, env: SelectEnv) -> tuple[list[int], list[int]]:
    """(selected, rest) as vehicle ids from a greedy rollout."""
    _, order = greedy_rollout(net, env)
    ids = env.world.ids[: env.n_actions]
    high = [ids[i] for i in order]
    chosen = set(order)
    low = [ids[i] for i in range(env.n_actions) if i not in chosen]
    return high, low
