"""Deep Q-learning baseline with replay and a periodically copied target net."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..errors import TrainingError, ValidationError
from .env import SelectEnv
from .nets import MLP, Adam, seed_sequence
from .ppo import TrainResult


@dataclass(frozen=True)
class DQNHyper:
    episodes: int = 500
    lr: float = 1e-3
    gamma: float = 0.99
    batch_size: int = 32
    buffer_size: int = 5000
    target_interval: int = 250
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_episodes: int = 250
    warmup: int = 64
    huber_delta: float = 1.0
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if self.episodes < 1 or self.batch_size < 1 or self.target_interval < 1:
            raise ValidationError("episodes, batch_size and target_interval must be >= 1")
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ValidationError("need 0 <= eps_end <= eps_start <= 1")


def epsilon_at(episode: int, hyper: DQNHyper) -> float:
    """Linear decay to the floor over ``eps_decay_episodes``."""
    if hyper.eps_decay_episodes <= 0:
        return hyper.eps_end
    frac = episode / hyper.eps_decay_episodes
    if frac >= 1.0:
        return hyper.eps_end
    return hyper.eps_start + frac * (hyper.eps_end - hyper.eps_start)


def td_loss(q: MLP, target: MLP, batch: dict, gamma: float, delta: float):
    """Huber TD loss and its gradient w.r.t. the online network."""
    out, acts = q.forward(batch["obs"], keep=True)
    nq = target.forward(batch["next_obs"])
    nq = np.where(batch["next_masks"], nq, -np.inf)
    best = np.where(batch["done"], 0.0, np.max(np.where(batch["next_masks"].any(1)[:, None], nq, 0.0), axis=1))
    y = batch["rewards"] + gamma * best
    idx = np.arange(len(y))
    err = out[idx, batch["actions"]] - y
    absd = np.abs(err)
    loss = float(np.mean(np.where(absd <= delta, 0.5 * err**2, delta * (absd - 0.5 * delta))))
    d = np.zeros_like(out)
    d[idx, batch["actions"]] = np.clip(err, -delta, delta) / len(y)
    dW, db = q.backward(acts, d)
    return loss, MLP.flat_grads(dW, db)


def dqn_train(env: SelectEnv, hyper: DQNHyper = DQNHyper(), seed=0) -> TrainResult:
    ss = seed_sequence(seed)
    net_seed, rng_seed = ss.spawn(2)
    q = MLP([env.obs_size, *hyper.hidden, env.n_actions], seed=net_seed, out_scale=0.1)
    target = q.copy()
    opt = Adam(q.flat().size, hyper.lr)
    rng = np.random.default_rng(rng_seed)
    buf: deque = deque(maxlen=hyper.buffer_size)
    curve, losses = [], []
    steps = 0
    for ep in range(hyper.episodes):
        eps = epsilon_at(ep, hyper)
        obs = env.reset()
        total, done, ep_loss = 0.0, False, []
        while not done:
            mask = env.valid()
            if rng.random() < eps:
                a = int(rng.choice(np.flatnonzero(mask)))
            else:
                a = int(np.argmax(np.where(mask, q.forward(obs)[0], -np.inf)))
            nxt, r, done = env.step(a)
            nmask = env.valid()
            buf.append((obs, a, r, nxt, done, nmask))
            total += r
            obs = nxt
            steps += 1
            if len(buf) >= max(hyper.warmup, hyper.batch_size):
                pick = rng.choice(len(buf), size=hyper.batch_size, replace=False)
                rows = [buf[i] for i in pick]
                batch = {
                    "obs": np.stack([x[0] for x in rows]),
                    "actions": np.array([x[1] for x in rows]),
                    "rewards": np.array([x[2] for x in rows]),
                    "next_obs": np.stack([x[3] for x in rows]),
                    "done": np.array([x[4] for x in rows]),
                    "next_masks": np.stack([x[5] for x in rows]),
                }
                loss, g = td_loss(q, target, batch, hyper.gamma, hyper.huber_delta)
                if not np.isfinite(loss):
                    raise TrainingError(f"non-finite TD loss in episode {ep}")
                q.set_flat(opt.step(q.flat(), g))
                ep_loss.append(loss)
            if steps % hyper.target_interval == 0:
                target = q.copy()
        curve.append(total)
        losses.append({"td_loss": float(np.mean(ep_loss)) if ep_loss else 0.0, "epsilon": eps})
    return TrainResult(q, curve, None, losses)
