from .env import (EnvConfig, SelectEnv, SelectState, SelectWorld, env_reset, env_step, greedy_episode,
                  per_vehicle_cost, random_policy_reward, rol_cost, time_cost, total_cost)
from .nets import MLP, Adam, load_mlp, save_mlp
from .ppo import (PPOHyper, TrainResult, Transition, gae_advantages, greedy_rollout, policy_group, ppo_train,
                  ppo_update, rewards_to_go)
from .dqn import DQNHyper, dqn_train, epsilon_at


def first_reach(curve, target: float, window: int = 20) -> int | None:
    """First episode index at which the trailing mean of ``curve`` reaches ``target``."""
    import numpy as np

    c = np.asarray(curve, dtype=float)
    for i in range(len(c)):
        lo = max(0, i - window + 1)
        if i + 1 >= min(window, len(c)) and c[lo : i + 1].mean() >= target:
            return i
    return None
