"""Selection environment, DQN agent, oracle policy and heuristic baselines."""

from .agent import (
    AgentConfig,
    Demonstration,
    DQNAgent,
    ReplayBuffer,
    Transition,
    agreement,
    demonstrations_from_episodes,
    episode_transitions,
    epsilon_at,
    imitation_pretrain,
    load_agent,
    masked_argmax,
    save_agent,
    select_action,
    train_step,
    write_training_log,
)
from .env import (
    ActionSpace,
    EnvState,
    env_reset,
    env_step,
    normalize_input,
    state_vector,
)
from .network import AdamW, QNetwork, clip_by_global_norm
from .policies import (
    oracle_policy,
    oracle_scores,
    select_gradient,
    select_intensity,
    select_random,
    select_uniform,
    select_variance,
    top_b,
)

__all__ = [
    "ActionSpace", "AdamW", "AgentConfig", "DQNAgent", "Demonstration", "EnvState", "QNetwork",
    "ReplayBuffer", "Transition", "agreement", "clip_by_global_norm", "demonstrations_from_episodes",
    "env_reset", "env_step", "episode_transitions", "epsilon_at", "imitation_pretrain", "load_agent",
    "masked_argmax", "normalize_input", "oracle_policy", "oracle_scores", "save_agent", "select_action",
    "select_gradient", "select_intensity", "select_random", "select_uniform", "select_variance",
    "state_vector", "top_b", "train_step", "write_training_log",
]
