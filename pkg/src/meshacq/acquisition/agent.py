"""DQN agent: replay buffer, epsilon-greedy selection, TD or Monte Carlo updates, imitation pretraining."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .env import EnvState, state_vector
from .network import AdamW, QNetwork, clip_by_global_norm


@dataclass(frozen=True)
class AgentConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    gamma: float = 0.99
    batch_size: int = 64
    buffer_capacity: int = 10_000
    eps_start: float = 1.0
    eps_floor: float = 0.1
    eps_decay: float = 0.995
    target_sync: int = 100
    grad_clip: float = 1.0
    hidden: int = 256
    target_mode: str = "td"  # or "mc"
    imitation_lr: float = 1e-3
    imitation_epochs: int = 50
    imitation_temperature: float = 0.05  # logits = Q / T; tanh caps |Q| at 1

    def __post_init__(self):
        for name in ("lr", "gamma", "batch_size", "buffer_capacity", "eps_start", "eps_decay",
                     "target_sync", "grad_clip", "hidden", "imitation_lr", "imitation_temperature"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0 or self.imitation_epochs < 0:
            raise ValueError("weight_decay and imitation_epochs must be nonnegative")
        if not 0 < self.eps_floor < self.eps_start:
            raise ValueError("epsilon floor must lie strictly between 0 and the start value")
        if self.target_mode not in ("td", "mc"):
            raise ValueError(f"unknown target mode {self.target_mode!r}")


def epsilon_at(step: int, cfg: AgentConfig = AgentConfig()) -> float:
    if step < 0:
        raise ValueError("step must be nonnegative")
    return max(cfg.eps_floor, cfg.eps_start * cfg.eps_decay**step)


@dataclass(frozen=True)
class Transition:
    state: EnvState
    action: int
    reward: float
    done: bool
    mc_return: float = 0.0

    def __post_init__(self):
        if self.state.mask[self.action]:
            raise ValueError("transition action already selected in its state")


class ReplayBuffer:
    """FIFO ring of transitions.

    The next state is implied by the state plus the action, so only the
    pre-step mask is stored.
    """

    def __init__(self, capacity: int, n_actions: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.n = n_actions
        self.mask = np.zeros((capacity, n_actions), dtype=bool)
        self.encoded = np.zeros((capacity, n_actions))
        self.k = np.zeros(capacity, dtype=np.int64)
        self.budget = np.zeros(capacity, dtype=np.int64)
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.mc_return = np.zeros(capacity)
        self.size = 0
        self.head = 0  # next write slot

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        i = self.head
        self.mask[i] = t.state.mask
        self.encoded[i] = t.state.encoded
        self.k[i] = t.state.k
        self.budget[i] = t.state.budget
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.done[i] = t.done
        self.mc_return[i] = t.mc_return
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def order(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        start = self.head if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def actions(self) -> list[int]:
        return self.action[self.order()].tolist()

    def batch(self, slots: np.ndarray):
        m = self.mask[slots]
        kb = (self.k[slots] / self.budget[slots])[:, None]
        states = np.concatenate([m.astype(np.float64), self.encoded[slots], kb], axis=1)
        nmask = m.copy()
        nmask[np.arange(slots.size), self.action[slots]] = True
        nkb = ((self.k[slots] + 1) / self.budget[slots])[:, None]
        nstates = np.concatenate([nmask.astype(np.float64), self.encoded[slots], nkb], axis=1)
        return states, self.action[slots], self.reward[slots], nstates, nmask, self.done[slots], self.mc_return[slots]

    def arrays(self) -> dict[str, np.ndarray]:
        o = self.order()
        return {"mask": self.mask[o], "encoded": self.encoded[o], "k": self.k[o], "budget": self.budget[o],
                "action": self.action[o], "reward": self.reward[o], "done": self.done[o],
                "mc_return": self.mc_return[o]}

    @classmethod
    def from_arrays(cls, capacity: int, a: dict[str, np.ndarray]) -> ReplayBuffer:
        size = a["action"].size
        buf = cls(capacity, a["mask"].shape[1] if a["mask"].ndim == 2 else 0)
        if size > capacity:
            raise ValueError("stored replay exceeds capacity")
        for name in ("mask", "encoded", "k", "budget", "action", "reward", "done", "mc_return"):
            getattr(buf, name)[:size] = a[name]
        buf.size = size
        buf.head = size % capacity
        return buf


class DQNAgent:
    def __init__(self, n_actions: int, cfg: AgentConfig = AgentConfig(), seed: int = 0):
        self.cfg = cfg
        self.n_actions = n_actions
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
        self.online = QNetwork(2 * n_actions + 1, n_actions, cfg.hidden, rng)
        self.target = QNetwork(2 * n_actions + 1, n_actions, cfg.hidden, rng)
        self.target.copy_from(self.online)
        self.optimizer = AdamW(self.online.flat.size, cfg.lr, cfg.weight_decay)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, n_actions)
        self.steps = 0  # environment steps taken, drives epsilon
        self.updates = 0
        self.log: list[tuple[int, float, float, int]] = []

    @property
    def epsilon(self) -> float:
        return epsilon_at(self.steps, self.cfg)

    def q_values(self, state: EnvState) -> np.ndarray:
        return self.online(state.vector())[0]

    def sync_target(self) -> None:
        self.target.copy_from(self.online)


def masked_argmax(q: np.ndarray, mask: np.ndarray) -> int:
    """Argmax over unselected cells; ties go to the lowest index."""
    return int(np.argmax(np.where(mask, -np.inf, q)))


def select_action(agent: DQNAgent, state: EnvState, eps: float, rng: np.random.Generator) -> int:
    free = np.flatnonzero(~state.mask)
    if free.size == 0:
        raise ValueError("no unselected cell left")
    if rng.random() < eps:
        return int(free[rng.integers(free.size)])
    return masked_argmax(agent.q_values(state), state.mask)


def td_targets(agent: DQNAgent, rewards, nstates, nmask, done, mc_return) -> np.ndarray:
    if agent.cfg.target_mode == "mc":
        return mc_return.copy()
    qn = agent.target.forward(nstates)
    qn = np.where(nmask, -np.inf, qn).max(axis=1)
    qn = np.where(done | ~np.isfinite(qn), 0.0, qn)
    return rewards + agent.cfg.gamma * qn


def td_loss_and_grads(net: QNetwork, states, actions, targets):
    q, cache = net.forward(states, keep=True)
    rows = np.arange(actions.size)
    diff = q[rows, actions] - targets
    loss = float(np.mean(diff**2))
    gq = np.zeros_like(q)
    gq[rows, actions] = 2.0 * diff / actions.size
    return loss, net.backward(cache, gq)


def train_step(agent: DQNAgent, rng: np.random.Generator) -> float | None:
    """One minibatch update; returns None while the buffer holds fewer than a batch."""
    cfg = agent.cfg
    if len(agent.buffer) < cfg.batch_size:
        return None
    slots = agent.buffer.order()[rng.choice(len(agent.buffer), cfg.batch_size, replace=False)]
    states, actions, rewards, nstates, nmask, done, mc = agent.buffer.batch(slots)
    y = td_targets(agent, rewards, nstates, nmask, done, mc)
    loss, grads = td_loss_and_grads(agent.online, states, actions, y)
    clip_by_global_norm(grads, cfg.grad_clip)
    agent.optimizer.step(agent.online.flat, grads)
    agent.updates += 1
    if agent.updates % cfg.target_sync == 0:
        agent.sync_target()
    agent.log.append((agent.updates, loss, agent.epsilon, len(agent.buffer)))
    return loss


def episode_transitions(states: list[EnvState], actions: list[int], terminal_reward: float,
                        gamma: float) -> list[Transition]:
    """B transitions: zero reward except the last; MC returns discount the terminal reward back."""
    b = len(actions)
    out = []
    for k, (s, a) in enumerate(zip(states, actions)):
        last = k == b - 1
        out.append(Transition(s, a, terminal_reward if last else 0.0, last,
                              terminal_reward * gamma ** (b - 1 - k)))
    return out


@dataclass
class Demonstration:
    states: np.ndarray  # (m, 2n+1)
    masks: np.ndarray  # (m, n) bool
    actions: np.ndarray  # (m,)

    def __len__(self) -> int:
        return self.actions.size


def demonstrations_from_episodes(episodes) -> Demonstration:
    """``episodes`` yields (encoded input, ordered action list, budget)."""
    states, masks, actions = [], [], []
    for encoded, acts, budget in episodes:
        mask = np.zeros(encoded.size, dtype=bool)
        for k, a in enumerate(acts):
            states.append(state_vector(mask, encoded, k, budget))
            masks.append(mask.copy())
            actions.append(int(a))
            mask[a] = True
    if not actions:
        raise ValueError("no demonstration states")
    return Demonstration(np.array(states), np.array(masks), np.array(actions, dtype=np.int64))


def imitation_loss_and_grads(net: QNetwork, states, masks, actions, temperature: float = 1.0):
    """Masked softmax cross-entropy with Q / temperature as logits."""
    q, cache = net.forward(states, keep=True)
    logits = np.where(masks, -np.inf, q / temperature)
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    rows = np.arange(actions.size)
    loss = float(-np.mean(np.log(p[rows, actions] + 1e-300)))
    g = p.copy()
    g[rows, actions] -= 1.0
    return loss, net.backward(cache, g / (actions.size * temperature))


def imitation_pretrain(agent: DQNAgent, demos: Demonstration, rng: np.random.Generator,
                       epochs: int | None = None) -> list[float]:
    """Supervised pretraining on oracle actions; returns the mean loss per epoch."""
    if len(demos) == 0:
        raise ValueError("demonstrations are empty")
    cfg = agent.cfg
    epochs = cfg.imitation_epochs if epochs is None else epochs
    opt = AdamW(agent.online.flat.size, cfg.imitation_lr, cfg.weight_decay)
    history = []
    for _ in range(epochs):
        perm = rng.permutation(len(demos))
        losses = []
        for s in range(0, perm.size, cfg.batch_size):
            b = perm[s:s + cfg.batch_size]
            loss, grads = imitation_loss_and_grads(agent.online, demos.states[b], demos.masks[b], demos.actions[b],
                                                   cfg.imitation_temperature)
            clip_by_global_norm(grads, cfg.grad_clip)
            opt.step(agent.online.flat, grads)
            losses.append(loss)
        history.append(float(np.mean(losses)))
    agent.sync_target()
    return history


def agreement(agent: DQNAgent, demos: Demonstration) -> float:
    """Fraction of demonstration states where the greedy action matches the oracle."""
    q = agent.online.forward(demos.states)
    pick = np.argmax(np.where(demos.masks, -np.inf, q), axis=1)
    return float(np.mean(pick == demos.actions))


def save_agent(path, agent: DQNAgent) -> None:
    from ..container import PayloadKind, write_arrays

    arrays = {"online": agent.online.flat, "target": agent.target.flat,
              "adam_m": agent.optimizer.m, "adam_v": agent.optimizer.v}
    for k, v in agent.buffer.arrays().items():
        arrays[f"replay.{k}"] = v
    meta = {"config": asdict(agent.cfg), "n_actions": agent.n_actions, "steps": agent.steps,
            "updates": agent.updates, "adam_t": agent.optimizer.t}
    write_arrays(path, PayloadKind.AGENT, arrays, meta)


def load_agent(path) -> DQNAgent:
    from ..container import PayloadKind, read_arrays

    _, a, meta = read_arrays(path, PayloadKind.AGENT)
    agent = DQNAgent(meta["n_actions"], AgentConfig(**meta["config"]))
    agent.online.flat[...] = a["online"]
    agent.target.flat[...] = a["target"]
    agent.optimizer.m[...] = a["adam_m"]
    agent.optimizer.v[...] = a["adam_v"]
    agent.optimizer.t = meta["adam_t"]
    agent.steps = meta["steps"]
    agent.updates = meta["updates"]
    replay = {k.split(".", 1)[1]: v for k, v in a.items() if k.startswith("replay.")}
    replay["done"] = replay["done"].astype(bool)
    replay["mask"] = replay["mask"].astype(bool).reshape(-1, agent.n_actions)
    replay["encoded"] = replay["encoded"].reshape(-1, agent.n_actions)
    agent.buffer = ReplayBuffer.from_arrays(agent.cfg.buffer_capacity, replay)
    return agent


def write_training_log(path: Path, agent: DQNAgent) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("update", "loss", "epsilon", "buffer_size"))
        for u, loss, eps, size in agent.log:
            w.writerow((u, repr(loss), repr(eps), size))
