"""DQN training loop: masked epsilon-greedy exploration, uniform experience
replay, target-network bootstrapping, and per-episode logging.

One master seed derives separate streams for weight init, exploration, and
replay sampling, so two runs with the same seed produce bit-identical logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import (
    Action,
    EpisodeConfig,
    EpisodeRecord,
    SystemState,
    action_mask,
    encode_observation,
    reset,
    rollout,
    step,
    weighted_age_cost,
)
from .model import TerminalKind
from .network import Adam, DivergenceError, QNetwork


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the training run.

    Defaults reproduce the full-scale setup; small instances typically
    shrink ``episodes`` and ``hidden_sizes``.
    """

    episodes: int = 20000
    batch_size: int = 200
    eps_init: float = 0.9
    eps_decrement: float = 0.0001
    eps_min: float = 0.0
    target_sync_period: int = 300
    replay_capacity: int = 40000
    learning_rate: float = 0.002
    lr_decay_rate: float = 0.95
    lr_decay_every: int = 10000
    hidden_sizes: tuple[int, ...] = (200, 256)
    updates_per_step: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.episodes < 1 or self.batch_size < 1 or self.target_sync_period < 1:
            raise ValueError("episodes, batch_size and target_sync_period must be >= 1")
        if not 0.0 <= self.eps_init <= 1.0:
            raise ValueError(f"eps_init must be in [0, 1], got {self.eps_init}")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay_capacity must be >= batch_size")
        if self.updates_per_step < 1:
            raise ValueError("updates_per_step must be >= 1")


@dataclass(frozen=True)
class Experience:
    """One stored transition; ``next_mask`` records which actions were legal
    in the successor state so bootstrap maxima skip unreachable actions."""

    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool
    next_mask: np.ndarray


class ReplayBuffer:
    """Bounded FIFO of transitions with seeded uniform sampling.

    Backed by a ring list so sampling stays O(batch) at any fill level.
    """

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._storage: list[Experience] = []
        self._write = 0
        self.rng = rng

    def __len__(self) -> int:
        return len(self._storage)

    def push(self, exp: Experience) -> None:
        if len(self._storage) < self.capacity:
            self._storage.append(exp)
        else:
            self._storage[self._write] = exp  # overwrite oldest first
        self._write = (self._write + 1) % self.capacity

    def sample(self, batch_size: int) -> list[Experience]:
        if not self._storage:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, len(self._storage), size=batch_size)
        return [self._storage[i] for i in idx]


def epsilon_at(step_count: int, cfg: TrainConfig) -> float:
    """Linearly decayed exploration rate, floored at ``eps_min``."""
    if step_count < 0:
        raise ValueError(f"step_count must be >= 0, got {step_count}")
    return max(cfg.eps_min, cfg.eps_init - step_count * cfg.eps_decrement)


def select_action(q: np.ndarray, mask: np.ndarray, epsilon: float,
                  rng: np.random.Generator | None) -> int:
    """Masked epsilon-greedy pick; exploitation breaks ties by lowest index."""
    valid = np.flatnonzero(mask)
    if valid.size == 0:
        raise ValueError("action mask is empty")
    if epsilon > 0.0:
        if rng is None:
            raise ValueError("epsilon > 0 requires a generator")
        if rng.random() < epsilon:
            return int(valid[rng.integers(valid.size)])
    masked = np.where(mask, q, -np.inf)
    return int(np.argmax(masked))


def td_target(batch: list[Experience], target_net: QNetwork) -> np.ndarray:
    """Bootstrap targets: reward alone for terminal items, otherwise reward
    plus the target net's best legal next Q-value (no discounting)."""
    if not batch:
        raise ValueError("batch must be non-empty")
    y = np.array([e.reward for e in batch], dtype=np.float64)
    live = [i for i, e in enumerate(batch) if not e.done]
    if live:
        next_obs = np.stack([batch[i].next_obs for i in live])
        masks = np.stack([batch[i].next_mask for i in live])
        q_next = target_net.forward(next_obs)
        best = np.where(masks, q_next, -np.inf).max(axis=1)
        y[live] += best
    return y


def gradient_step(net: QNetwork, optimizer, batch: list[Experience],
                  targets: np.ndarray) -> float:
    """One optimizer update on the mean squared TD error; returns the
    pre-update loss."""
    x = np.stack([e.obs for e in batch])
    a_idx = np.array([e.action for e in batch], dtype=np.intp)
    loss, grads = net.loss_and_gradients(x, a_idx, targets)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss} at optimizer step {optimizer.t}")
    optimizer.step(net.parameters(), grads)
    return loss


def sync_target(net: QNetwork, target_net: QNetwork) -> QNetwork:
    """Copy the current parameters into the target network, in place."""
    target_net.copy_from(net)
    return target_net


@dataclass(frozen=True)
class EpisodeStats:
    episode: int
    steps: int
    total_return: float
    avg_age: float
    kind: TerminalKind
    epsilon: float
    learning_rate: float
    loss: float | None


@dataclass
class TrainLog:
    episodes: list[EpisodeStats] = field(default_factory=list)
    gradient_steps: int = 0
    env_steps: int = 0


def layer_sizes_for(env_config: EpisodeConfig, cfg: TrainConfig) -> list[int]:
    return [env_config.n_sensors + 4, *cfg.hidden_sizes, env_config.n_actions]


def train(env_config: EpisodeConfig, cfg: TrainConfig) -> tuple[QNetwork, TrainLog]:
    """Run the full training loop and return the trained network plus log.

    Per env step: pick a masked epsilon-greedy action, apply it, store the
    transition, and (once the buffer holds a full batch) take one gradient
    step toward the target-network bootstrap, syncing the target every
    ``target_sync_period`` gradient steps.
    """
    ss = np.random.SeedSequence(cfg.seed)
    init_ss, explore_ss, sample_ss = ss.spawn(3)
    net = QNetwork.initialize(layer_sizes_for(env_config, cfg), np.random.default_rng(init_ss))
    target = net.clone()
    buffer = ReplayBuffer(cfg.replay_capacity, np.random.default_rng(sample_ss))
    explore_rng = np.random.default_rng(explore_ss)
    optimizer = Adam(
        learning_rate=cfg.learning_rate,
        decay_rate=cfg.lr_decay_rate,
        decay_every=cfg.lr_decay_every,
    )

    log = TrainLog()
    global_step = 0
    for episode in range(cfg.episodes):
        state = reset(env_config)
        ep_return = 0.0
        ep_age = weighted_age_cost(state.ages, env_config)
        ep_steps = 0
        last_loss: float | None = None
        kind = TerminalKind.SUCCESS if env_config.horizon == 1 else TerminalKind.RUNNING
        while state.slot < env_config.horizon:
            obs = encode_observation(state, env_config)
            mask = action_mask(state, env_config)
            eps = epsilon_at(global_step, cfg)
            a_idx = select_action(net.forward(obs), mask, eps, explore_rng)
            outcome = step(state, env_config.index_action(a_idx), env_config)
            buffer.push(Experience(
                obs=obs,
                action=a_idx,
                reward=outcome.reward,
                next_obs=encode_observation(outcome.next, env_config),
                done=outcome.terminal,
                next_mask=action_mask(outcome.next, env_config),
            ))
            global_step += 1
            ep_steps += 1
            ep_return += outcome.reward
            ep_age += weighted_age_cost(outcome.next.ages, env_config)
            if len(buffer) >= cfg.batch_size:
                for _ in range(cfg.updates_per_step):
                    batch = buffer.sample(cfg.batch_size)
                    targets = td_target(batch, target)
                    last_loss = gradient_step(net, optimizer, batch, targets)
                    log.gradient_steps += 1
                    if log.gradient_steps % cfg.target_sync_period == 0:
                        sync_target(net, target)
            state = outcome.next
            if outcome.terminal:
                kind = outcome.kind
                break
        log.episodes.append(EpisodeStats(
            episode=episode,
            steps=ep_steps,
            total_return=ep_return,
            avg_age=ep_age,
            kind=kind,
            epsilon=epsilon_at(global_step, cfg),
            learning_rate=optimizer.current_lr,
            loss=last_loss,
        ))
        log.env_steps = global_step
    return net, log


def greedy_policy(net: QNetwork, config: EpisodeConfig):
    """State-to-action map that exploits the network under legality masking."""
    def policy(state: SystemState) -> Action:
        obs = encode_observation(state, config)
        idx = select_action(net.forward(obs), action_mask(state, config), 0.0, None)
        return config.index_action(idx)
    return policy


def greedy_rollout(net: QNetwork, config: EpisodeConfig) -> EpisodeRecord:
    """One full episode under the purely greedy policy."""
    return rollout(greedy_policy(net, config), config)
