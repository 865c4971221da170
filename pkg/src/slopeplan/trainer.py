"""DQN training: hybrid exploration schedule, replay buffer and the episode loop.

Each episode draws a random start/goal pair on one map. Actions come from
one of three sources, picked per step with annealed probabilities: uniform
random, the one-step greedy heuristic, or the network's argmax. Every
``training_interval`` episodes the network takes ``batches_per_training``
gradient steps on uniform replay samples.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import qnet
from .cost import CostModel
from .gridworld import ObservationRenderer, RewardParams, TransitionTable, elevation_channel
from .moves import N_ACTIONS
from .planners import greedy_heuristic_action
from .terrain import DemGrid

SOURCES = ("random", "heuristic", "dqn")
ENV_PREFIX = "SLOPEPLAN_"
LOG_COLUMNS = ("episode", "steps", "total_reward", "reached", "epsilon_total", "loss_mean")


class TrainingDiverged(qnet.DivergenceError):
    """Raised when a gradient step goes non-finite.

    ``params`` holds the last finite network and ``episode_log`` the rows
    completed so far.
    """

    def __init__(self, message, params, episode_log):
        super().__init__(message)
        self.params = params
        self.episode_log = episode_log


@dataclass(frozen=True)
class ExplorationSchedule:
    """Linear annealing of the (random, heuristic, dqn) source probabilities.

    At the last episode the exploration mass is ``final_exploration``, split
    between random and heuristic in their initial ratio.
    """

    initial: tuple[float, float, float] = (0.5, 0.1, 0.4)
    final_exploration: float = 0.01
    max_episodes: int = 6000

    def __post_init__(self):
        if len(self.initial) != 3 or any(p < 0 for p in self.initial):
            raise ValueError("initial probabilities must be three non-negative values")
        if abs(sum(self.initial) - 1.0) > 1e-9:
            raise ValueError("initial probabilities must sum to 1")
        if not 0.0 <= self.final_exploration <= 1.0:
            raise ValueError("final_exploration must lie in [0, 1]")

    @property
    def final(self) -> tuple[float, float, float]:
        r0, h0, _ = self.initial
        explore = r0 + h0
        if explore == 0:
            return self.initial
        fr = self.final_exploration * r0 / explore
        fh = self.final_exploration * h0 / explore
        return fr, fh, 1.0 - fr - fh

    def __call__(self, episode: int) -> tuple[float, float, float]:
        return anneal(self, episode)


def anneal(schedule: ExplorationSchedule, episode: int) -> tuple[float, float, float]:
    """Source probabilities at ``episode``; clamped past ``max_episodes``."""
    if schedule.max_episodes <= 0:
        frac = 1.0
    else:
        frac = min(max(episode / schedule.max_episodes, 0.0), 1.0)
    r0, h0, _ = schedule.initial
    r1, h1, _ = schedule.final
    pr = r0 + (r1 - r0) * frac
    ph = h0 + (h1 - h0) * frac
    return pr, ph, 1.0 - pr - ph


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    lr_decay: float = 1.0  # final/initial learning rate, annealed linearly over max_episodes
    discount: float = 0.99
    batch_size: int = 64
    batches_per_training: int = 20
    max_episodes: int = 6000
    max_steps: int = 150
    training_interval: int = 5
    replay_capacity: int = 100_000
    target_sync_every: int = 500  # training events
    seed: int = 0
    optimizer: str = "sgd"
    clip_norm: float = 10.0
    reward_scale: float = 1.0
    use_target_network: bool = True
    use_replay: bool = True
    checkpoint_every: int = 500
    final_exploration: float = 0.01
    p_random: float = 0.5
    p_heuristic: float = 0.1
    k: float = 5.0
    eta_us: float = 25.0
    eta_ds: float = 0.25
    conv_channels: tuple = (8, 16)
    conv_stride: int = 2
    fc_widths: tuple = (512, 256)

    def __post_init__(self):
        positive = ("learning_rate", "batch_size", "batches_per_training", "max_steps",
                    "training_interval", "replay_capacity", "target_sync_every",
                    "checkpoint_every", "reward_scale", "clip_norm", "k", "conv_stride")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.max_episodes < 0:
            raise ValueError("max_episodes must be >= 0")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch_size must not exceed replay_capacity")
        if self.p_random < 0 or self.p_heuristic < 0 or self.p_random + self.p_heuristic > 1:
            raise ValueError("p_random and p_heuristic must be >= 0 with sum <= 1")
        qnet.make_optimizer(self.optimizer, self.learning_rate)

    def learning_rate_at(self, episode: int) -> float:
        frac = min(max(episode / self.max_episodes, 0.0), 1.0) if self.max_episodes else 1.0
        return self.learning_rate * (1.0 - frac * (1.0 - self.lr_decay))

    def schedule(self) -> ExplorationSchedule:
        init = (self.p_random, self.p_heuristic, 1.0 - self.p_random - self.p_heuristic)
        return ExplorationSchedule(init, self.final_exploration, self.max_episodes)

    def reward_params(self) -> RewardParams:
        return RewardParams(k=self.k)

    def cost_model(self) -> CostModel:
        return CostModel(self.eta_us, self.eta_ds)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        d["fc_widths"] = list(self.fc_widths)
        return d


def _parse_value(kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is tuple:
        return tuple(int(v) for v in raw.replace(",", " ").split())
    return kind(raw)


def _field_types() -> dict:
    kinds = {}
    for f in dataclasses.fields(TrainConfig):
        kinds[f.name] = type(f.default)
    return kinds


def parse_overrides(pairs: dict) -> dict:
    """Convert ``{key: text}`` into typed TrainConfig keyword arguments."""
    kinds = _field_types()
    out = {}
    for key, raw in pairs.items():
        name = key.strip().lower().replace("-", "_")
        if name not in kinds:
            raise ValueError(f"unknown config key {key!r}")
        try:
            out[name] = _parse_value(kinds[name], raw)
        except ValueError as exc:
            raise ValueError(f"bad value for {name}: {exc}") from None
    return out


def read_config_file(path) -> dict:
    """``key = value`` lines; blank lines and ``#`` comments are ignored."""
    pairs = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            pairs[key.strip()] = value
    return parse_overrides(pairs)


def env_overrides(environ=None) -> dict:
    """Config keys from ``SLOPEPLAN_<KEY>`` environment variables."""
    environ = os.environ if environ is None else environ
    kinds = _field_types()
    pairs = {}
    for name in kinds:
        key = ENV_PREFIX + name.upper()
        if key in environ:
            pairs[name] = environ[key]
    return parse_overrides(pairs)


def load_config(path=None, overrides: dict | None = None, environ=None) -> TrainConfig:
    """Defaults, then the config file, then environment, then ``overrides``."""
    values = {}
    if path is not None:
        values.update(read_config_file(path))
    values.update(env_overrides(environ))
    values.update(overrides or {})
    return TrainConfig(**values)


class ReplayBuffer:
    """Bounded FIFO of transitions on one map, stored as cell coordinates.

    Observations are rendered on demand when a batch is sampled, which
    keeps 100k transitions at a few megabytes.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.agent = np.zeros((capacity, 2), dtype=np.int64)
        self.goal = np.zeros((capacity, 2), dtype=np.int64)
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity, dtype=np.float64)
        self.next_agent = np.zeros((capacity, 2), dtype=np.int64)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.head = 0
        self.pushed = 0

    def __len__(self) -> int:
        return self.size

    def push(self, agent, goal, action, reward, next_agent, terminal) -> None:
        i = self.head
        self.agent[i] = agent
        self.goal[i] = goal
        self.action[i] = action
        self.reward[i] = reward
        self.next_agent[i] = next_agent
        self.terminal[i] = terminal
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def order(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.head) % self.capacity

    def sample(self, rng: np.random.Generator, batch_size: int) -> np.ndarray:
        """Slot indices drawn uniformly with replacement."""
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch_size}")
        return rng.integers(self.size, size=batch_size)


def discounted_return(rewards, discount: float) -> float:
    total = 0.0
    for r in reversed(list(rewards)):
        total = r + discount * total
    return total


def select_action(state, params, schedule, rng: np.random.Generator, q_fn=None):
    """Pick ``(action, source)`` for ``state`` (an object with dem/agent/goal).

    ``schedule`` is a probability triple or an :class:`ExplorationSchedule`
    paired with ``state.episode``. ``q_fn(agent)`` may replace the full
    forward pass for the network source.
    """
    if isinstance(schedule, ExplorationSchedule):
        schedule = schedule(getattr(state, "episode", 0))
    p_random, p_heuristic, _ = schedule
    u = rng.random()
    if u < p_random:
        return int(rng.integers(N_ACTIONS)), "random"
    if u < p_random + p_heuristic:
        return greedy_heuristic_action(state.dem, state.agent, state.goal), "heuristic"
    if q_fn is None:
        q_values = q_values_for(params, state.dem, state.agent, state.goal)
    else:
        q_values = q_fn(state.agent)
    return int(np.argmax(q_values)), "dqn"


def q_values_for(params, dem: DemGrid, agent, goal) -> np.ndarray:
    return qnet.forward(params, ObservationRenderer(dem)(agent, goal))


@dataclass
class _Cursor:
    dem: DemGrid
    agent: tuple
    goal: tuple
    episode: int = 0


@dataclass
class TrainResult:
    params: qnet.QNetworkParams
    reward_curve: list = field(default_factory=list)
    episode_log: list = field(default_factory=list)
    grad_steps: int = 0


def random_task(rng: np.random.Generator, width: int, height: int):
    start = (int(rng.integers(width)), int(rng.integers(height)))
    while True:
        goal = (int(rng.integers(width)), int(rng.integers(height)))
        if goal != start:
            return start, goal


def write_episode_log(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in rows:
            w.writerow([row["episode"], row["steps"], repr(row["total_reward"]), int(row["reached"]),
                        repr(row["epsilon_total"]), repr(row["loss_mean"])])


def train(dem: DemGrid, config: TrainConfig = TrainConfig(), *, checkpoint_path=None,
          log_path=None, init_params: qnet.QNetworkParams | None = None,
          progress=None) -> TrainResult:
    """Train a Q-network on random start/goal pairs of ``dem``.

    Deterministic for a fixed ``config.seed``. When ``checkpoint_path`` is
    given, the network is saved every ``checkpoint_every`` episodes and at
    the end; ``log_path`` receives the episode CSV. A non-finite step
    raises :class:`TrainingDiverged` after checkpointing the last finite
    network.
    """
    rng = np.random.default_rng(config.seed)
    net_seed = int(rng.integers(2**31))
    arch = qnet.Architecture.for_grid(dem.width, dem.height, conv_channels=tuple(config.conv_channels),
                                      stride=config.conv_stride,
                                      fc_widths=tuple(config.fc_widths))
    params = init_params.copy() if init_params is not None else qnet.init_network(net_seed, arch)
    if params.arch != arch:
        raise ValueError("initial parameters do not match the map size")
    target = qnet.sync_target(params) if config.use_target_network else params
    optimizer = qnet.make_optimizer(config.optimizer, config.learning_rate, config.clip_norm)
    schedule = config.schedule()
    table = TransitionTable(dem, config.reward_params(), config.cost_model())
    render = ObservationRenderer(dem)
    elev = elevation_channel(dem)
    capacity = config.replay_capacity if config.use_replay else config.batch_size
    buffer = ReplayBuffer(capacity)
    result = TrainResult(params)
    events = 0
    meta = {"config": config.to_dict(), "map_sha256": dem.digest()}

    def save(episodes_done):
        if checkpoint_path is not None:
            qnet.save_checkpoint(params, checkpoint_path, dict(meta, episodes=episodes_done))
        if log_path is not None:
            write_episode_log(result.episode_log, log_path)

    for ep in range(config.max_episodes):
        probs = schedule(ep)
        start, goal = random_task(rng, dem.width, dem.height)
        cursor = _Cursor(dem, start, goal, ep)
        evaluator = []

        def q_fn(agent, goal=goal, evaluator=evaluator):
            # built on first use: the network is fixed within an episode
            if not evaluator:
                evaluator.append(qnet.GoalConditionedQ(params, elev, goal, dtype=np.float64))
            return evaluator[0](agent)

        total = 0.0
        reached = False
        steps = 0
        for steps in range(1, config.max_steps + 1):
            action, _ = select_action(cursor, params, probs, rng, q_fn)
            nxt, reward, reached = table.step(cursor.agent, action, goal)
            buffer.push(cursor.agent, goal, action, reward, nxt, reached)
            total += reward
            cursor.agent = nxt
            if reached:
                break
        losses = []
        if (ep + 1) % config.training_interval == 0 and len(buffer) >= config.batch_size:
            optimizer.learning_rate = config.learning_rate_at(ep)
            for _ in range(config.batches_per_training):
                idx = buffer.sample(rng, config.batch_size)
                obs = render.batch(buffer.agent[idx], buffer.goal[idx])
                next_obs = render.batch(buffer.next_agent[idx], buffer.goal[idx])
                rewards = buffer.reward[idx] * config.reward_scale
                y = qnet.td_targets(target, rewards, next_obs, buffer.terminal[idx], config.discount)
                try:
                    _, value = qnet.grad_step(params, (obs, buffer.action[idx]), y,
                                              optimizer=optimizer)
                except qnet.DivergenceError as exc:
                    save(ep)
                    raise TrainingDiverged(f"episode {ep}: {exc}", params, result.episode_log) from exc
                losses.append(value)
                result.grad_steps += 1
            events += 1
            if config.use_target_network and events % config.target_sync_every == 0:
                target = qnet.sync_target(params)
        row = {
            "episode": ep,
            "start": start,
            "goal": goal,
            "steps": steps,
            "total_reward": total,
            "reached": reached,
            "epsilon_total": probs[0] + probs[1],
            "loss_mean": float(np.mean(losses)) if losses else math.nan,
        }
        result.episode_log.append(row)
        result.reward_curve.append(total)
        if progress is not None:
            progress(row)
        if checkpoint_path is not None and (ep + 1) % config.checkpoint_every == 0:
            save(ep + 1)
    save(config.max_episodes)
    return result


def moving_average(values, window: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(values) < window:
        return np.zeros(0)
    c = np.concatenate([[0.0], np.cumsum(values)])
    return (c[window:] - c[:-window]) / window

