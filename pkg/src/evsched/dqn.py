"""DQN agent: replay buffer, epsilon-greedy policy, training loop and greedy rollout."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator

from evsched import mlp
from evsched.env import EnvContext, Norms, budget_scale, initial_state, normalize, step
from evsched.oracle import ScheduleSolution, rollout_actions
from evsched.tariff import N_SLOTS
from evsched.validation import build_context, check_episodes, check_fitted

logger = logging.getLogger(__name__)

N_FEATURES = 6
N_ACTIONS = 2


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass(frozen=True)
class AgentConfig:
    epochs: int = 1000
    gamma: float = 0.99
    lr: float = 1e-3
    batch_size: int = 64
    replay_capacity: int = 50_000
    min_replay: int = 1_000
    target_sync_every: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.6
    hidden_sizes: tuple = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        if min(self.batch_size, self.replay_capacity, self.target_sync_every) <= 0 or self.min_replay < 0:
            raise ValueError("batch/replay/sync sizes must be positive")
        if not 0 < self.eps_decay_fraction <= 1:
            raise ValueError("eps_decay_fraction must lie in (0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions.

    Each row packs ``state | action | reward | next_state | done`` so a
    minibatch is a single gather.
    """

    def __init__(self, capacity: int, n_features: int = N_FEATURES):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.n_features = n_features
        self._rows = np.zeros((capacity, 2 * n_features + 3))
        self._next = 0
        self._size = 0
        self.pushed = 0

    def __len__(self):
        return self._size

    def push(self, state, action, reward, next_state, done) -> None:
        f = self.n_features
        row = self._rows[self._next]
        row[:f] = state
        row[f] = action
        row[f + 1] = reward
        row[f + 2:2 * f + 2] = next_state
        row[2 * f + 2] = done
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.pushed += 1

    def oldest_index(self) -> int:
        """Push sequence number (0-based) of the oldest stored transition."""
        return self.pushed - self._size

    def get(self, i: int) -> Transition:
        """The i-th stored transition, oldest first."""
        if not 0 <= i < self._size:
            raise IndexError(i)
        return self._unpack(self._rows[(self._next - self._size + i) % self.capacity])

    def _unpack(self, row) -> Transition:
        f = self.n_features
        return Transition(row[:f].copy(), int(row[f]), float(row[f + 1]), row[f + 2:2 * f + 2].copy(), bool(row[2 * f + 2]))

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform minibatch with replacement: ``(S, A, R, S_next, done)`` arrays."""
        f = self.n_features
        batch = self._rows[rng.integers(0, self._size, size=batch_size)]
        return (batch[:, :f], batch[:, f].astype(np.int64), batch[:, f + 1],
                batch[:, f + 2:2 * f + 2], batch[:, 2 * f + 2] > 0)


def select_action(net, state, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; exact Q ties resolve to idle (action 0)."""
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    q = mlp.forward(net, state)
    return int(q[1] > q[0])


def td_target(reward: float, next_state, done: bool, target_net, gamma: float) -> float:
    if done:
        return float(reward)
    return float(reward + gamma * np.max(mlp.forward(target_net, next_state)))


def epsilon_at(epoch: int, cfg: AgentConfig) -> float:
    """Linear decay over the first ``eps_decay_fraction`` of epochs, then flat."""
    horizon = cfg.eps_decay_fraction * cfg.epochs
    frac = min(1.0, epoch / horizon) if horizon > 0 else 1.0
    return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)


@dataclass
class TrainingStats:
    epoch: list
    epsilon: list
    mean_loss: list
    mean_greedy_return: list

    def rows(self):
        return zip(self.epoch, self.epsilon, self.mean_loss, self.mean_greedy_return)

    def __len__(self):
        return len(self.epoch)


def _greedy_returns(net, episodes, ctx, norms) -> np.ndarray:
    """Greedy rollouts of many episodes at once, one batched forward pass per slot."""
    states = [initial_state(ep, ctx) for ep in episodes]
    scales = [budget_scale(ep.p_day_ev) for ep in episodes]
    returns = np.zeros(len(episodes))
    feats = np.empty((len(episodes), N_FEATURES))
    for _ in range(N_SLOTS):
        for i, s in enumerate(states):
            feats[i] = (s.price / norms.max_price, s.pv_kw / norms.max_pv, s.non_ev_kw / norms.max_non_ev,
                        s.ev_run_kw / scales[i], s.soc, s.slot / (N_SLOTS - 1))
        q = mlp.forward(net, feats)
        acts = (q[:, 1] > q[:, 0]).astype(int)
        for i, ep in enumerate(episodes):
            states[i], r, _, _ = step(states[i], int(acts[i]), ep, ctx)
            returns[i] += r
    return returns


def train(corpus, ctx: EnvContext, cfg: AgentConfig = AgentConfig(), norms: Norms | None = None,
          buffer: ReplayBuffer | None = None):
    """Train a Q-network on day episodes. Returns ``(net, stats)``.

    Each epoch plays every training episode once in a seeded shuffled order.
    Once the buffer holds ``min_replay`` transitions, every environment step
    is followed by one minibatch update. The run is deterministic given
    ``cfg.seed``. Pass an empty ``buffer`` to inspect the stored
    transitions afterwards; its capacity overrides ``cfg.replay_capacity``.
    """
    corpus = check_episodes(corpus)
    norms = norms or Norms.from_episodes(corpus, ctx.tariff)
    rng = np.random.default_rng(cfg.seed)
    net = mlp.init([N_FEATURES, *cfg.hidden_sizes, N_ACTIONS], seed=cfg.seed)
    stats = TrainingStats([], [], [], [])
    if cfg.epochs == 0:
        return net, stats

    target = net.copy()
    opt = mlp.Adam()
    grad_buf = mlp.gradient_buffer(net)
    if buffer is None:
        buffer = ReplayBuffer(cfg.replay_capacity)
    grad_steps = 0

    for epoch in range(cfg.epochs):
        eps = epsilon_at(epoch, cfg)
        losses = []
        for ep_idx in rng.permutation(len(corpus)):
            episode = corpus[ep_idx]
            state = initial_state(episode, ctx)
            x = normalize(state, norms, episode.p_day_ev)
            done = False
            while not done:
                action = select_action(net, x, eps, rng)
                state, reward, done, _ = step(state, action, episode, ctx)
                x_next = normalize(state, norms, episode.p_day_ev)
                buffer.push(x, action, reward, x_next, done)
                x = x_next
                if len(buffer) >= max(cfg.min_replay, 1):
                    S, A, R, S2, D = buffer.sample(cfg.batch_size, rng)
                    q_next = mlp.forward(target, S2).max(axis=1)
                    y = R + cfg.gamma * q_next * ~D
                    grads, loss = mlp.batch_loss_grads(net, S, A, y, out=grad_buf)
                    mlp.apply_update(net, grads, opt, cfg.lr)
                    losses.append(loss)
                    grad_steps += 1
                    if grad_steps % cfg.target_sync_every == 0:
                        target = net.copy()
        greedy = _greedy_returns(net, corpus, ctx, norms)
        stats.epoch.append(epoch)
        stats.epsilon.append(eps)
        stats.mean_loss.append(float(np.mean(losses)) if losses else math.nan)
        stats.mean_greedy_return.append(float(greedy.mean()))
        if epoch % 100 == 0 or epoch == cfg.epochs - 1:
            logger.info("epoch %d eps=%.3f loss=%.4f greedy=%.3f", epoch, eps, stats.mean_loss[-1], greedy.mean())
    return net, stats


def greedy_rollout(net, episode, ctx: EnvContext, norms: Norms) -> ScheduleSolution:
    """Deterministic epsilon = 0 schedule for one day."""
    state = initial_state(episode, ctx)
    actions = []
    done = False
    while not done:
        q = mlp.forward(net, normalize(state, norms, episode.p_day_ev))
        a = int(q[1] > q[0])
        actions.append(a)
        state, _, done, _ = step(state, a, episode, ctx)
    return rollout_actions(actions, episode, ctx)


class DQNScheduler(BaseEstimator):
    """Deep Q-learning charging scheduler.

    ``fit`` takes training days, derives the household's flexibility and
    cost profiles (unless ``flex``/``costs`` are given) and trains the
    Q-network. ``predict`` returns a ``(n_days, 96)`` binary action matrix.

    Attributes
    ----------
    net_ : mlp.MLP
    context_ : EnvContext
    norms_ : Norms
    stats_ : TrainingStats
    """

    def __init__(
        self,
        epochs=1000,
        gamma=0.99,
        lr=1e-3,
        batch_size=64,
        replay_capacity=50_000,
        min_replay=1_000,
        target_sync_every=500,
        eps_start=1.0,
        eps_end=0.05,
        eps_decay_fraction=0.6,
        hidden_sizes=(64, 64),
        seed=0,
        battery=None,
        tariff=None,
        weights=None,
        active_kw=0.1,
        flex=None,
        costs=None,
    ):
        self.epochs = epochs
        self.gamma = gamma
        self.lr = lr
        self.batch_size = batch_size
        self.replay_capacity = replay_capacity
        self.min_replay = min_replay
        self.target_sync_every = target_sync_every
        self.eps_start = eps_start
        self.eps_end = eps_end
        self.eps_decay_fraction = eps_decay_fraction
        self.hidden_sizes = hidden_sizes
        self.seed = seed
        self.battery = battery
        self.tariff = tariff
        self.weights = weights
        self.active_kw = active_kw
        self.flex = flex
        self.costs = costs

    def agent_config(self) -> AgentConfig:
        names = AgentConfig.__dataclass_fields__
        kwargs = {k: v for k, v in self.get_params().items() if k in names}
        kwargs["hidden_sizes"] = tuple(kwargs["hidden_sizes"])
        return AgentConfig(**kwargs)

    def fit(self, episodes, y=None):
        episodes = check_episodes(episodes)
        cfg = self.agent_config()
        self.context_ = build_context(self, episodes)
        self.norms_ = Norms.from_episodes(episodes, self.context_.tariff)
        self.net_, self.stats_ = train(episodes, self.context_, cfg, self.norms_)
        return self

    def predict_schedule(self, episode) -> ScheduleSolution:
        check_fitted(self, "net_")
        return greedy_rollout(self.net_, episode, self.context_, self.norms_)

    def predict(self, episodes) -> np.ndarray:
        episodes = check_episodes(episodes)
        return np.array([self.predict_schedule(ep).actions for ep in episodes], dtype=np.int64)

    def score(self, episodes, y=None) -> float:
        """Mean greedy episode return."""
        episodes = check_episodes(episodes)
        return float(np.mean([self.predict_schedule(ep).total_reward for ep in episodes]))

    def q_values(self, episode) -> np.ndarray:
        """Q-values along the greedy trajectory, shape ``(96, 2)``."""
        check_fitted(self, "net_")
        state = initial_state(episode, self.context_)
        out = np.empty((N_SLOTS, N_ACTIONS))
        for t in range(N_SLOTS):
            out[t] = mlp.forward(self.net_, normalize(state, self.norms_, episode.p_day_ev))
            state, _, _, _ = step(state, int(out[t, 1] > out[t, 0]), episode, self.context_)
        return out
