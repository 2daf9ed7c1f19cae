"""Tabular Q-learning over receiver histories.

The agent never sees the amplitude, the channel or the outcome model. At each
layer it picks a displacement index from a fixed grid, observes the detector
bit, and after the last layer guesses the bit; only a correct guess is
rewarded. States are the full histories ``(a_0, o_1, a_1, o_2, ...)``, which
makes the partially observed problem a finite tree MDP.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .anneal import DisplacementGrid
from .episim import RngStream, sample_episode
from .receivers import ReceiverStrategy, success_probability
from .states import ChannelEnsemble, SignalSource

VISITS = "visits"
CHECKPOINT_VERSION = 1

History = tuple


@dataclass(frozen=True)
class QLearnConfig:
    episodes: int = 500_000
    gamma: float = 1.0
    # VISITS for N(s, a) ** -learning_rate_exponent, or a constant rate in (0, 1]
    learning_rate: Union[str, float] = VISITS
    # 1.0 gives the plain sample-average rate 1/N; must lie in (0.5, 1]
    learning_rate_exponent: float = 0.8
    epsilon0: float = 1.0
    # None means episodes / 5
    epsilon_tau: Optional[float] = None
    epsilon_min: float = 0.01
    grid: DisplacementGrid = field(default_factory=DisplacementGrid.linspace)
    q_init: float = 0.0
    record_every: int = 100

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.learning_rate != VISITS and not (isinstance(self.learning_rate, (int, float))
                                                 and 0.0 < self.learning_rate <= 1.0):
            raise ValueError(f"learning_rate must be {VISITS!r} or a number in (0, 1]")
        if not 0.5 < self.learning_rate_exponent <= 1.0:
            raise ValueError("learning_rate_exponent must lie in (0.5, 1]")
        if not (0.0 <= self.epsilon0 <= 1.0 and 0.0 <= self.epsilon_min <= 1.0):
            raise ValueError("epsilon0 and epsilon_min must lie in [0, 1]")
        if self.epsilon_tau is not None and not self.epsilon_tau > 0:
            raise ValueError("epsilon_tau must be > 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def tau(self) -> float:
        if self.epsilon_tau is not None:
            return float(self.epsilon_tau)
        return max(self.episodes / 5.0, 1.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid.values)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def history_string(h: History) -> str:
    """Encode ``(3, 1, 7, 0)`` as ``"a3|o1|a7|o0"``."""
    return "|".join(("a" if k % 2 == 0 else "o") + str(v) for k, v in enumerate(h))


def parse_history(s: str) -> History:
    if not s:
        return ()
    parts = s.split("|")
    for k, p in enumerate(parts):
        if p[0] != ("a" if k % 2 == 0 else "o"):
            raise ValueError(f"malformed history string {s!r}")
    return tuple(int(p[1:]) for p in parts)


class QTable:
    """Q-value estimates and visit counts keyed by (history, action).

    Layer stages offer ``n_grid`` displacement actions; the guess stage offers 2.
    Entries that were never updated read as ``init``.
    """

    def __init__(self, n_grid: int, layers: int, init: float = 0.0):
        self.n_grid = n_grid
        self.layers = layers
        self.init = float(init)
        self._values: dict[History, list[float]] = {}
        self._visits: dict[History, list[int]] = {}

    def n_actions(self, h: History) -> int:
        if len(h) % 2 or len(h) > 2 * self.layers:
            raise ValueError(f"not a decision state: {h!r}")
        return self.n_grid if len(h) < 2 * self.layers else 2

    def values(self, h: History) -> list[float]:
        v = self._values.get(h)
        return list(v) if v is not None else [self.init] * self.n_actions(h)

    def value(self, h: History, a: int) -> float:
        v = self._values.get(h)
        return v[a] if v is not None else self.init

    def visits(self, h: History, a: int) -> int:
        n = self._visits.get(h)
        return n[a] if n is not None else 0

    def max_value(self, h: History) -> float:
        v = self._values.get(h)
        return max(v) if v is not None else self.init

    def _slot(self, h: History) -> tuple[list[float], list[int]]:
        v = self._values.get(h)
        if v is None:
            n = self.n_actions(h)
            v = self._values[h] = [self.init] * n
            self._visits[h] = [0] * n
        return v, self._visits[h]

    def entries(self) -> Iterator[tuple[History, int, float, int]]:
        for h in sorted(self._values, key=lambda h: (len(h), h)):
            for a, (v, n) in enumerate(zip(self._values[h], self._visits[h])):
                yield h, a, v, n

    def to_checkpoint(self, config: QLearnConfig) -> dict:
        return {
            "format_version": CHECKPOINT_VERSION,
            "config_hash": config.digest(),
            "n_grid": self.n_grid,
            "layers": self.layers,
            "init": self.init,
            "entries": [[history_string(h), a, v, n] for h, a, v, n in self.entries()],
        }

    @classmethod
    def from_checkpoint(cls, d: dict) -> "QTable":
        if d.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('format_version')!r}")
        q = cls(d["n_grid"], d["layers"], d["init"])
        for hs, a, v, n in d["entries"]:
            vals, visits = q._slot(parse_history(hs))
            vals[a] = float(v)
            visits[a] = int(n)
        return q


def epsilon_value(config: QLearnConfig, t: int) -> float:
    return max(config.epsilon_min, config.epsilon0 * math.exp(-t / config.tau))


def argmax_first(values: Sequence[float]) -> int:
    return values.index(max(values)) if isinstance(values, list) else int(np.argmax(values))


def select_action(q: QTable, h: History, epsilon: float, rng: RngStream) -> int:
    """Epsilon-greedy choice; greedy ties go to the lowest index."""
    if rng.uniform() < epsilon:
        return rng.index(q.n_actions(h))
    return argmax_first(q.values(h))


def q_update(q: QTable, s: History, a: int, r: float, s_next: Optional[History], config: QLearnConfig) -> float:
    """One Q-learning step; ``s_next=None`` marks a terminal transition. Returns the new estimate."""
    values, visits = q._slot(s)
    visits[a] += 1
    if config.learning_rate == VISITS:
        lr = visits[a] ** -config.learning_rate_exponent
    else:
        lr = float(config.learning_rate)
    target = r if s_next is None else r + config.gamma * q.max_value(s_next)
    values[a] = (1.0 - lr) * values[a] + lr * target
    return values[a]


def greedy_strategy(q: QTable, config: QLearnConfig, splits: Sequence[float]) -> ReceiverStrategy:
    """Deterministic strategy obtained by following argmax Q along every outcome branch."""
    layers = len(splits)
    grid = config.grid.values
    displacements: dict[str, float] = {}
    guess: dict[str, int] = {}

    def walk(h: History, bits: str):
        if len(bits) == layers:
            guess[bits] = argmax_first(q.values(h))
            return
        a = argmax_first(q.values(h))
        displacements[bits] = grid[a]
        for o in (0, 1):
            walk(h + (a, o), bits + str(o))

    walk((), "")
    return ReceiverStrategy(layers, tuple(splits), displacements, guess)


def cumulative_return(rewards: Sequence[float]) -> list[float]:
    """Running mean ``R_t`` of the episode rewards."""
    if len(rewards) == 0:
        raise ValueError("rewards must be nonempty")
    return list(np.cumsum(rewards, dtype=float) / np.arange(1, len(rewards) + 1))


@dataclass
class LearningCurve:
    returns: np.ndarray
    p_episodes: np.ndarray
    p_values: np.ndarray

    @property
    def final_success(self) -> float:
        return float(self.p_values[-1]) if len(self.p_values) else float("nan")

    def rows(self) -> Iterator[tuple[int, float, Optional[float]]]:
        p = dict(zip(self.p_episodes.tolist(), self.p_values.tolist()))
        for t, r in enumerate(self.returns.tolist(), start=1):
            yield t, r, p.get(t)

    def write_csv(self, path, header: Optional[str] = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["episode", "R_t", "P_t"])
            for t, r, p in self.rows():
                w.writerow([t, f"{r:.12g}", "" if p is None else f"{p:.12g}"])


def train(source: SignalSource, channel: ChannelEnsemble, splits: Sequence[float],
          config: QLearnConfig, rng: RngStream) -> tuple[QTable, LearningCurve]:
    """Run ``config.episodes`` epsilon-greedy episodes, updating Q after each step.

    ``P_t`` is the exact success of the greedy strategy, recorded every
    ``record_every`` episodes and at the last episode.
    """
    layers = len(splits)
    q = QTable(len(config.grid), layers, config.q_init)
    env_rng = rng.spawn("env")
    policy_rng = rng.spawn("policy")
    grid = config.grid.values
    eps = config.epsilon0

    def policy(h: History) -> int:
        return select_action(q, h, eps, policy_rng)

    rewards = np.zeros(config.episodes)
    p_episodes, p_values = [], []
    for t in range(config.episodes):
        eps = epsilon_value(config, t)
        rec = sample_episode(source, channel, splits, policy, env_rng, action_values=grid)
        h: History = ()
        for a, o in zip(rec.actions, rec.outcomes):
            h_next = h + (a, o)
            q_update(q, h, a, 0.0, h_next, config)
            h = h_next
        q_update(q, h, rec.guess, float(rec.reward), None, config)
        rewards[t] = rec.reward
        done = t + 1
        if done % config.record_every == 0 or done == config.episodes:
            p_episodes.append(done)
            p_values.append(success_probability(greedy_strategy(q, config, splits), source, channel))

    returns = np.array(cumulative_return(rewards)) if config.episodes else np.zeros(0)
    return q, LearningCurve(returns, np.array(p_episodes, dtype=int), np.array(p_values))
