"""Episode simulator: one bit sent over the fading channel and read out layer by layer."""
from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .receivers import ML, ReceiverStrategy, ml_guesses, outcome_distribution
from .states import ChannelEnsemble, SignalSource

StreamKey = Union[int, str]
# history is the alternating tuple (a_0, o_1, a_1, o_2, ...)
Policy = Callable[[tuple], Union[int, float]]


def _key_int(k: StreamKey) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    if k < 0:
        raise ValueError("stream keys must be nonnegative")
    return int(k)


class RngStream:
    """Reproducible random stream identified by ``(seed, stream)``.

    Backed by PCG64 seeded through ``SeedSequence`` with the stream tuple as the
    spawn key, so distinct keys give statistically independent streams.
    """

    def __init__(self, seed: int, stream: Sequence[StreamKey] = ()):
        self.seed = int(seed) & (2**64 - 1)
        self.stream = tuple(stream)
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_key_int(k) for k in self.stream))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def spawn(self, *keys: StreamKey) -> "RngStream":
        return RngStream(self.seed, self.stream + keys)

    def uniform(self) -> float:
        return self.generator.random()

    def index(self, n: int) -> int:
        """Uniform integer in ``range(n)`` from a single uniform draw."""
        return min(int(self.generator.random() * n), n - 1)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


@dataclass
class EpisodeRecord:
    true_bit: int
    channel_index: int
    actions: list
    outcomes: list
    reward: int

    @property
    def guess(self) -> int:
        return self.actions[-1]

    @property
    def history(self) -> tuple:
        """Full alternating history up to the guess (guess excluded)."""
        h = []
        for a, o in zip(self.actions, self.outcomes):
            h += [a, o]
        return tuple(h)


class PolicyError(ValueError):
    pass


def sample_episode(source: SignalSource, channel: ChannelEnsemble, splits: Sequence[float],
                   policy: Policy, rng: RngStream,
                   action_values: Optional[Sequence[float]] = None) -> EpisodeRecord:
    """Run one episode.

    ``policy(history)`` returns the next action. At layer stages that is a
    displacement, or an index into ``action_values`` when given; after the last
    outcome it is the guess. The channel branch is drawn once and used for
    every layer.
    """
    gen = rng.generator
    x = 0 if gen.random() < source.prior0 else 1
    i = 0 if gen.random() < channel.branches[0][1] else 1
    amp = source.alpha(x) * math.sqrt(channel.branches[i][0])
    keep = 1.0
    history: list = []
    actions, outcomes = [], []
    for theta in splits:
        action = policy(tuple(history))
        if action_values is None:
            beta = float(action)
        else:
            if not isinstance(action, (int, np.integer)) or not 0 <= action < len(action_values):
                raise PolicyError(f"policy returned {action!r}, expected an index below {len(action_values)}")
            beta = action_values[action]
        if not math.isfinite(beta):
            raise PolicyError(f"policy returned non-finite displacement {beta!r}")
        d = amp * math.sqrt(keep * (1.0 - theta)) - beta
        keep *= theta
        outcome = 0 if gen.random() < math.exp(-d * d) else 1
        actions.append(action)
        outcomes.append(outcome)
        history += [action, outcome]
    guess = policy(tuple(history))
    if guess not in (0, 1):
        raise PolicyError(f"policy guess must be 0 or 1, got {guess!r}")
    actions.append(int(guess))
    return EpisodeRecord(x, i, actions, outcomes, int(guess == x))


def strategy_policy(strategy: ReceiverStrategy, source: SignalSource, channel: ChannelEnsemble) -> Policy:
    """Policy that plays a fixed receiver strategy (displacements as values)."""
    if strategy.guess == ML:
        guesses = ml_guesses(outcome_distribution(strategy, source, channel), source)
    else:
        guesses = dict(strategy.guess)
    n_layers = strategy.layers

    def policy(history: tuple):
        bits = "".join(str(o) for o in history[1::2])
        if len(bits) < n_layers:
            return strategy.displacements[bits]
        return guesses[bits]

    return policy


def monte_carlo_success(strategy: ReceiverStrategy, source: SignalSource, channel: ChannelEnsemble,
                        episodes: int, rng: RngStream, trace=None) -> tuple[float, float]:
    """Empirical success rate and its binomial standard error.

    ``trace`` may be an open text file; each episode is written to it as a JSON line.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    policy = strategy_policy(strategy, source, channel)
    wins = 0
    for _ in range(episodes):
        rec = sample_episode(source, channel, strategy.splits, policy, rng)
        wins += rec.reward
        if trace is not None:
            trace.write(json.dumps(asdict(rec)) + "\n")
    p = wins / episodes
    return p, math.sqrt(p * (1.0 - p) / episodes)
