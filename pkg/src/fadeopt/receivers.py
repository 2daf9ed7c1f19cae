"""Layered displacement receivers (Kennedy / Dolinar family) and homodyne detection.

A receiver splits the incoming pulse over ``L`` layers. Layer ``l`` keeps the
fraction ``theta_1 ... theta_{l-1} (1 - theta_l)`` of the energy, displaces it by
a ``beta`` that depends on the outcomes seen so far, and records click (1) or
no click (0) on a threshold detector. Outcome strings are written with the
first layer as the leftmost (most significant) bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from . import _kernels
from .states import ChannelEnsemble, SignalSource

ML = "ml"
GuessRule = Union[str, Mapping[str, int]]


def prefixes(length: int) -> list[str]:
    """All outcome bit strings of the given length, in binary order."""
    if length == 0:
        return [""]
    return [format(k, f"0{length}b") for k in range(1 << length)]


def tree_keys(layers: int) -> list[str]:
    """Displacement-tree keys in heap order: "", "0", "1", "00", ..."""
    return [p for l in range(layers) for p in prefixes(l)]


@dataclass(frozen=True)
class ReceiverStrategy:
    layers: int
    splits: tuple[float, ...]
    displacements: Mapping[str, float]
    guess: GuessRule = ML

    def __post_init__(self):
        object.__setattr__(self, "splits", tuple(float(s) for s in self.splits))
        object.__setattr__(self, "displacements", {k: float(v) for k, v in self.displacements.items()})
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if len(self.splits) != self.layers:
            raise ValueError(f"expected {self.layers} splits, got {len(self.splits)}")
        if any(not 0.0 <= s <= 1.0 for s in self.splits):
            raise ValueError(f"splits must lie in [0, 1], got {self.splits}")
        if self.splits[-1] != 0.0:
            raise ValueError("the last split must be 0 so the final layer takes the remaining energy")
        missing = set(tree_keys(self.layers)) - set(self.displacements)
        extra = set(self.displacements) - set(tree_keys(self.layers))
        if missing or extra:
            raise ValueError(f"displacement tree mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        if self.guess != ML:
            if not isinstance(self.guess, Mapping):
                raise ValueError(f"guess must be {ML!r} or a mapping, got {self.guess!r}")
            guess = {k: int(v) for k, v in self.guess.items()}
            if set(guess) != set(prefixes(self.layers)) or any(v not in (0, 1) for v in guess.values()):
                raise ValueError("explicit guess rule must map every outcome string to 0 or 1")
            object.__setattr__(self, "guess", guess)

    @classmethod
    def from_array(cls, layers: int, splits, disp, guess: GuessRule = ML) -> "ReceiverStrategy":
        return cls(layers, tuple(splits), dict(zip(tree_keys(layers), map(float, disp))), guess)

    def displacement_array(self) -> np.ndarray:
        return np.array([self.displacements[k] for k in tree_keys(self.layers)])

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "splits": list(self.splits),
            "displacements": {k: self.displacements[k] for k in tree_keys(self.layers)},
            "guess": self.guess if self.guess == ML else {k: self.guess[k] for k in prefixes(self.layers)},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ReceiverStrategy":
        return cls(int(d["layers"]), tuple(d["splits"]), d["displacements"], d.get("guess", ML))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ReceiverStrategy":
        return cls.from_dict(json.loads(text))


def default_splits(layers: int) -> tuple[float, ...]:
    """Equal energy per layer (``theta_1 = 0.5`` for two layers)."""
    return tuple(1.0 - 1.0 / (layers - l) for l in range(layers))


def kennedy_strategy(beta: float) -> ReceiverStrategy:
    return ReceiverStrategy(1, (0.0,), {"": beta})


def layer_amplitudes(strategy: ReceiverStrategy, a: float, eta: float) -> list[float]:
    frac = _kernels.layer_fractions(np.asarray(strategy.splits))
    return [math.sqrt(eta) * a * f for f in frac]


def detector_probability(alpha_eff: float, beta: float) -> tuple[float, float]:
    """No-click / click probabilities of a displaced threshold detector."""
    p0 = math.exp(-((alpha_eff - beta) ** 2))
    return p0, 1.0 - p0


@dataclass(frozen=True)
class OutcomeDistribution:
    """``probs[x, j]`` is the probability of outcome string index ``j`` under hypothesis ``x``."""

    layers: int
    probs: np.ndarray = field(repr=False)

    def prob(self, x: int, outcome: str) -> float:
        return float(self.probs[x, int(outcome, 2)])


def _layer_outcome_probs(strategy: ReceiverStrategy, source: SignalSource, channel: ChannelEnsemble) -> np.ndarray:
    """Probability of each layer's recorded bit, shape (2, branches, L, 2**L)."""
    n_layers = strategy.layers
    outcomes = np.arange(1 << n_layers)
    layer = np.arange(n_layers)[:, None]
    node = (1 << layer) - 1 + (outcomes >> (n_layers - layer))
    click = ((outcomes >> (n_layers - layer - 1)) & 1).astype(bool)
    beta = strategy.displacement_array()[node]  # (L, 2**L)

    frac = _kernels.layer_fractions(np.asarray(strategy.splits))
    sign = np.array([1.0, -1.0])
    amp = source.amplitude * sign[:, None, None] * np.sqrt(channel.transmissivities)[None, :, None] * frac
    p0 = np.exp(-((amp[..., None] - beta) ** 2))
    return np.where(click, 1.0 - p0, p0)


def outcome_distribution(strategy: ReceiverStrategy, source: SignalSource,
                         channel: ChannelEnsemble) -> OutcomeDistribution:
    # the channel draw is shared by all layers, so average the joint string probability
    joint = _layer_outcome_probs(strategy, source, channel).prod(axis=2)
    return OutcomeDistribution(strategy.layers, np.einsum("xij,i->xj", joint, channel.probabilities))


def marginal_product(strategy: ReceiverStrategy, source: SignalSource, channel: ChannelEnsemble) -> np.ndarray:
    """Product of per-layer channel-averaged probabilities.

    Not a valid outcome model for a fading channel; kept to show how it
    differs from the joint average.
    """
    per_layer = np.einsum("xilj,i->xlj", _layer_outcome_probs(strategy, source, channel), channel.probabilities)
    return per_layer.prod(axis=1)


def ml_guesses(dist: OutcomeDistribution, source: SignalSource) -> dict[str, int]:
    """Maximum-likelihood guess per outcome string; ties go to 0."""
    weighted = dist.probs * np.array(source.priors)[:, None]
    return {s: int(weighted[1, j] > weighted[0, j]) for j, s in enumerate(prefixes(dist.layers))}


def success_probability(strategy: ReceiverStrategy, source: SignalSource, channel: ChannelEnsemble) -> float:
    dist = outcome_distribution(strategy, source, channel)
    weighted = dist.probs * np.array(source.priors)[:, None]
    if strategy.guess == ML:
        return float(weighted.max(axis=0).sum())
    return float(sum(weighted[strategy.guess[s], j] for j, s in enumerate(prefixes(strategy.layers))))


def fast_ml_success(strategy: ReceiverStrategy, source: SignalSource, channel: ChannelEnsemble) -> float:
    """Compiled equivalent of :func:`success_probability` for ML guessing."""
    return float(_kernels.ml_success(
        strategy.displacement_array(), np.asarray(strategy.splits), source.amplitude,
        channel.transmissivities, channel.probabilities, source.prior0,
    ))


def homodyne_success(source: SignalSource, channel: ChannelEnsemble) -> float:
    """Success of homodyne detection with the sign-threshold decision, equal priors only."""
    if abs(source.prior0 - 0.5) > 1e-12:
        raise ValueError("homodyne formula assumes equal priors (zero decision threshold)")
    a = source.amplitude
    return 0.5 * (1.0 + sum(p * math.erf(math.sqrt(2.0 * eta) * a) for eta, p in channel.branches))
