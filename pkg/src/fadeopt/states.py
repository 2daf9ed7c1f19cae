"""Coherent-state geometry and the Helstrom bound for BPSK over a two-branch lossy channel.

Amplitudes are real throughout. Hypothesis ``x`` is sent as the coherent state
``|(-1)^x a>`` and the channel maps ``|alpha>`` to ``|sqrt(eta_i) alpha>`` with
probability ``pi_i``. The four possible received states are indexed
``m = x + 2 i``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PROB_TOL = 1e-12
# eigenvalues of G in [-CLAMP_TOL, 0) are treated as round-off
CLAMP_TOL = 1e-8


class InvalidGramMatrix(ValueError):
    """Raised when a matrix cannot be a Gram matrix (significantly negative eigenvalue)."""


class TruncationWarning(UserWarning):
    """Fock truncation dropped more norm than the tolerance allows."""


@dataclass(frozen=True)
class SignalSource:
    """BPSK source: amplitude ``a`` and the prior of hypothesis 0."""

    amplitude: float
    prior0: float = 0.5

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if not 0.0 <= self.prior0 <= 1.0:
            raise ValueError(f"prior0 must lie in [0, 1], got {self.prior0}")

    @property
    def prior1(self) -> float:
        return 1.0 - self.prior0

    @property
    def priors(self) -> tuple[float, float]:
        return (self.prior0, self.prior1)

    def alpha(self, x: int) -> float:
        """Signed amplitude ``(-1)^x a`` of hypothesis ``x``."""
        return self.amplitude if x == 0 else -self.amplitude


@dataclass(frozen=True)
class ChannelEnsemble:
    """Two-point transmissivity distribution ``((eta_0, pi_0), (eta_1, pi_1))``."""

    branches: tuple[tuple[float, float], ...]

    def __post_init__(self):
        branches = tuple((float(e), float(p)) for e, p in self.branches)
        object.__setattr__(self, "branches", branches)
        if len(branches) != 2:
            raise ValueError(f"exactly 2 channel branches are supported, got {len(branches)}")
        for k, (eta, p) in enumerate(branches):
            if not 0.0 <= eta <= 1.0:
                raise ValueError(f"transmissivity {k} must lie in [0, 1], got {eta}")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {k} must lie in [0, 1], got {p}")
        total = sum(p for _, p in branches)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"branch probabilities must sum to 1, got {total!r}")

    @classmethod
    def two_point(cls, eta0: float, eta1: float, pi0: float = 0.5) -> "ChannelEnsemble":
        return cls(((eta0, pi0), (eta1, 1.0 - pi0)))

    @classmethod
    def single(cls, eta: float = 1.0) -> "ChannelEnsemble":
        """A fixed-loss channel, written as two identical branches."""
        return cls(((eta, 0.5), (eta, 0.5)))

    @property
    def transmissivities(self) -> np.ndarray:
        return np.array([e for e, _ in self.branches])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.branches])


def coherent_overlap(alpha: float, beta: float) -> float:
    """Overlap ``<alpha|beta>`` of two real-amplitude coherent states."""
    return math.exp(-0.5 * (alpha - beta) ** 2)


def received_amplitudes(source: SignalSource, channel: ChannelEnsemble) -> np.ndarray:
    """Amplitudes of the states ``psi_{x+2i} = |sqrt(eta_i) alpha_x>``."""
    amps = np.empty(2 * len(channel.branches))
    for i, (eta, _) in enumerate(channel.branches):
        for x in (0, 1):
            amps[x + 2 * i] = math.sqrt(eta) * source.alpha(x)
    return amps


def state_weights(source: SignalSource, channel: ChannelEnsemble) -> np.ndarray:
    """Signed weights ``w_m`` such that ``q0 rho0 - q1 rho1 = sum_m w_m |psi_m><psi_m|``."""
    w = np.empty(2 * len(channel.branches))
    for i, (_, p) in enumerate(channel.branches):
        w[2 * i] = source.prior0 * p
        w[2 * i + 1] = -source.prior1 * p
    return w


def gram_matrix(source: SignalSource, channel: ChannelEnsemble) -> np.ndarray:
    amps = received_amplitudes(source, channel)
    return np.exp(-0.5 * np.subtract.outer(amps, amps) ** 2)


def embedding(g: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root ``B`` of a Gram matrix.

    The columns of ``B`` are vectors whose inner products reproduce ``g``.
    """
    g = np.asarray(g, dtype=float)
    evals, evecs = np.linalg.eigh(0.5 * (g + g.T))
    if evals.min() < -CLAMP_TOL:
        raise InvalidGramMatrix(f"Gram matrix has eigenvalue {evals.min():.3e} < -{CLAMP_TOL}")
    evals = np.clip(evals, 0.0, None)
    b = (evecs * np.sqrt(evals)) @ evecs.T
    return 0.5 * (b + b.T)


def trace_norm(m: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(m)).sum())


def helstrom_bound(source: SignalSource, channel: ChannelEnsemble) -> float:
    """Optimal average success probability ``(1 + ||q0 rho0 - q1 rho1||_1) / 2``.

    The operator lives in the span of the four received states, so it is
    represented exactly by 4x4 matrices built from the Gram square root.
    """
    b = embedding(gram_matrix(source, channel))
    w = state_weights(source, channel)
    delta = (b * w) @ b.T
    return 0.5 * (1.0 + trace_norm(0.5 * (delta + delta.T)))


def fock_vector(alpha: float, n_max: int) -> tuple[np.ndarray, float]:
    """Truncated Fock amplitudes of ``|alpha>``, renormalised.

    Returns the vector and the norm deficit ``1 - ||v||^2`` before renormalising.
    """
    v = np.empty(n_max + 1)
    c = math.exp(-0.5 * alpha * alpha)
    for n in range(n_max + 1):
        v[n] = c
        c *= alpha / math.sqrt(n + 1)
    norm2 = float(v @ v)
    return v / math.sqrt(norm2), 1.0 - norm2


def helstrom_fock_oracle(source: SignalSource, channel: ChannelEnsemble, n_max: int = 30) -> float:
    """Helstrom bound evaluated in a truncated Fock basis.

    Independent of the Gram-matrix route; used to validate it.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    amps = received_amplitudes(source, channel)
    w = state_weights(source, channel)
    delta = np.zeros((n_max + 1, n_max + 1))
    worst = 0.0
    for amp, weight in zip(amps, w):
        v, deficit = fock_vector(amp, n_max)
        worst = max(worst, deficit)
        delta += weight * np.outer(v, v)
    if worst > 1e-10:
        warnings.warn(
            f"Fock truncation at n_max={n_max} loses norm {worst:.3e}; increase n_max",
            TruncationWarning,
            stacklevel=2,
        )
    return 0.5 * (1.0 + trace_norm(delta))


def pure_helstrom(a: float, eta: float, q0: float) -> float:
    """Closed-form Helstrom bound for the pure pair ``|+-sqrt(eta) a>``."""
    return 0.5 * (1.0 + math.sqrt(max(0.0, 1.0 - 4.0 * q0 * (1.0 - q0) * math.exp(-4.0 * eta * a * a))))


def sweep_helstrom(amplitudes: Sequence[float], channel: ChannelEnsemble, prior0: float = 0.5) -> list[float]:
    return [helstrom_bound(SignalSource(a, prior0), channel) for a in amplitudes]
