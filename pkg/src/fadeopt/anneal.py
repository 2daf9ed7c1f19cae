"""Offline receiver optimisation: simulated annealing and exhaustive grid search."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .episim import RngStream
from .receivers import ReceiverStrategy, default_splits
from .states import ChannelEnsemble, SignalSource

MAX_GRID_CONFIGS = 10**7


@dataclass(frozen=True)
class AnnealConfig:
    initial_temperature: float = 0.1
    cooling_rate: float = 0.98
    steps_per_temperature: int = 200
    proposal_stddev: float = 0.1
    temperature_floor: float = 1e-5
    restarts: int = 8
    optimize_splits: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.initial_temperature > 0:
            raise ValueError("initial_temperature must be > 0")
        if not 0 < self.cooling_rate < 1:
            raise ValueError("cooling_rate must lie in (0, 1)")
        if self.steps_per_temperature < 1:
            raise ValueError("steps_per_temperature must be >= 1")
        if not self.proposal_stddev > 0:
            raise ValueError("proposal_stddev must be > 0")
        if not self.temperature_floor > 0:
            raise ValueError("temperature_floor must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def temperatures(self) -> np.ndarray:
        """Geometric ladder from the initial temperature down to the floor."""
        if self.initial_temperature <= self.temperature_floor:
            return np.array([self.initial_temperature])
        n = int(math.floor(math.log(self.temperature_floor / self.initial_temperature)
                           / math.log(self.cooling_rate) + 1e-12)) + 1
        return self.initial_temperature * self.cooling_rate ** np.arange(n)


@dataclass(frozen=True)
class DisplacementGrid:
    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if not values:
            raise ValueError("displacement grid must be nonempty")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("displacement grid must be strictly increasing")

    @classmethod
    def linspace(cls, start: float = -1.0, stop: float = 1.0, points: int = 10) -> "DisplacementGrid":
        return cls(tuple(np.linspace(start, stop, points)))

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k):
        return self.values[k]


def _check_splits(layers: int, splits: Optional[Sequence[float]]) -> np.ndarray:
    splits = np.asarray(default_splits(layers) if splits is None else splits, dtype=float)
    if splits.shape != (layers,) or splits[-1] != 0.0 or ((splits < 0) | (splits > 1)).any():
        raise ValueError(f"invalid splits {splits.tolist()} for {layers} layers")
    return splits


def displacement_bound(a: float) -> float:
    """Half-width of the displacement search box.

    Scales with the amplitude but never drops below the detector's own unit
    scale: for weak signals the best displacements sit near 0.5-0.7 whatever a is.
    """
    return 3.0 * max(a, 1.0)


def anneal_displacements(source: SignalSource, channel: ChannelEnsemble, layers: int,
                         splits: Optional[Sequence[float]] = None,
                         config: AnnealConfig = AnnealConfig(),
                         log: Optional[list] = None) -> tuple[ReceiverStrategy, float]:
    """Maximise the ML success probability over the displacement tree.

    With ``config.optimize_splits`` the free splits ``theta_1 .. theta_{L-1}`` are
    annealed too and the values in ``splits`` are ignored.
    Each restart draws from its own stream ``(seed, restart)``. If ``log`` is a
    list, one row ``(restart, step, temperature, current, best)`` is appended per
    temperature level.
    """
    if layers < 1:
        raise ValueError("layers must be >= 1")
    fixed = _check_splits(layers, splits)
    n_disp = (1 << layers) - 1
    n_free = layers - 1 if config.optimize_splits else 0
    n_par = n_disp + n_free
    bound = displacement_bound(source.amplitude)
    temps = config.temperatures()
    n_steps = len(temps) * config.steps_per_temperature
    etas, pis = channel.transmissivities, channel.probabilities

    best: Optional[tuple[float, tuple, np.ndarray]] = None
    for restart in range(config.restarts):
        gen = RngStream(config.seed, ("anneal", restart)).generator
        x0 = np.concatenate([gen.uniform(-bound, bound, n_disp), gen.uniform(0.0, 1.0, n_free)])
        which = gen.integers(0, n_par, n_steps)
        noise = gen.normal(0.0, config.proposal_stddev, n_steps)
        coin = gen.random(n_steps)
        log_current = np.empty(len(temps))
        log_best = np.empty(len(temps))
        x, value = _kernels.anneal_chain(
            x0, n_disp, config.optimize_splits, fixed, bound, source.amplitude, etas, pis,
            source.prior0, temps, config.steps_per_temperature, which, noise, coin,
            log_current, log_best,
        )
        if log is not None:
            for t, temp in enumerate(temps):
                log.append((restart, (t + 1) * config.steps_per_temperature, float(temp),
                            float(log_current[t]), float(log_best[t])))
        key = (float(value), tuple(-x[:n_disp]))
        if best is None or key > best[:2]:
            best = (key[0], key[1], x)

    value, _, x = best
    used = fixed.copy()
    if config.optimize_splits:
        used[:-1] = x[n_disp:]
    return ReceiverStrategy.from_array(layers, used, x[:n_disp]), value


def write_anneal_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["restart", "step", "temperature", "current_value", "best_value"])
        for restart, step, temp, cur, best in rows:
            w.writerow([restart, step, f"{temp:.12g}", f"{cur:.12g}", f"{best:.12g}"])


def grid_values(source: SignalSource, channel: ChannelEnsemble, grid: DisplacementGrid, layers: int,
                splits: Optional[Sequence[float]] = None) -> np.ndarray:
    """ML success of every displacement tree over ``grid``.

    Entry ``k`` is the tree whose heap-ordered displacements are the ``k``-th
    tuple of ``itertools.product(grid, repeat=2**L - 1)``.
    """
    splits = _check_splits(layers, splits)
    n_nodes = (1 << layers) - 1
    count = len(grid) ** n_nodes
    if count > MAX_GRID_CONFIGS:
        raise ValueError(f"grid search over {count} configurations exceeds the limit of {MAX_GRID_CONFIGS}")
    return _kernels.grid_tree_values(
        np.asarray(grid.values), n_nodes, splits, source.amplitude,
        channel.transmissivities, channel.probabilities, source.prior0,
    )


def grid_config(grid: DisplacementGrid, layers: int, k: int) -> tuple[float, ...]:
    n_nodes = (1 << layers) - 1
    digits = []
    for _ in range(n_nodes):
        k, d = divmod(k, len(grid))
        digits.append(grid[d])
    return tuple(reversed(digits))


def grid_search(source: SignalSource, channel: ChannelEnsemble, grid: DisplacementGrid, layers: int,
                splits: Optional[Sequence[float]] = None) -> tuple[ReceiverStrategy, float]:
    """Best displacement tree over the grid; ties go to the lexicographically smallest tree."""
    splits = _check_splits(layers, splits)
    values = grid_values(source, channel, grid, layers, splits)
    # grid ascending + product order => first maximiser is lexicographically smallest
    k = int(np.argmax(values))
    return ReceiverStrategy.from_array(layers, splits, grid_config(grid, layers, k)), float(values[k])


def iter_grid_configs(grid: DisplacementGrid, layers: int):
    return itertools.product(grid.values, repeat=(1 << layers) - 1)

