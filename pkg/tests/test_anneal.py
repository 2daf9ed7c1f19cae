import itertools

import numpy as np
import pytest

from fadeopt.anneal import (AnnealConfig, DisplacementGrid, anneal_displacements, displacement_bound,
                            grid_config, grid_search, grid_values, iter_grid_configs, write_anneal_log)
from fadeopt.receivers import ReceiverStrategy, kennedy_strategy, success_probability
from fadeopt.states import ChannelEnsemble, SignalSource, helstrom_bound

FIG1 = ChannelEnsemble.two_point(1.0, 0.01, 0.5)
PERFECT = ChannelEnsemble.single(1.0)
QUICK = AnnealConfig(steps_per_temperature=40, restarts=3, seed=5)


def fine_l1_optimum(source, channel, lo, hi, spacing=1e-3):
    betas = np.linspace(lo, hi, int(round((hi - lo) / spacing)) + 1)
    return max(success_probability(kennedy_strategy(b), source, channel) for b in betas)


def test_config_validation_and_ladder():
    with pytest.raises(ValueError):
        AnnealConfig(cooling_rate=1.0)
    with pytest.raises(ValueError):
        AnnealConfig(restarts=0)
    temps = AnnealConfig().temperatures()
    assert temps[0] == 0.1 and temps[-1] >= 1e-5 and temps[-1] * 0.98 < 1e-5
    assert len(temps) == 456


def test_grid_validation():
    with pytest.raises(ValueError):
        DisplacementGrid(())
    with pytest.raises(ValueError):
        DisplacementGrid((0.0, 0.0))
    g = DisplacementGrid.linspace()
    assert len(g) == 10 and g[0] == -1.0 and g[-1] == 1.0


def test_l1_anneal_matches_fine_grid():
    src = SignalSource(0.4)
    strategy, value = anneal_displacements(src, PERFECT, 1, (0.0,), AnnealConfig(seed=3))
    oracle = fine_l1_optimum(src, PERFECT, -0.8, 0.8)
    assert abs(value - oracle) < 1e-4
    assert value == pytest.approx(success_probability(strategy, src, PERFECT), abs=1e-14)


def test_flat_objective_at_zero_amplitude():
    _, value = anneal_displacements(SignalSource(0.0), FIG1, 2, None, QUICK)
    assert value == pytest.approx(0.5, abs=1e-15)


def test_l2_anneal_beats_grid_optimum():
    src = SignalSource(0.4)
    _, grid_best = grid_search(src, FIG1, DisplacementGrid.linspace(), 2)
    strategy, value = anneal_displacements(src, FIG1, 2, (0.5, 0.0), AnnealConfig(seed=1))
    assert value >= grid_best
    assert strategy.splits == (0.5, 0.0)
    assert value <= helstrom_bound(src, FIG1) + 1e-9


def test_layer_dominance_with_split_optimisation():
    for a in (0.3, 1.2):
        src = SignalSource(a)
        _, one = anneal_displacements(src, FIG1, 1, (0.0,), AnnealConfig(seed=2))
        s2, two = anneal_displacements(src, FIG1, 2, None, AnnealConfig(seed=2, optimize_splits=True))
        assert two >= one - 1e-6
        assert two == pytest.approx(success_probability(s2, src, FIG1), abs=1e-13)


def test_anneal_is_reproducible_and_logs():
    src = SignalSource(0.7)
    log_a, log_b = [], []
    ra = anneal_displacements(src, FIG1, 2, None, QUICK, log=log_a)
    rb = anneal_displacements(src, FIG1, 2, None, QUICK, log=log_b)
    assert ra == rb and log_a == log_b
    rc = anneal_displacements(src, FIG1, 2, None, AnnealConfig(steps_per_temperature=40, restarts=3, seed=6))
    assert rc[0] != ra[0]
    assert len(log_a) == 3 * len(QUICK.temperatures())
    best_by_restart = {}
    for restart, step, temp, cur, best in log_a:
        assert cur <= best + 1e-15
        assert best >= best_by_restart.get(restart, 0.0)
        best_by_restart[restart] = best
    assert max(best_by_restart.values()) == pytest.approx(ra[1], abs=1e-15)


def test_anneal_respects_displacement_box():
    src = SignalSource(1.5)
    s, _ = anneal_displacements(src, FIG1, 2, None, QUICK)
    bound = displacement_bound(1.5)
    assert bound == 4.5
    assert all(abs(v) <= bound for v in s.displacements.values())
    assert displacement_bound(0.1) == 3.0


def test_write_anneal_log(tmp_path):
    rows = []
    anneal_displacements(SignalSource(0.4), PERFECT, 1, (0.0,), AnnealConfig(steps_per_temperature=5, restarts=2), log=rows)
    path = tmp_path / "log.csv"
    write_anneal_log(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "restart,step,temperature,current_value,best_value"
    assert len(lines) == len(rows) + 1


def test_grid_values_follow_product_order():
    src, grid = SignalSource(0.6), DisplacementGrid((-0.7, -0.1, 0.4))
    values = grid_values(src, FIG1, grid, 2, (0.3, 0.0))
    configs = list(iter_grid_configs(grid, 2))
    assert len(values) == len(configs) == 27
    for k, disp in enumerate(configs):
        assert grid_config(grid, 2, k) == disp
        s = ReceiverStrategy.from_array(2, (0.3, 0.0), disp)
        assert values[k] == pytest.approx(success_probability(s, src, FIG1), abs=1e-14)


def test_grid_search_counts_and_optimum():
    src = SignalSource(0.4)
    grid = DisplacementGrid.linspace()
    values = grid_values(src, FIG1, grid, 2)
    assert len(values) == 1000
    strategy, best = grid_search(src, FIG1, grid, 2)
    brute = max(success_probability(ReceiverStrategy.from_array(2, (0.5, 0.0), d), src, FIG1)
                for d in itertools.product(grid.values, repeat=3))
    assert best == pytest.approx(brute, abs=1e-14)
    assert success_probability(strategy, src, FIG1) == pytest.approx(best, abs=1e-14)


def test_grid_search_singleton_and_membership():
    s, v = grid_search(SignalSource(0.4), FIG1, DisplacementGrid((0.0,)), 2)
    assert all(d == 0.0 for d in s.displacements.values())
    grid = DisplacementGrid((-0.8, -0.4, 0.0, 0.4))
    _, best = grid_search(SignalSource(0.4), PERFECT, grid, 1, (0.0,))
    assert best >= success_probability(kennedy_strategy(-0.4), SignalSource(0.4), PERFECT)


def test_grid_search_tie_break_is_lexicographic():
    # at a = 0 every tree has value 1/2
    s, v = grid_search(SignalSource(0.0), FIG1, DisplacementGrid((-0.5, 0.0, 0.5)), 2)
    assert v == 0.5
    assert s.displacement_array().tolist() == [-0.5, -0.5, -0.5]
    # symmetric optima at +-beta: the negative one comes first
    s, _ = grid_search(SignalSource(0.4), PERFECT, DisplacementGrid((-0.7, 0.0, 0.7)), 1, (0.0,))
    assert s.displacements[""] == -0.7


def test_grid_refinement_is_monotone():
    src = SignalSource(0.5)
    coarse = DisplacementGrid((-1.0, 0.0, 1.0))
    fine = DisplacementGrid((-1.0, -0.5, 0.0, 0.5, 1.0))
    assert grid_search(src, FIG1, fine, 2)[1] >= grid_search(src, FIG1, coarse, 2)[1]


def test_grid_search_guard():
    with pytest.raises(ValueError, match="exceeds"):
        grid_search(SignalSource(0.4), FIG1, DisplacementGrid.linspace(points=11), 3)
