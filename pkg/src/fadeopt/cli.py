"""Command-line experiment runner.

Subcommands: bounds, optimize, gridsearch, train, validate, mc. All of them read
an optional JSON config (``--config``) and write data files only. Exit codes:
0 success, 1 validation failure or bad config, 2 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .anneal import anneal_displacements, grid_search, grid_values, write_anneal_log
from .config import ConfigError, ExperimentConfig, config_to_dict, load_config
from .episim import RngStream, monte_carlo_success
from .qlearn import LearningCurve, greedy_strategy, train
from .receivers import (ReceiverStrategy, fast_ml_success, homodyne_success, kennedy_strategy,
                        success_probability)
from .states import SignalSource, TruncationWarning, helstrom_bound, helstrom_fock_oracle

log = logging.getLogger("fadeopt")

MASK64 = (1 << 64) - 1


def splitmix64(k: int) -> int:
    """SplitMix64 finaliser; agent ``k`` runs with seed ``seed ^ splitmix64(k)``."""
    z = (k + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def agent_seed(seed: int, k: int) -> int:
    return (seed ^ splitmix64(k)) & MASK64


def fmt(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.12g}"


def _header(command: str, deterministic: bool) -> Optional[str]:
    if deterministic:
        return None
    return f"# fadeopt {command} generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}"


def _write_csv(path: Path, columns, rows, header: Optional[str]) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, float) or v is None else v for v in row])


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


# -- bounds -----------------------------------------------------------------

BOUNDS_COLUMNS = ["amplitude", "helstrom", "homodyne", "ar1", "ar2"]


def bounds_row(cfg: ExperimentConfig, a: float) -> tuple:
    source = SignalSource(a, cfg.source.prior0)
    hel = helstrom_bound(source, cfg.channel)
    hom = homodyne_success(source, cfg.channel) if cfg.source.prior0 == 0.5 else None
    one = replace(cfg.anneal, optimize_splits=False)
    _, ar1 = anneal_displacements(source, cfg.channel, 1, (0.0,), one)
    _, ar2 = anneal_displacements(source, cfg.channel, 2, cfg.splits if cfg.layers == 2 else None, cfg.anneal)
    return (a, hel, hom, ar1, ar2)


def _bounds_task(args):
    return bounds_row(*args)


def cmd_bounds(cfg: ExperimentConfig, out: Optional[Path] = None, jobs: int = 1,
               deterministic: bool = False) -> list[tuple]:
    """Helstrom, homodyne and annealed L=1 / L=2 success over the amplitude sweep."""
    rows = _map(_bounds_task, [(cfg, a) for a in cfg.sweep], jobs)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        header = _header("bounds", deterministic)
        _write_csv(out / "bounds.csv", BOUNDS_COLUMNS, rows, header)
        gaps = [(a, None if hom is None else hom - hel, ar1 - hel, ar2 - hel) for a, hel, hom, ar1, ar2 in rows]
        _write_csv(out / "bounds_gap.csv", ["amplitude", "homodyne_gap", "ar1_gap", "ar2_gap"], gaps, header)
    return rows


# -- optimize / gridsearch --------------------------------------------------

def cmd_optimize(cfg: ExperimentConfig, out: Optional[Path] = None,
                 deterministic: bool = False) -> tuple[ReceiverStrategy, float]:
    trace: list = []
    strategy, value = anneal_displacements(cfg.source, cfg.channel, cfg.layers, cfg.splits, cfg.anneal, log=trace)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "optimize_strategy.json").write_text(strategy.to_json() + "\n")
        write_anneal_log(out / "anneal_log.csv", trace)
    return strategy, value


def cmd_gridsearch(cfg: ExperimentConfig, out: Optional[Path] = None) -> tuple[ReceiverStrategy, float, int]:
    values = grid_values(cfg.source, cfg.channel, cfg.grid, cfg.layers, cfg.splits)
    strategy, value = grid_search(cfg.source, cfg.channel, cfg.grid, cfg.layers, cfg.splits)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "gridsearch_strategy.json").write_text(strategy.to_json() + "\n")
    return strategy, value, len(values)


# -- train ------------------------------------------------------------------

def train_agent(cfg: ExperimentConfig, k: int, out: Optional[Path], deterministic: bool) -> LearningCurve:
    rng = RngStream(agent_seed(cfg.seed, k), ("agent", k))
    q, curve = train(cfg.source, cfg.channel, cfg.splits, cfg.rl, rng)
    if out is not None:
        stem = out / f"agent_{k:02d}"
        curve.write_csv(stem.with_name(stem.name + "_curve.csv"), _header("train", deterministic))
        strategy = greedy_strategy(q, cfg.rl, cfg.splits)
        stem.with_name(stem.name + "_strategy.json").write_text(strategy.to_json() + "\n")
        ckpt = json.dumps(q.to_checkpoint(cfg.rl))
        stem.with_name(stem.name + "_qtable.json").write_text(ckpt + "\n")
    log.info("agent %d done: final P_t %s", k, curve.final_success)
    return curve


def _train_task(args):
    return train_agent(*args)


def aggregate_rows(curves: list[LearningCurve]):
    returns = np.vstack([c.returns for c in curves]) if curves else np.zeros((0, 0))
    p_by_t = {}
    if curves and len(curves[0].p_episodes):
        pv = np.vstack([c.p_values for c in curves])
        p_by_t = {int(t): pv[:, j] for j, t in enumerate(curves[0].p_episodes)}
    for j in range(returns.shape[1]):
        r = returns[:, j]
        p = p_by_t.get(j + 1)
        yield (j + 1, float(r.mean()), float(r.min()), float(r.max()),
               None if p is None else float(p.mean()),
               None if p is None else float(p.min()),
               None if p is None else float(p.max()))


def cmd_train(cfg: ExperimentConfig, out: Optional[Path] = None, jobs: int = 1,
              deterministic: bool = False) -> list[LearningCurve]:
    """Train ``cfg.agents`` independent agents and write per-agent and aggregate curves."""
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    curves = _map(_train_task, [(cfg, k, out, deterministic) for k in range(cfg.agents)], jobs)
    if out is not None:
        _write_csv(out / "aggregate.csv",
                   ["episode", "R_mean", "R_min", "R_max", "P_mean", "P_min", "P_max"],
                   aggregate_rows(curves), _header("train", deterministic))
    return curves


# -- validate / mc ----------------------------------------------------------

def _fine_displacements(a: float, spacing: float = 1e-3) -> np.ndarray:
    if a == 0:
        return np.zeros(1)
    return np.linspace(-2 * a, 2 * a, int(round(4 * a / spacing)) + 1)


def cmd_validate(cfg: ExperimentConfig) -> tuple[bool, list[str]]:
    """Oracle-equivalence checks; returns overall pass flag and report lines."""
    lines: list[str] = []
    ok = True
    v = cfg.validate

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        dev = 0.0
        for a in v.amplitudes:
            src = SignalSource(a, cfg.source.prior0)
            dev = max(dev, abs(helstrom_bound(src, cfg.channel) - helstrom_fock_oracle(src, cfg.channel, v.n_max)))
    for w in {str(w.message) for w in caught if issubclass(w.category, TruncationWarning)}:
        lines.append(f"warning: {w}")
    passed = dev < 1e-8
    ok &= passed
    lines.append(f"{'PASS' if passed else 'FAIL'} helstrom gram vs fock (n_max={v.n_max}): max deviation {dev:.3e}")

    grid_best, _ = grid_search(cfg.source, cfg.channel, cfg.grid, cfg.layers, cfg.splits)
    checks = [("kennedy", kennedy_strategy(-cfg.source.amplitude)), ("grid optimum", grid_best)]
    worst = 0.0
    for name, strat in checks:
        exact = success_probability(strat, cfg.source, cfg.channel)
        est, err = monte_carlo_success(strat, cfg.source, cfg.channel, v.mc_episodes, RngStream(cfg.seed, ("validate", name)))
        z = abs(est - exact) / err if err > 0 else (0.0 if est == exact else math.inf)
        worst = max(worst, z)
    passed = worst <= 4.0
    ok &= passed
    lines.append(f"{'PASS' if passed else 'FAIL'} exact vs monte carlo ({v.mc_episodes} episodes): max |z| {worst:.2f}")

    one = replace(cfg.anneal, optimize_splits=False)
    _, annealed = anneal_displacements(cfg.source, cfg.channel, 1, (0.0,), one)
    fine = max(fast_ml_success(kennedy_strategy(b), cfg.source, cfg.channel)
               for b in _fine_displacements(cfg.source.amplitude))
    gap = fine - annealed
    passed = gap <= 1e-4
    ok &= passed
    lines.append(f"{'PASS' if passed else 'FAIL'} anneal L=1 vs fine grid: shortfall {gap:.3e}")
    return ok, lines


def cmd_mc(cfg: ExperimentConfig, strategy: Optional[ReceiverStrategy] = None,
           trace_path: Optional[Path] = None) -> tuple[float, float, float]:
    if strategy is None:
        strategy, _ = grid_search(cfg.source, cfg.channel, cfg.grid, cfg.layers, cfg.splits)
    rng = RngStream(cfg.seed, ("mc",))
    exact = success_probability(strategy, cfg.source, cfg.channel)
    if trace_path is None:
        est, err = monte_carlo_success(strategy, cfg.source, cfg.channel, cfg.mc_episodes, rng)
    else:
        with open(trace_path, "w") as fh:
            est, err = monte_carlo_success(strategy, cfg.source, cfg.channel, cfg.mc_episodes, rng, trace=fh)
    return est, err, exact


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    common.add_argument("--out", type=Path, help="output directory (default: config 'output')")
    common.add_argument("--deterministic", action="store_true", help="omit timestamp header lines")

    parser = argparse.ArgumentParser(prog="fadeopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("bounds", parents=[common], help="Helstrom / homodyne / annealed receivers vs amplitude")
    sub.add_parser("optimize", parents=[common], help="anneal the configured receiver")
    sub.add_parser("gridsearch", parents=[common], help="exhaustive search over the displacement grid")
    sub.add_parser("train", parents=[common], help="train the Q-learning agents")
    sub.add_parser("validate", parents=[common], help="run the oracle-equivalence checks")
    mc = sub.add_parser("mc", parents=[common], help="Monte Carlo estimate of a strategy's success")
    mc.add_argument("--strategy", type=Path, help="strategy JSON (default: grid-search optimum)")
    mc.add_argument("--trace", type=Path, help="write every episode as a JSON line")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FADEOPT_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed: must be a nonnegative integer")
            cfg = cfg.with_seed(args.seed)
        out = args.out if args.out is not None else Path(cfg.output)
        if args.command == "bounds":
            rows = cmd_bounds(cfg, out, args.jobs, args.deterministic)
            print(" ".join(f"{c:>10}" for c in BOUNDS_COLUMNS))
            for row in rows:
                print(" ".join(f"{'-' if v is None else format(v, '.6f'):>10}" for v in row))
        elif args.command == "optimize":
            strategy, value = cmd_optimize(cfg, out, args.deterministic)
            print(strategy.to_json())
            print(f"success probability {value:.12g}")
        elif args.command == "gridsearch":
            strategy, value, n = cmd_gridsearch(cfg, out)
            print(strategy.to_json())
            print(f"success probability {value:.12g} over {n} configurations")
        elif args.command == "train":
            curves = cmd_train(cfg, out, args.jobs, args.deterministic)
            finals = [c.final_success for c in curves]
            print(f"trained {len(curves)} agents; mean final P_t {np.mean(finals):.6f}")
            (out / "config.json").write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")
        elif args.command == "validate":
            ok, lines = cmd_validate(cfg)
            print("\n".join(lines))
            return 0 if ok else 1
        elif args.command == "mc":
            strategy = ReceiverStrategy.from_json(args.strategy.read_text()) if args.strategy else None
            est, err, exact = cmd_mc(cfg, strategy, args.trace)
            print(f"estimate {est:.6f} +- {err:.6f}; exact {exact:.6f}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
