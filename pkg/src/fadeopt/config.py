"""JSON experiment configuration.

Every field has a default, so an empty document ``{}`` describes the standard
experiment: a = 0.4, channel {eta = 1, 0.01} with equal probability, two-layer
receiver, 10-point displacement grid on [-1, 1] and 24 agents trained for
5e5 episodes each.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional

from .anneal import AnnealConfig, DisplacementGrid
from .qlearn import QLearnConfig
from .receivers import default_splits
from .states import ChannelEnsemble, SignalSource


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


DEFAULT_SWEEP = tuple(round(0.1 * k, 10) for k in range(1, 16))


@dataclass(frozen=True)
class ValidateConfig:
    n_max: int = 30
    amplitudes: tuple[float, ...] = (0.1, 0.4, 0.8, 1.2, 1.5)
    mc_episodes: int = 20_000


@dataclass(frozen=True)
class ExperimentConfig:
    source: SignalSource = SignalSource(0.4, 0.5)
    channel: ChannelEnsemble = ChannelEnsemble.two_point(1.0, 0.01, 0.5)
    layers: int = 2
    splits: tuple[float, ...] = default_splits(2)
    anneal: AnnealConfig = AnnealConfig(optimize_splits=True, seed=1234)
    grid: DisplacementGrid = field(default_factory=DisplacementGrid.linspace)
    rl: QLearnConfig = field(default_factory=QLearnConfig)
    sweep: tuple[float, ...] = DEFAULT_SWEEP
    agents: int = 24
    seed: int = 1234
    output: str = "results"
    validate: ValidateConfig = ValidateConfig()
    mc_episodes: int = 100_000

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed, anneal=replace(self.anneal, seed=seed))


def _line_of(text: str, key: str) -> Optional[int]:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(text: str, path: str, msg: str):
    line = _line_of(text, path.split(".")[-1]) if text else None
    where = f" (line {line})" if line else ""
    raise ConfigError(f"{path}{where}: {msg}")


def _section(raw: dict, name: str, text: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        _fail(text, name, "expected an object")
    return sec


def _check_keys(sec: dict, allowed, prefix: str, text: str):
    for k in sec:
        if k not in allowed:
            _fail(text, f"{prefix}.{k}" if prefix else k, "unknown field")


def _build(cls, kwargs: dict, prefix: str, text: str):
    names = {f.name for f in fields(cls)}
    _check_keys(kwargs, names, prefix, text)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        # attribute the error to the first field the message mentions
        msg = str(e)
        culprit = next((k for k in sorted(kwargs, key=len, reverse=True) if k in msg), None)
        _fail(text, f"{prefix}.{culprit}" if culprit else prefix, msg)


def parse_config(raw: dict, text: str = "") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    top = {"source", "channel", "receiver", "optimizer", "grid", "rl", "sweep", "agents",
           "seed", "output", "validate", "mc"}
    _check_keys(raw, top, "", text)
    kw: dict[str, Any] = {}

    src = _section(raw, "source", text)
    _check_keys(src, {"amplitude", "prior0"}, "source", text)
    kw["source"] = _build(SignalSource, {"amplitude": 0.4, "prior0": 0.5, **src}, "source", text)

    ch = _section(raw, "channel", text)
    _check_keys(ch, {"transmissivities", "probabilities"}, "channel", text)
    etas = ch.get("transmissivities", [1.0, 0.01])
    probs = ch.get("probabilities", [0.5, 0.5])
    for name, v in (("transmissivities", etas), ("probabilities", probs)):
        if not isinstance(v, list) or len(v) != 2 or not all(isinstance(x, (int, float)) for x in v):
            _fail(text, f"channel.{name}", "expected a list of two numbers")
    if abs(sum(probs) - 1.0) > 1e-12:
        _fail(text, "channel.probabilities", f"must sum to 1, got {sum(probs)!r}")
    try:
        kw["channel"] = ChannelEnsemble(tuple(zip(etas, probs)))
    except ValueError as e:
        _fail(text, "channel.transmissivities", str(e))

    rc = _section(raw, "receiver", text)
    _check_keys(rc, {"layers", "splits"}, "receiver", text)
    layers = rc.get("layers", 2)
    if not isinstance(layers, int) or layers < 1:
        _fail(text, "receiver.layers", "must be an integer >= 1")
    splits = rc.get("splits") or default_splits(layers)
    if len(splits) != layers or splits[-1] != 0 or any(not 0 <= s <= 1 for s in splits):
        _fail(text, "receiver.splits", f"need {layers} values in [0, 1] ending with 0")
    kw["layers"], kw["splits"] = layers, tuple(float(s) for s in splits)

    seed = raw.get("seed", 1234)
    if not isinstance(seed, int) or seed < 0:
        _fail(text, "seed", "must be a nonnegative integer")
    kw["seed"] = seed

    opt = dict(_section(raw, "optimizer", text))
    opt.setdefault("optimize_splits", True)
    opt.setdefault("seed", seed)
    kw["anneal"] = _build(AnnealConfig, opt, "optimizer", text)

    gr = _section(raw, "grid", text)
    _check_keys(gr, {"start", "stop", "points", "values"}, "grid", text)
    try:
        if "values" in gr:
            kw["grid"] = DisplacementGrid(tuple(gr["values"]))
        else:
            kw["grid"] = DisplacementGrid.linspace(gr.get("start", -1.0), gr.get("stop", 1.0), gr.get("points", 10))
    except (TypeError, ValueError) as e:
        _fail(text, "grid", str(e))

    rl = dict(_section(raw, "rl", text))
    if "grid" in rl:
        _fail(text, "rl.grid", "set the displacement grid in the top-level 'grid' section")
    rl["grid"] = kw["grid"]
    kw["rl"] = _build(QLearnConfig, rl, "rl", text)

    sweep = raw.get("sweep", list(DEFAULT_SWEEP))
    if not isinstance(sweep, list) or not sweep or any(not isinstance(a, (int, float)) or a < 0 for a in sweep):
        _fail(text, "sweep", "expected a nonempty list of amplitudes >= 0")
    kw["sweep"] = tuple(float(a) for a in sweep)

    agents = raw.get("agents", 24)
    if not isinstance(agents, int) or agents < 1:
        _fail(text, "agents", "must be an integer >= 1")
    kw["agents"] = agents

    out = raw.get("output", "results")
    if not isinstance(out, str):
        _fail(text, "output", "must be a path string")
    kw["output"] = out

    val = dict(_section(raw, "validate", text))
    if "amplitudes" in val:
        val["amplitudes"] = tuple(val["amplitudes"])
    kw["validate"] = _build(ValidateConfig, val, "validate", text)
    if kw["validate"].n_max < 1:
        _fail(text, "validate.n_max", "must be >= 1")

    mc = _section(raw, "mc", text)
    _check_keys(mc, {"episodes"}, "mc", text)
    episodes = mc.get("episodes", 100_000)
    if not isinstance(episodes, int) or episodes < 1:
        _fail(text, "mc.episodes", "must be an integer >= 1")
    kw["mc_episodes"] = episodes
    return ExperimentConfig(**kw)


def loads_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON (line {e.lineno}, column {e.colno}): {e.msg}") from None
    return parse_config(raw, text)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return loads_config(fh.read())


def config_to_dict(cfg: ExperimentConfig) -> dict:
    rl = cfg.rl.to_dict()
    rl.pop("grid")
    return {
        "source": {"amplitude": cfg.source.amplitude, "prior0": cfg.source.prior0},
        "channel": {"transmissivities": cfg.channel.transmissivities.tolist(),
                    "probabilities": cfg.channel.probabilities.tolist()},
        "receiver": {"layers": cfg.layers, "splits": list(cfg.splits)},
        "optimizer": {f.name: getattr(cfg.anneal, f.name) for f in fields(cfg.anneal)},
        "grid": {"values": list(cfg.grid.values)},
        "rl": rl,
        "sweep": list(cfg.sweep),
        "agents": cfg.agents,
        "seed": cfg.seed,
        "output": cfg.output,
        "validate": {"n_max": cfg.validate.n_max, "amplitudes": list(cfg.validate.amplitudes),
                     "mc_episodes": cfg.validate.mc_episodes},
        "mc": {"episodes": cfg.mc_episodes},
    }

