"""Run configuration: schema, strict validation, and paper-table presets.

A run config is a JSON document with sections ``dataset``, ``reference``,
``method``, ``divergence``, ``objective``, ``transport``, ``net``, plus
``seed``, ``out_dir`` and ``snapshot_every``.  Unknown keys anywhere are
rejected, and every referenced name must exist in the catalogs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .data import DATASET_NAMES, analytic_target_for
from .divergences import ENERGY_NAMES
from .ratio_fit import VARIANTS

METHODS = ("ept", "mmd-flow", "svgd")


class ConfigError(ValueError):
    """The configuration document is malformed or inconsistent."""


@dataclass(frozen=True)
class DatasetSection:
    name: str
    n: int
    noise: float | None = None


@dataclass(frozen=True)
class ObjectiveSection:
    variant: str = "lsdr"
    alpha: float = 0.0
    fit_steps: int = 5
    batch_size: int = 1000
    learning_rate: float = 5e-4
    warm_start: bool = True


@dataclass(frozen=True)
class TransportSection:
    step_size: float = 0.005
    iterations: int | None = None
    outer_loops: int | None = None
    inner_loops: int | None = None
    latent_dim: int | None = None
    generator_epochs: int = 10
    generator_learning_rate: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSection
    transport: TransportSection
    objective: ObjectiveSection = field(default_factory=ObjectiveSection)
    method: str = "ept"
    divergence: str = "chi2"
    net_widths: tuple = (64, 64, 64)
    reference_n: int | None = None
    seed: int = 0
    snapshot_every: int = 100
    out_dir: str | None = None

    @property
    def n_particles(self) -> int:
        return self.reference_n if self.reference_n is not None else self.dataset.n

    @property
    def uses_latent(self) -> bool:
        return self.transport.outer_loops is not None


def _take(section: dict, where: str, keys: dict):
    """Pop known keys with defaults; reject anything left over."""
    out = {}
    section = dict(section)
    for key, default in keys.items():
        out[key] = section.pop(key, default)
    if section:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(section)}")
    return out


_REQUIRED = object()


def _require(values: dict, where: str):
    for key, val in values.items():
        if val is _REQUIRED:
            raise ConfigError(f"missing required key {key!r} in {where}")
    return values


def parse_config(doc: dict) -> RunConfig:
    """Validate a decoded JSON document into a :class:`RunConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    top = _take(
        doc,
        "config",
        {
            "dataset": _REQUIRED,
            "reference": {},
            "method": "ept",
            "divergence": "chi2",
            "objective": {},
            "transport": _REQUIRED,
            "net": {},
            "seed": 0,
            "snapshot_every": 100,
            "out_dir": None,
        },
    )
    _require({"dataset": top["dataset"], "transport": top["transport"]}, "config")

    ds = _require(
        _take(top["dataset"], "dataset", {"name": _REQUIRED, "n": _REQUIRED, "noise": None}),
        "dataset",
    )
    if ds["name"] not in DATASET_NAMES:
        raise ConfigError(f"unknown dataset {ds['name']!r}; known: {DATASET_NAMES}")
    if int(ds["n"]) < 1:
        raise ConfigError("dataset.n must be >= 1")
    dataset = DatasetSection(ds["name"], int(ds["n"]), None if ds["noise"] is None else float(ds["noise"]))

    ref = _take(top["reference"], "reference", {"n": None})
    reference_n = None if ref["n"] is None else int(ref["n"])
    if reference_n is not None and reference_n < 1:
        raise ConfigError("reference.n must be >= 1")

    method = top["method"]
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; known: {METHODS}")

    divergence = top["divergence"]
    if divergence not in ENERGY_NAMES:
        raise ConfigError(f"unknown divergence {divergence!r}; known: {ENERGY_NAMES}")

    ob = _take(
        top["objective"],
        "objective",
        {
            "variant": "lsdr",
            "alpha": 0.0,
            "T": 5,
            "batch": 1000,
            "lr": 5e-4,
            "warm_start": True,
        },
    )
    if ob["variant"] not in VARIANTS:
        raise ConfigError(f"unknown objective variant {ob['variant']!r}; known: {VARIANTS}")
    objective = ObjectiveSection(
        variant=ob["variant"],
        alpha=float(ob["alpha"]),
        fit_steps=int(ob["T"]),
        batch_size=int(ob["batch"]),
        learning_rate=float(ob["lr"]),
        warm_start=bool(ob["warm_start"]),
    )
    if objective.alpha < 0:
        raise ConfigError("objective.alpha must be >= 0")
    if objective.fit_steps < 1:
        raise ConfigError("objective.T must be >= 1")

    tr = _take(
        top["transport"],
        "transport",
        {
            "s": _REQUIRED,
            "K": None,
            "OL": None,
            "IL": None,
            "latent_dim": None,
            "gen_epochs": 10,
            "gen_lr": 1e-3,
        },
    )
    _require({"s": tr["s"]}, "transport")
    transport = TransportSection(
        step_size=float(tr["s"]),
        iterations=None if tr["K"] is None else int(tr["K"]),
        outer_loops=None if tr["OL"] is None else int(tr["OL"]),
        inner_loops=None if tr["IL"] is None else int(tr["IL"]),
        latent_dim=None if tr["latent_dim"] is None else int(tr["latent_dim"]),
        generator_epochs=int(tr["gen_epochs"]),
        generator_learning_rate=float(tr["gen_lr"]),
    )
    if transport.step_size <= 0:
        raise ConfigError("transport.s must be > 0")

    net = _take(top["net"], "net", {"widths": [64, 64, 64]})
    widths = tuple(int(w) for w in net["widths"])
    if not widths or any(w < 1 for w in widths):
        raise ConfigError("net.widths must be a non-empty list of positive widths")

    snapshot_every = int(top["snapshot_every"])
    if snapshot_every < 1:
        raise ConfigError("snapshot_every must be >= 1")

    config = RunConfig(
        dataset=dataset,
        transport=transport,
        objective=objective,
        method=method,
        divergence=divergence,
        net_widths=widths,
        reference_n=reference_n,
        seed=int(top["seed"]),
        snapshot_every=snapshot_every,
        out_dir=top["out_dir"],
    )
    _check_consistency(config)
    return config


def _check_consistency(config: RunConfig):
    tr = config.transport
    latent_keys = (tr.outer_loops, tr.inner_loops, tr.latent_dim)
    if any(k is not None for k in latent_keys):
        if any(k is None for k in latent_keys):
            raise ConfigError("latent transport needs all of OL, IL and latent_dim")
        if tr.iterations is not None:
            raise ConfigError("give either K or OL/IL, not both")
        if config.method != "ept":
            raise ConfigError("the latent pipeline only applies to method 'ept'")
        if tr.outer_loops < 1 or tr.inner_loops < 1:
            raise ConfigError("OL and IL must be >= 1")
        if tr.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
    elif tr.iterations is None:
        raise ConfigError("transport needs K (or OL/IL/latent_dim)")
    elif tr.iterations < 1:
        raise ConfigError("transport.K must be >= 1")

    if config.method == "ept":
        if (config.divergence == "l2") != (config.objective.variant == "density-diff"):
            raise ConfigError(
                "divergence 'l2' pairs exactly with objective variant 'density-diff'"
            )
    if config.method == "svgd" and analytic_target_for(config.dataset.name) is None:
        raise ConfigError(
            f"svgd needs an analytic target score; dataset {config.dataset.name!r} has none"
        )


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return parse_config(doc)


def config_to_dict(config: RunConfig) -> dict:
    """Round-trippable JSON form of a config (inverse of :func:`parse_config`)."""
    doc = {
        "dataset": {"name": config.dataset.name, "n": config.dataset.n},
        "method": config.method,
        "divergence": config.divergence,
        "objective": {
            "variant": config.objective.variant,
            "alpha": config.objective.alpha,
            "T": config.objective.fit_steps,
            "batch": config.objective.batch_size,
            "lr": config.objective.learning_rate,
            "warm_start": config.objective.warm_start,
        },
        "transport": {"s": config.transport.step_size},
        "net": {"widths": list(config.net_widths)},
        "seed": config.seed,
        "snapshot_every": config.snapshot_every,
    }
    if config.dataset.noise is not None:
        doc["dataset"]["noise"] = config.dataset.noise
    if config.reference_n is not None:
        doc["reference"] = {"n": config.reference_n}
    tr = config.transport
    if tr.iterations is not None:
        doc["transport"]["K"] = tr.iterations
    else:
        doc["transport"].update(
            {
                "OL": tr.outer_loops,
                "IL": tr.inner_loops,
                "latent_dim": tr.latent_dim,
                "gen_epochs": tr.generator_epochs,
                "gen_lr": tr.generator_learning_rate,
            }
        )
    if config.out_dir is not None:
        doc["out_dir"] = config.out_dir
    return doc


def presets() -> dict[str, dict]:
    """Ready-to-use configs mirroring the published hyper-parameter tables."""
    two_d = {
        "dataset": {"name": "8gaussians", "n": 50000},
        "method": "ept",
        "divergence": "chi2",
        "objective": {"variant": "lsdr", "alpha": 0.5, "T": 5, "batch": 1000, "lr": 0.0005},
        "transport": {"s": 0.005, "K": 20000},
        "net": {"widths": [64, 64, 64]},
        "seed": 0,
        "snapshot_every": 1000,
    }
    latent = {
        "dataset": {"name": "8gaussians", "n": 1000},
        "method": "ept",
        "divergence": "chi2",
        "objective": {"variant": "lsdr", "alpha": 0.0, "T": 1, "batch": 100, "lr": 0.0001},
        "transport": {"s": 0.5, "OL": 200, "IL": 20, "latent_dim": 128},
        "net": {"widths": [64, 64, 64]},
        "seed": 0,
        "snapshot_every": 100,
    }
    pool = {
        "dataset": {"name": "8gaussians", "n": 4000},
        "method": "ept",
        "divergence": "chi2",
        "objective": {"variant": "lsdr", "alpha": 0.0, "T": 5, "batch": 100, "lr": 0.0001},
        "transport": {"s": 0.5, "K": 2000},
        "net": {"widths": [64, 64, 64]},
        "seed": 0,
        "snapshot_every": 100,
    }
    return {"2d-pool": two_d, "latent-outer": latent, "pool-no-outer": pool}
