"""Run configuration: one YAML/JSON document per run, validated strictly.

Unknown keys are rejected so typos cannot silently fall back to defaults. The
fully resolved configuration (every default filled in) is echoed into the
output directory as ``resolved_config``; re-running from that file reproduces
the run byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass

import yaml

from .geometry import Annulus, Ball, Domain, Rectangle, Triangle
from .residuals import LinearOperator, LossConfig, PLaplaceOperator, Potential
from .scan import ScanConfig
from .training import TrainConfig

_DEFAULT_EXPORT_GRID_N = {1: 257, 2: 101, 3: 33, 4: 17}


@dataclass(frozen=True)
class RunConfig:
    domain: Domain
    operator: object
    loss: LossConfig
    train: TrainConfig
    scan: ScanConfig
    hidden: tuple = (32, 32)
    seed: int = 2024
    export_grid_n: int | None = None
    oracle_count: int = 6
    oracle_grid_n: int = 128

    @property
    def widths(self):
        return (self.domain.dim, self.hidden[0], self.hidden[1], 1)

    def export_lattice_n(self) -> int:
        if self.export_grid_n is not None:
            return self.export_grid_n
        return _DEFAULT_EXPORT_GRID_N.get(self.domain.dim, 17)


class ConfigError(ValueError):
    pass


def _require_keys(section: str, given: dict, allowed):
    for key in given:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in section '{section}' "
                              f"(allowed: {', '.join(sorted(allowed))})")


def _typed(section, key, value, kind):
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"key '{section}.{key}' must be of type {kind.__name__}, "
                          f"got {value!r}") from None


def _section(doc, name):
    sec = doc.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    return sec


def _build_domain(sec: dict) -> Domain:
    kind = sec.get("kind", "ball")
    try:
        if kind == "ball":
            _require_keys("domain", sec, {"kind", "dim", "radius"})
            return Ball(dim=_typed("domain", "dim", sec.get("dim", 2), int),
                        radius=_typed("domain", "radius", sec.get("radius", 1.0), float))
        if kind == "rectangle":
            _require_keys("domain", sec, {"kind", "intervals"})
            iv = sec.get("intervals", [[0.0, 1.0], [0.0, 1.0]])
            return Rectangle(tuple(tuple(float(x) for x in p) for p in iv))
        if kind == "annulus":
            _require_keys("domain", sec, {"kind", "r0", "r1"})
            return Annulus(r0=_typed("domain", "r0", sec.get("r0", 0.5), float),
                           r1=_typed("domain", "r1", sec.get("r1", 1.0), float))
        if kind == "triangle":
            _require_keys("domain", sec, {"kind", "vertices"})
            v = sec.get("vertices", [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
            return Triangle(tuple(tuple(float(x) for x in p) for p in v))
    except ConfigError:
        raise
    except (ValueError, TypeError) as err:
        raise ConfigError(f"invalid domain: {err}") from None
    raise ConfigError(f"domain.kind must be ball, rectangle, annulus or triangle, not {kind!r}")


def _build_operator(sec: dict):
    kind = sec.get("kind", "linear")
    try:
        if kind == "linear":
            _require_keys("operator", sec, {"kind", "potential"})
            pot = sec.get("potential", {}) or {}
            if not isinstance(pot, dict):
                raise ConfigError("operator.potential must be a mapping")
            _require_keys("operator.potential", pot, {"kind", "omega"})
            return LinearOperator(potential=Potential(
                kind=pot.get("kind", "zero"),
                omega=_typed("operator.potential", "omega", pot.get("omega", 1.0), float)))
        if kind == "plaplace":
            _require_keys("operator", sec, {"kind", "p", "grad_floor"})
            if "p" not in sec:
                raise ConfigError("operator.p is required for the p-Laplacian")
            p = _typed("operator", "p", sec["p"], float)
            if not p > 1:
                raise ConfigError("operator.p must exceed 1")
            return PLaplaceOperator(
                p=p, grad_floor=_typed("operator", "grad_floor", sec.get("grad_floor", 1e-8), float))
    except ConfigError:
        raise
    except (ValueError, TypeError) as err:
        raise ConfigError(f"invalid operator: {err}") from None
    raise ConfigError(f"operator.kind must be linear or plaplace, not {kind!r}")


def _build_section(name, sec, cls, fields):
    kwargs = {}
    _require_keys(name, sec, set(fields))
    for key, kind in fields.items():
        if key in sec:
            kwargs[key] = _typed(name, key, sec[key], kind)
    try:
        return cls(**kwargs)
    except ValueError as err:
        raise ConfigError(f"invalid section '{name}': {err}") from None


_LOSS_FIELDS = {"mu0": float, "n_train": int, "n_val": int, "resample_each_step": bool}
_TRAIN_FIELDS = {"learning_rate": float, "max_steps": int, "warm_max_steps": int,
                 "adam_beta1": float, "adam_beta2": float, "adam_eps": float,
                 "rel_improve_tol": float, "patience": int, "check_every": int,
                 "lr_decay": float, "lr_end_frac": float, "lr_hold_frac": float, "iterate_avg": float,
                 "refine_max_steps": int, "refine_lr": float, "refine_lr_end_frac": float,
                 "refine_lr_hold_frac": float}
_SCAN_FIELDS = {"e_lo": float, "e_hi": float, "grid_count": int, "threshold": float,
                "refine_depth": int, "refine_factor": int, "warm_start": bool, "sweep": str}


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    _require_keys("<top>", doc, {"domain", "operator", "loss", "train", "scan", "net",
                                 "seed", "export_grid_n", "oracle"})
    domain = _build_domain(_section(doc, "domain"))
    operator = _build_operator(_section(doc, "operator"))
    loss = _build_section("loss", _section(doc, "loss"), LossConfig, _LOSS_FIELDS)
    train = _build_section("train", _section(doc, "train"), TrainConfig, _TRAIN_FIELDS)
    scan = _build_section("scan", _section(doc, "scan"), ScanConfig, _SCAN_FIELDS)
    net = _section(doc, "net")
    _require_keys("net", net, {"hidden"})
    hidden = net.get("hidden", [32, 32])
    if (not isinstance(hidden, (list, tuple)) or len(hidden) != 2
            or any(int(h) != h or h < 1 for h in hidden)):
        raise ConfigError("net.hidden must be two positive integers (two hidden layers)")
    ora = _section(doc, "oracle")
    _require_keys("oracle", ora, {"count", "grid_n"})
    seed = doc.get("seed", 2024)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    export_grid_n = doc.get("export_grid_n")
    if export_grid_n is not None:
        export_grid_n = _typed("<top>", "export_grid_n", export_grid_n, int)
        if export_grid_n < 2:
            raise ConfigError("export_grid_n must be >= 2")
    return RunConfig(
        domain=domain, operator=operator, loss=loss, train=train, scan=scan,
        hidden=(int(hidden[0]), int(hidden[1])), seed=seed, export_grid_n=export_grid_n,
        oracle_count=_typed("oracle", "count", ora.get("count", 6), int),
        oracle_grid_n=_typed("oracle", "grid_n", ora.get("grid_n", 128), int),
    )


def parse_config(text: str) -> RunConfig:
    """Parse a YAML or JSON configuration document (JSON is a YAML subset)."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"configuration does not parse: {err}") from None
    if doc is None:
        doc = {}
    return config_from_dict(doc)


def resolved_dict(cfg: RunConfig) -> dict:
    """Fully resolved configuration with every default made explicit."""
    return {
        "domain": cfg.domain.describe(),
        "operator": cfg.operator.describe(),
        "loss": {
            "mu0": cfg.loss.mu0,
            "n_train": cfg.loss.n_train,
            "n_val": cfg.loss.n_val,
            "resample_each_step": cfg.loss.resample_each_step,
        },
        "train": {
            "learning_rate": cfg.train.learning_rate,
            "max_steps": cfg.train.max_steps,
            "warm_max_steps": cfg.train.warm_max_steps,
            "adam_beta1": cfg.train.adam_beta1,
            "adam_beta2": cfg.train.adam_beta2,
            "adam_eps": cfg.train.adam_eps,
            "rel_improve_tol": cfg.train.rel_improve_tol,
            "patience": cfg.train.patience,
            "check_every": cfg.train.check_every,
            "lr_decay": cfg.train.lr_decay,
            "lr_end_frac": cfg.train.lr_end_frac,
            "lr_hold_frac": cfg.train.lr_hold_frac,
            "iterate_avg": cfg.train.iterate_avg,
            "refine_max_steps": cfg.train.refine_max_steps,
            "refine_lr": cfg.train.refine_lr,
            "refine_lr_end_frac": cfg.train.refine_lr_end_frac,
            "refine_lr_hold_frac": cfg.train.refine_lr_hold_frac,
        },
        "scan": {
            "e_lo": cfg.scan.e_lo,
            "e_hi": cfg.scan.e_hi,
            "grid_count": cfg.scan.grid_count,
            "threshold": cfg.scan.threshold,
            "refine_depth": cfg.scan.refine_depth,
            "refine_factor": cfg.scan.refine_factor,
            "warm_start": cfg.scan.warm_start,
            "sweep": cfg.scan.sweep,
        },
        "net": {"hidden": list(cfg.hidden)},
        "seed": cfg.seed,
        "export_grid_n": cfg.export_grid_n,
        "oracle": {"count": cfg.oracle_count, "grid_n": cfg.oracle_grid_n},
    }
