"""INI run configuration for the command line.

Sections: ``[data]``, ``[model]``, ``[ns]``, ``[backtest]``, ``[girf]``,
``[output]`` and ``[simulate]``.  Every value is resolved against its default
and the resolved mapping is written to each manifest.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import DataError, NsCurveConfig, TimeSeriesMatrix, load_csv
from .errors import ConfigError
from .forecast import BacktestConfig
from .girf import GirfSpec
from .sampler import ModelConfig, config_hash

# conventional lag orders: two for yield curves, one for macro panels
DEFAULT_LAGS = {"yields": 2, "macro": 1}
# settings that change scheduling only, never results
EXECUTION_ONLY = ("threads",)

_SECTIONS = {"data", "model", "ns", "backtest", "girf", "output", "simulate"}
_KEYS = {
    "data": {"path", "frequency", "ordering", "difference", "kind"},
    "model": {"mode", "lags", "n_trees", "sweeps", "burn_in", "thin", "seed", "alpha", "beta", "s_tilde",
              "min_leaf_size", "max_depth", "sv", "leaf_scale_is_stddev", "threads"},
    "ns": {"maturities", "gamma"},
    "backtest": {"train_end", "holdout", "horizons", "reestimate_every", "baseline_draws"},
    "girf": {"draws", "shock", "size", "horizon", "restricted", "restriction_units", "history_end",
             "future_shocks", "seed"},
    "output": {"directory"},
}


@dataclass(frozen=True)
class GirfRunConfig:
    draws: str | None
    shock: str
    size: str = "sd"
    horizon: int = 24
    restricted: tuple[str, ...] = ()
    restriction_units: str | None = None
    history_end: int | None = None
    future_shocks: str = "none"
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    data_path: str | None
    frequency: str
    kind: str
    difference: bool
    mode: str
    model: ModelConfig
    ns: NsCurveConfig | None
    backtest: BacktestConfig | None
    train_end: int | None
    girf: GirfRunConfig | None
    output_dir: str
    simulate: dict | None = None
    base_dir: str = "."
    resolved: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(hashable(self.resolved))

    def resolve_path(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    @property
    def output(self) -> Path:
        return self.resolve_path(self.output_dir)

    def load_data(self) -> TimeSeriesMatrix:
        if self.data_path is None:
            raise ConfigError("data.path", "no data path configured")
        Y = load_csv(self.resolve_path(self.data_path), self.frequency)
        if self.ns is not None and Y.M != len(self.ns.maturities):
            raise ConfigError("ns.maturities", f"{len(self.ns.maturities)} maturities for {Y.M} yield columns")
        if self.difference:
            Y = Y.difference()
        return Y


def hashable(resolved: dict) -> dict:
    out = {s: dict(v) for s, v in resolved.items()}
    for key in EXECUTION_ONLY:
        out.get("model", {}).pop(key, None)
    return out


class _Reader:
    def __init__(self, parser: configparser.ConfigParser):
        self.p = parser
        self.resolved: dict = {}

    def get(self, section, key, conv, default, required=False):
        name = f"{section}.{key}"
        if self.p.has_option(section, key):
            raw = self.p.get(section, key).strip()
            try:
                value = conv(raw)
            except (ValueError, json.JSONDecodeError) as exc:
                raise ConfigError(name, f"cannot parse {raw!r}: {exc}") from None
        elif required:
            raise ConfigError(name, f"missing required setting {name}")
        else:
            value = default
        self.resolved.setdefault(section, {})[key] = list(value) if isinstance(value, tuple) else value
        return value


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _list(conv):
    def parse(raw: str):
        return tuple(conv(v.strip()) for v in raw.split(",") if v.strip())
    return parse


def _opt_int(raw: str):
    return None if raw.lower() in ("", "none") else int(raw)


def _check_keys(parser: configparser.ConfigParser) -> None:
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"config.{section}", f"unknown section [{section}]")
        if section == "simulate":
            continue
        for key in parser.options(section):
            if key not in _KEYS[section]:
                raise ConfigError(f"{section}.{key}", f"unknown setting {section}.{key}")


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config.syntax", str(exc).splitlines()[0]) from None
    _check_keys(parser)
    r = _Reader(parser)

    data_path = r.get("data", "path", str, None)
    frequency = r.get("data", "frequency", str, "")
    ordering = r.get("data", "ordering", _list(str), None)
    difference = r.get("data", "difference", _bool, False)

    mode = r.get("model", "mode", str.lower, "plain")
    if mode not in ("plain", "ns"):
        raise ConfigError("model.mode", f"mode must be 'plain' or 'ns', got {mode!r}")
    has_ns = parser.has_section("ns")
    if (mode == "ns") != has_ns:
        raise ConfigError("model.mode", "an [ns] section is required in ns mode and only there")
    kind = r.get("data", "kind", str.lower, "yields" if mode == "ns" else "macro")
    if kind not in DEFAULT_LAGS:
        raise ConfigError("data.kind", f"kind must be one of {sorted(DEFAULT_LAGS)}")

    ns = None
    if has_ns:
        mats = r.get("ns", "maturities", _list(float), None, required=True)
        gamma = r.get("ns", "gamma", float, 0.0609)
        try:
            ns = NsCurveConfig(mats, gamma)
        except DataError as exc:
            raise ConfigError("ns.maturities", str(exc)) from None
        if ordering is not None:
            raise ConfigError("data.ordering", "ns mode models the factors in level/slope/curvature order")

    model_kwargs = dict(
        lags=r.get("model", "lags", int, DEFAULT_LAGS[kind]),
        n_trees=r.get("model", "n_trees", int, 250),
        sweeps=r.get("model", "sweeps", int, 5000),
        burn_in=r.get("model", "burn_in", int, 2500),
        thin=r.get("model", "thin", int, 1),
        seed=r.get("model", "seed", int, 0),
        alpha=r.get("model", "alpha", float, 0.95),
        beta=r.get("model", "beta", float, 2.0),
        s_tilde=r.get("model", "s_tilde", float, 2.0),
        min_leaf_size=r.get("model", "min_leaf_size", int, 5),
        max_depth=r.get("model", "max_depth", int, 8),
        sv=r.get("model", "sv", _bool, True),
        leaf_scale_is_stddev=r.get("model", "leaf_scale_is_stddev", _bool, True),
        threads=r.get("model", "threads", int, 1),
        ordering=ordering,
    )
    model = ModelConfig(**model_kwargs)

    backtest = None
    train_end = None
    if parser.has_section("backtest"):
        train_end = r.get("backtest", "train_end", _opt_int, None)
        backtest = BacktestConfig(
            holdout=r.get("backtest", "holdout", int, None, required=True),
            horizons=r.get("backtest", "horizons", _list(int), (1, 3)),
            reestimate_every=r.get("backtest", "reestimate_every", int, 1),
            baseline_draws=r.get("backtest", "baseline_draws", int, 1000),
        )

    girf = None
    if parser.has_section("girf"):
        restricted = r.get("girf", "restricted", _list(str), ())
        units = r.get("girf", "restriction_units", lambda s: s.lower() or None, None)
        if units not in (None, "model", "level"):
            raise ConfigError("girf.restriction_units", "restriction_units must be 'model' or 'level'")
        if restricted and difference and units is None:
            raise ConfigError("girf.restriction_units",
                              "data are differenced: say whether restrictions pin levels or differences")
        if units == "level" and not difference:
            raise ConfigError("girf.restriction_units", "'level' only applies to differenced data")
        girf = GirfRunConfig(
            draws=r.get("girf", "draws", str, None),
            shock=r.get("girf", "shock", str, None, required=True),
            size=r.get("girf", "size", str.lower, "sd"),
            horizon=r.get("girf", "horizon", int, 24),
            restricted=restricted,
            restriction_units=units,
            history_end=r.get("girf", "history_end", _opt_int, None),
            future_shocks=r.get("girf", "future_shocks", str.lower, "none"),
            seed=r.get("girf", "seed", int, 0),
        )
        # validate the parts that do not need the data
        GirfSpec(shock=-1, size=girf.size, horizon=girf.horizon, future_shocks=girf.future_shocks)

    output_dir = r.get("output", "directory", str, "out")

    simulate = None
    if parser.has_section("simulate"):
        simulate = {}
        for key, raw in parser.items("simulate"):
            try:
                simulate[key] = json.loads(raw)
            except json.JSONDecodeError:
                simulate[key] = raw.strip()
        r.resolved["simulate"] = dict(simulate)

    return RunConfig(data_path=data_path, frequency=frequency, kind=kind, difference=difference, mode=mode,
                     model=model, ns=ns, backtest=backtest, train_end=train_end, girf=girf,
                     output_dir=output_dir, simulate=simulate, base_dir=base_dir, resolved=r.resolved)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config.path", f"{path}: no such config file")
    return parse_config(path.read_text(encoding="utf-8"), base_dir=str(path.parent))
