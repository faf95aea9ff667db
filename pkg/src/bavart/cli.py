"""Batch command line: ``bavart {estimate,backtest,girf,simulate,importance} CONFIG``.

Exit status is 0 on success, 1 on runtime failures and 2 on configuration
errors; failures print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, hashable, load_config
from .data import DataError, TimeSeriesMatrix, load_csv, ns_extract_factors, write_csv
from .errors import ConfigError
from .forecast import backtest
from .girf import GirfSpec, girf
from .io import read_draws, read_meta, write_draws, write_json
from .sampler import estimate
from .simulate import simulate

log = logging.getLogger("bavart")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def write_table(path, rows: list[dict], config_hash: str) -> None:
    """CSV with a header row; every row carries the generating config hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        raise ValueError(f"refusing to write empty table {path}")
    fields = list(rows[0]) + ["config_hash"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()}
                       | {"config_hash": config_hash})


def _manifest(cfg: RunConfig, command: str, **extra) -> dict:
    return {"command": command, "config": hashable(cfg.resolved), "config_hash": cfg.hash,
            "threads": cfg.model.threads, **extra}


def _model_data(cfg: RunConfig) -> TimeSeriesMatrix:
    Y = cfg.load_data()
    return ns_extract_factors(Y, cfg.ns) if cfg.ns is not None else Y


def _draws_dir(cfg: RunConfig) -> Path:
    if cfg.girf is not None and cfg.girf.draws:
        return cfg.resolve_path(cfg.girf.draws)
    return cfg.output / "draws"


def cmd_estimate(cfg: RunConfig) -> int:
    Y = _model_data(cfg)
    draws = estimate(Y, cfg.model)
    out = write_draws(draws, cfg.output / "draws",
                      extra={"run_config": hashable(cfg.resolved), "run_config_hash": cfg.hash})
    log.info("wrote %d draws to %s", draws.n_draws, out)
    return EXIT_OK


def cmd_backtest(cfg: RunConfig) -> int:
    if cfg.backtest is None:
        raise ConfigError("backtest", "a [backtest] section is required")
    Y = cfg.load_data()
    if cfg.train_end is not None:
        end = cfg.train_end + cfg.backtest.holdout
        if end > Y.T:
            raise ConfigError("backtest.train_end", f"train_end + holdout = {end} exceeds {Y.T} observations")
        Y = Y.head(end)
    if cfg.backtest.holdout >= Y.T:
        raise ConfigError("backtest.holdout", f"hold-out {cfg.backtest.holdout} is not shorter than the sample")
    result = backtest(Y, cfg.model, cfg.backtest, ns=cfg.ns)
    out = cfg.output
    rows = [dict(r) for r in result.records]
    write_table(out / "forecasts.csv", rows, cfg.hash)
    tables = result.table("bavart") + result.table("white_noise")
    write_table(out / "msfe.csv", [{k: r[k] for k in ("model", "series", "horizon", "n", "msfe")} for r in tables],
                cfg.hash)
    write_table(out / "crps.csv", [{k: r[k] for k in ("model", "series", "horizon", "n", "crps")} for r in tables],
                cfg.hash)
    write_json(out / "backtest_manifest.json", _manifest(
        cfg, "backtest", scored={str(h): result.count(h) for h in result.horizons}))
    return EXIT_OK


def _index(names, key: str, setting: str) -> int:
    if key in names:
        return list(names).index(key)
    try:
        i = int(key)
    except ValueError:
        raise ConfigError(setting, f"unknown variable {key!r}; choose from {list(names)}") from None
    if not 0 <= i < len(names):
        raise ConfigError(setting, f"variable index {i} out of range")
    return i


def cmd_girf(cfg: RunConfig) -> int:
    if cfg.girf is None:
        raise ConfigError("girf", "a [girf] section is required")
    g = cfg.girf
    src = _draws_dir(cfg)
    if not (src / "meta.json").is_file():
        raise FileNotFoundError(f"{src}: no draws found; run `bavart estimate` first")
    draws = read_draws(src)
    names = draws.names
    shock = _index(names, g.shock, "girf.shock")
    restricted = tuple(_index(names, r, "girf.restricted") for r in g.restricted)
    pin_path = None
    if restricted and g.restriction_units == "level":
        # differenced model with the level pinned at zero: the first step
        # undoes the last observed level, later steps leave it unchanged
        levels = load_csv(cfg.resolve_path(cfg.data_path), cfg.frequency)
        end = g.history_end or draws.data.T
        last = levels.reorder(names).values[end]
        pin_path = [[-last[r] for r in restricted]] + [[0.0] * len(restricted)] * (g.horizon - 1)
    spec = GirfSpec(shock=shock, size=g.size, horizon=g.horizon, restricted=restricted,
                    history_end=g.history_end, future_shocks=g.future_shocks, pin_path=pin_path)
    rng = np.random.default_rng(np.random.SeedSequence(g.seed, spawn_key=(shock,)))
    result = girf(draws, spec, rng, threads=cfg.model.threads)
    rows = [r | {"shock": names[shock], "size": g.size} for r in result.table()]
    write_table(cfg.output / "girf.csv", rows, cfg.hash)
    write_json(cfg.output / "girf_manifest.json",
               _manifest(cfg, "girf", draws=str(src), draws_config_hash=read_meta(src)["config_hash"]))
    return EXIT_OK


def cmd_importance(cfg: RunConfig) -> int:
    src = _draws_dir(cfg)
    if not (src / "meta.json").is_file():
        raise FileNotFoundError(f"{src}: no draws found; run `bavart estimate` first")
    draws = read_draws(src)
    counts = draws.splitting_counts()
    names = draws.names
    rows = []
    for k in range(counts.shape[1]):
        lag, var = divmod(k, draws.M)
        for j, eq in enumerate(names):
            c = counts[:, k, j]
            rows.append({"covariate": f"{names[var]}.lag{lag + 1}", "equation": eq,
                         "median": float(np.median(c)), "mean": float(np.mean(c))})
    write_table(cfg.output / "importance.csv", rows, cfg.hash)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    if not cfg.simulate:
        raise ConfigError("simulate", "a [simulate] section is required")
    params = dict(cfg.simulate)
    kind = params.pop("kind", None)
    if kind is None:
        raise ConfigError("simulate.kind", "missing required setting simulate.kind")
    target = params.pop("output", None)
    sim = simulate(kind, **params)
    path = cfg.resolve_path(target) if target else cfg.output / f"{kind}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(path, sim.data)
    truth = dict(sim.truth) | {"names": list(sim.data.names), "config_hash": cfg.hash}
    write_json(path.with_suffix(".truth.json"), truth)
    return EXIT_OK


COMMANDS = {
    "estimate": cmd_estimate,
    "backtest": cmd_backtest,
    "girf": cmd_girf,
    "simulate": cmd_simulate,
    "importance": cmd_importance,
}


def _fail(code: int, key: str, message: str) -> int:
    print(json.dumps({"error": key, "message": message}, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bavart", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config", help="INI run configuration")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc.key, exc.message)
    except DataError as exc:
        return _fail(EXIT_RUNTIME, "data", str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_RUNTIME, "missing", str(exc))
    except (ValueError, ArithmeticError, OSError) as exc:
        return _fail(EXIT_RUNTIME, "runtime", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
