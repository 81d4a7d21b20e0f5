"""``residual-flow`` command line.

Subcommands: simulate, ingest, residuals, calibrate, predict, backtest.
Settings come from built-in defaults, then a JSON ``--config`` file with one
object per section, then command-line flags. Every config key has a flag.

Exit codes: 0 ok, 2 configuration, 3 I/O, 4 data, 5 calibration.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import synth
from .backtest import ModelConfig, SplitPlan, run_backtest
from .calibrate import CalibratedModel, build_features, fit, select_penalty
from .calibrate.model import DEFAULT_GRID
from .errors import CalibrationError, ConfigError, DataError, PricingError
from .marketdata import (
    OPEN_INTEREST, QUOTES, TRADES, BAR_FIELDS, ContractIV, OptionContract, aggregate_bars, bar_to_row,
    parse_stream,
)
from .marketdata.records import NS_PER_SECOND
from .residual import ResidualConfig, compute_residuals, format_residuals

logger = logging.getLogger("residual_flow")

LOG_ENV = "RESIDUAL_FLOW_LOG"
EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DATA, EXIT_CALIBRATION = 0, 2, 3, 4, 5
COMMANDS = ("simulate", "ingest", "residuals", "calibrate", "predict", "backtest")


def _float_list(text):
    if isinstance(text, list):
        return [float(v) for v in text]
    if text is None or str(text).lower() in ("", "none"):
        return None
    return [float(v) for v in str(text).split(",")]


# (section, key, type, default, help); the flag is --key with dashes
SETTINGS = [
    ("", "seed", int, 42, "top-level seed for every random stream"),
    ("", "out", str, "out", "output directory"),
    ("data", "dir", str, None, "directory with trades.csv, quotes.csv, open_interest.csv, contract.json "
                               "(defaults to --out)"),
    ("data", "model", str, None, "model.json for predict (defaults to <out>/model.json)"),
    ("marketdata", "interval_s", int, 60, "bar interval in seconds"),
    ("marketdata", "staleness_s", float, 60.0, "quotes older than this leave trades unclassified"),
    ("marketdata", "sort_buffer", int, 10_000, "out-of-order tolerance in records"),
    ("residual", "window", int, 60, "hedging-baseline window in bars (>= 20)"),
    ("residual", "min_std_floor", float, 1e-9, "floor on the residual standard deviation"),
    ("model", "method", str, "ols", "ols | ridge | lasso"),
    ("model", "penalty", float, 0.0, "fixed penalty when --grid is none"),
    ("model", "grid", _float_list, list(DEFAULT_GRID), "comma-separated penalty grid, or 'none'"),
    ("model", "inner_folds", int, 2, "walk-forward folds for penalty selection"),
    ("model", "volume_source", str, "option", "option | underlying volume as the V feature"),
    ("model", "target", str, "log_return", "log_return | price_change of the option mid"),
    ("model", "exclude_features", list, [], "feature to force to zero (repeatable: V, OI, sigma, delta_r)"),
    ("backtest", "train_len", int, 500, "training rows per fold"),
    ("backtest", "test_len", int, 50, "test rows per fold"),
    ("backtest", "step", int, 50, "rows between fold origins"),
    ("synth", "n_bars", int, 2000, "bars to simulate (>= 200)"),
    ("synth", "informed_strength", float, 0.8, "planted signal per unit residual z-score"),
    ("synth", "informed_scale", float, 20.0, "informed contracts per unit z-score"),
    ("synth", "noise_vol", float, 10.0, "noise-flow standard deviation in contracts"),
    ("synth", "underlying_vol", float, 0.2, "long-run underlying volatility"),
]

_FLAG_OVERRIDES = {("model", "exclude_features"): "exclude-feature", ("data", "dir"): "data"}


def flag_for(section, key):
    return "--" + _FLAG_OVERRIDES.get((section, key), key.replace("_", "-"))


def _dest(section, key):
    return f"{section}__{key}" if section else key


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    for section, key, typ, default, help_ in SETTINGS:
        kwargs = {"dest": _dest(section, key), "default": argparse.SUPPRESS, "help": help_}
        if typ is list:
            kwargs.update(action="append", metavar="NAME")
        else:
            kwargs.update(type=typ, metavar=key.upper())
        if section == "":
            kwargs["metavar"] = {"seed": "N", "out": "DIR"}[key]
        common.add_argument(flag_for(section, key), **kwargs)
    common.add_argument("--config", default=argparse.SUPPRESS, metavar="PATH", help="JSON config file")

    parser = argparse.ArgumentParser(prog="residual-flow", parents=[common],
                                     description="Residual option-flow model toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "simulate": "write a seeded synthetic market and its ground truth",
        "ingest": "aggregate ticks into bars.csv",
        "residuals": "compute the residual-flow series into residuals.csv",
        "calibrate": "fit the model on all feature rows into model.json",
        "predict": "apply model.json to every feature row into predictions.csv",
        "backtest": "walk-forward evaluation into report.json and report.csv",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


def load_settings(args) -> dict:
    """Defaults < config file < flags, as a {section: {key: value}} dict."""
    settings = {}
    for section, key, _, default, _ in SETTINGS:
        settings.setdefault(section, {})[key] = default
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {cfg_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {cfg_path} is not valid JSON: {exc}") from exc
        known = {(s, k): t for s, k, t, _, _ in SETTINGS}
        for name, value in loaded.items():
            if isinstance(value, dict):
                for key, v in value.items():
                    if (name, key) not in known:
                        raise ConfigError(f"unknown config key {name}.{key}")
                    settings[name][key] = _coerce(known[(name, key)], v, f"{name}.{key}")
            elif ("", name) in known:
                settings[""][name] = _coerce(known[("", name)], value, name)
            else:
                raise ConfigError(f"unknown config key {name}")
    for section, key, *_ in SETTINGS:
        dest = _dest(section, key)
        if hasattr(args, dest):
            settings[section][key] = getattr(args, dest)
    return settings


def _coerce(typ, value, name):
    try:
        if typ is list:
            return [str(v) for v in value]
        return typ(value) if value is not None else None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def _model_config(s):
    m = s["model"]
    grid = m["grid"]
    return ModelConfig(method=m["method"], penalty=float(m["penalty"]),
                       grid=None if not grid else tuple(float(g) for g in grid),
                       inner_folds=int(m["inner_folds"]), exclude_features=tuple(m["exclude_features"] or ()))


def _data_dir(s):
    path = Path(s["data"]["dir"] or s[""]["out"])
    if not path.is_dir():
        raise ConfigError(f"data directory {path} does not exist")
    return path


def _out_dir(s):
    path = Path(s[""]["out"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    logger.info("wrote %s (%d bytes)", path, len(text))


def load_bars(s):
    d = _data_dir(s)
    md = s["marketdata"]
    if md["interval_s"] <= 0:
        raise ConfigError("interval_s must be > 0")
    with open(d / "contract.json", encoding="utf-8") as fh:
        contract = OptionContract.from_dict(json.load(fh))
    buf = int(md["sort_buffer"])
    trades = parse_stream(d / "trades.csv", TRADES, sort_buffer=buf).records
    quotes = parse_stream(d / "quotes.csv", QUOTES, sort_buffer=buf).records
    oi_path = d / "open_interest.csv"
    oi = parse_stream(oi_path, OPEN_INTEREST, sort_buffer=buf).records if oi_path.exists() else []
    bars = aggregate_bars(trades, quotes, oi, ContractIV(contract), md["interval_s"] * NS_PER_SECOND,
                          option_id=contract.instrument_id, underlying_id=contract.underlying_id,
                          max_staleness_ns=int(md["staleness_s"] * NS_PER_SECOND))
    return bars, len(trades), len(quotes)


def _residual_config(s):
    r = s["residual"]
    return ResidualConfig(window=int(r["window"]), min_std_floor=float(r["min_std_floor"]))


def load_features(s):
    bars, _, _ = load_bars(s)
    residuals = compute_residuals(bars, _residual_config(s))
    m = s["model"]
    return build_features(bars, residuals, volume_source=m["volume_source"], target=m["target"])


def cmd_simulate(s):
    sy = s["synth"]
    interval = int(s["marketdata"]["interval_s"])
    if interval <= 0:
        raise ConfigError("interval_s must be > 0")
    config = synth.SynthConfig(
        n_bars=sy["n_bars"], seed=s[""]["seed"], informed_strength=sy["informed_strength"],
        informed_scale=sy["informed_scale"], noise_vol=sy["noise_vol"],
        underlying_vol=sy["underlying_vol"], interval_s=interval,
    )
    market = synth.generate(config)
    out = _out_dir(s)
    for name, text in market.files().items():
        _write(out / name, text)
    print(f"bars={config.n_bars} trades={len(market.trades)} quotes={len(market.quotes)} "
          f"digest={market.digest()}")


def cmd_ingest(s):
    bars, n_trades, n_quotes = load_bars(s)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BAR_FIELDS)
    for bar in bars:
        writer.writerow(bar_to_row(bar))
    _write(_out_dir(s) / "bars.csv", buf.getvalue())
    print(f"bars={len(bars)} trades={n_trades} quotes={n_quotes}")


def cmd_residuals(s):
    bars, _, _ = load_bars(s)
    points = compute_residuals(bars, _residual_config(s))
    _write(_out_dir(s) / "residuals.csv", format_residuals(points))
    peak = max(abs(p.delta_r) for p in points)
    print(f"residuals={len(points)} max_abs_delta_r={peak:.6g}")


def cmd_calibrate(s):
    fm = load_features(s)
    mc = _model_config(s)
    penalty = mc.penalty
    if mc.method != "ols" and mc.grid is not None:
        penalty, _ = select_penalty(fm, mc.method, mc.grid, mc.inner_folds, exclude=mc.exclude_features)
    model = fit(fm, method=mc.method, penalty=penalty, exclude=mc.exclude_features)
    _write(_out_dir(s) / "model.json", model.to_json())
    print(f"rows={len(fm)} method={model.method} penalty={model.penalty:.6g} lambda={model.lambda_:.6g} "
          f"epsilon={model.epsilon_scale:.6g}")


def cmd_predict(s):
    model_path = Path(s["data"]["model"] or Path(s[""]["out"]) / "model.json")
    if not model_path.is_file():
        raise ConfigError(f"model file {model_path} does not exist")
    try:
        model = CalibratedModel.from_json(model_path.read_text(encoding="utf-8"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{model_path} is not a valid model: {exc}") from exc
    fm = load_features(s)
    preds = model.predict_many(fm.X)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bar_start_ns", "prediction", "actual"])
    for t, p, a in zip(fm.bar_start, preds, fm.y):
        writer.writerow([int(t), repr(float(p)), repr(float(a))])
    _write(_out_dir(s) / "predictions.csv", buf.getvalue())
    mse = math.fsum((preds - fm.y) ** 2) / len(fm)
    print(f"rows={len(fm)} mse={mse:.6g}")


def cmd_backtest(s):
    fm = load_features(s)
    b = s["backtest"]
    plan = SplitPlan(train_len=int(b["train_len"]), test_len=int(b["test_len"]), step=int(b["step"]))
    report = run_backtest(fm, _model_config(s), plan, seed=s[""]["seed"])
    out = _out_dir(s)
    _write(out / "report.json", report.to_json())
    _write(out / "report.csv", report.to_csv())
    print(report.summary())


HANDLERS = {
    "simulate": cmd_simulate, "ingest": cmd_ingest, "residuals": cmd_residuals,
    "calibrate": cmd_calibrate, "predict": cmd_predict, "backtest": cmd_backtest,
}


def _configure_logging():
    level_name = os.environ.get(LOG_ENV, "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level_name, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if level_name not in levels:
        logger.warning("ignoring %s=%r; expected one of %s", LOG_ENV, level_name, sorted(levels))


def main(argv=None):
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = load_settings(args)
        HANDLERS[args.command](settings)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DataError, PricingError) as exc:
        print(f"data error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_DATA
    except CalibrationError as exc:
        print(f"calibration failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
