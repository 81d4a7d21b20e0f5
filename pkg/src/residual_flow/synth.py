"""Seeded synthetic option market with a planted residual-flow signal.

Generative story, one bar at a time:

* The underlying follows geometric Brownian motion with a slowly
  mean-reverting (log-OU) volatility; the option is quoted at its
  Black-Scholes value under that true volatility.
* Hedging flow in the option is the configured coefficients applied to the
  residual module's drivers (|underlying log return|, |change in open
  interest|, lagged signed volume, intercept).
* Informed flow ``informed_scale * z_t`` with ``z_t ~ N(0, 1)`` is added,
  along with independent noise flow ``noise_vol * N(0, 1)``.
* The next underlying shock is shifted by ``informed_strength * z_t`` (signed
  by the option's delta), so the next-bar option log return gains about
  ``informed_strength * z_t * return_scale_t``, where ``return_scale_t =
  |elasticity| * sigma_t * sqrt(dt)`` is the bar's diffusive option-return
  standard deviation.

Random numbers come from numpy's Philox4x64 counter-based generator. The
top-level seed feeds a ``SeedSequence`` whose spawned children, in the fixed
order of ``STREAMS``, drive one component each. Every stream draws its whole
block up front (one value per bar, or per calendar day for open interest),
so components never perturb one another.
"""

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from typing import List, Tuple

import numpy as np

from .errors import ConfigError
from .impliedvol import CALL, PricingInputs, bs_price, elasticity
from .marketdata.parsing import OPEN_INTEREST, QUOTES, TRADES, format_stream
from .marketdata.records import (
    NS_PER_SECOND, SECONDS_PER_YEAR, OpenInterestSnapshot, OptionContract, QuoteTick, TradeTick,
    date_to_ns, utc_date_of,
)

STREAMS = ("prices", "sigma", "informed", "noise", "open_interest", "underlying_volume")
GROUND_TRUTH_FIELDS = ("bar_start_ns", "z_informed", "true_sigma", "hedge_volume", "informed_volume",
                       "noise_volume")
MIN_BARS = 200
START = date(2024, 1, 2)


def default_contract():
    return OptionContract(instrument_id="OPT", underlying_id="UND", strike=100.0,
                          expiry=START + timedelta(days=60), right=CALL, rate=0.0)


@dataclass(frozen=True)
class SynthConfig:
    n_bars: int = 2000
    seed: int = 42
    underlying_vol: float = 0.20
    interval_s: int = 60
    spot0: float = 100.0
    # per-bar log-vol mean reversion and shock size
    vol_mean_reversion: float = 0.002
    vol_of_vol: float = 0.0005
    # (|log return|, |delta OI|, lagged signed volume, intercept)
    hedge_coefficients: Tuple[float, float, float, float] = (20_000.0, 0.01, 0.25, 3.0)
    informed_strength: float = 0.8
    informed_scale: float = 20.0
    noise_vol: float = 10.0
    oi0: int = 10_000
    oi_daily_sd: float = 300.0
    underlying_half_spread: float = 0.01
    option_half_spread_frac: float = 0.005
    contract: OptionContract = field(default_factory=default_contract)
    start: date = START

    def __post_init__(self):
        if not isinstance(self.n_bars, (int, np.integer)) or self.n_bars < MIN_BARS:
            raise ConfigError(f"n_bars must be an integer >= {MIN_BARS}, got {self.n_bars!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if not self.noise_vol >= 0:
            raise ConfigError(f"noise_vol must be >= 0, got {self.noise_vol!r}")
        for name in ("underlying_vol", "interval_s", "spot0", "underlying_half_spread"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("vol_mean_reversion", "vol_of_vol", "informed_scale", "oi0", "oi_daily_sd",
                     "option_half_spread_frac"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be >= 0")
        if len(self.hedge_coefficients) != 4:
            raise ConfigError("hedge_coefficients needs 4 values")
        end_ns = date_to_ns(self.start) + self.n_bars * self.interval_s * NS_PER_SECOND
        if self.contract.expiry_ns <= end_ns:
            raise ConfigError("contract expiry must fall after the last generated bar")

    def to_dict(self):
        d = asdict(self)
        d["contract"] = self.contract.to_dict()
        d["start"] = self.start.isoformat()
        d["hedge_coefficients"] = list(self.hedge_coefficients)
        return d


@dataclass
class GroundTruth:
    """Per-bar generator state; ``to_csv`` writes the published subset."""

    bar_start: np.ndarray
    z_informed: np.ndarray
    true_sigma: np.ndarray
    hedge_volume: np.ndarray
    informed_volume: np.ndarray
    noise_volume: np.ndarray
    underlying_mid: np.ndarray
    option_mid: np.ndarray
    open_interest: np.ndarray
    return_scale: np.ndarray
    diffusive_return: np.ndarray
    informed_return: np.ndarray

    @property
    def signed_volume(self):
        return self.hedge_volume + self.informed_volume + self.noise_volume

    @property
    def next_option_return(self):
        """ln(option_mid[t+1] / option_mid[t]); NaN on the last bar."""
        out = np.full(len(self.option_mid), np.nan)
        out[:-1] = np.log(self.option_mid[1:] / self.option_mid[:-1])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(GROUND_TRUTH_FIELDS)
        for i in range(len(self.bar_start)):
            writer.writerow([int(self.bar_start[i]), repr(float(self.z_informed[i])),
                             repr(float(self.true_sigma[i])), int(self.hedge_volume[i]),
                             int(self.informed_volume[i]), int(self.noise_volume[i])])
        return buf.getvalue()


@dataclass
class SyntheticMarket:
    trades: List[TradeTick]
    quotes: List[QuoteTick]
    open_interest: List[OpenInterestSnapshot]
    contract: OptionContract
    ground_truth: GroundTruth
    config: SynthConfig

    def files(self) -> dict:
        """Name -> text for every published file, in a fixed order."""
        return {
            "trades.csv": format_stream(self.trades, TRADES),
            "quotes.csv": format_stream(self.quotes, QUOTES),
            "open_interest.csv": format_stream(self.open_interest, OPEN_INTEREST),
            "contract.json": json.dumps(self.contract.to_dict(), indent=2) + "\n",
            "ground_truth.csv": self.ground_truth.to_csv(),
        }

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, text in self.files().items():
            h.update(name.encode())
            h.update(b"\0")
            h.update(text.encode())
        return h.hexdigest()


def _streams(seed, n, n_days):
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    gens = {name: np.random.Generator(np.random.Philox(child)) for name, child in zip(STREAMS, children)}
    return {
        "prices": gens["prices"].standard_normal(n),
        "sigma": gens["sigma"].standard_normal(n),
        "informed": gens["informed"].standard_normal(n),
        "noise": gens["noise"].standard_normal(n),
        "open_interest": gens["open_interest"].standard_normal(n_days),
        "underlying_volume": gens["underlying_volume"].standard_normal(n),
    }


def generate(config: SynthConfig = SynthConfig()) -> SyntheticMarket:
    n = config.n_bars
    c = config.contract
    interval_ns = config.interval_s * NS_PER_SECOND
    dt = config.interval_s / SECONDS_PER_YEAR
    sqrt_dt = math.sqrt(dt)
    t0 = date_to_ns(config.start)
    c_ret, c_doi, c_lag, c_int = config.hedge_coefficients
    log_vol_bar = math.log(config.underlying_vol)

    # daily open interest, one snapshot per calendar day touched
    n_days = (utc_date_of(t0 + (n - 1) * interval_ns) - config.start).days + 1
    draws = _streams(config.seed, n, n_days)
    oi_by_day = [int(config.oi0)]
    for d in range(1, n_days):
        step = int(round(config.oi_daily_sd * draws["open_interest"][d]))
        oi_by_day.append(max(0, oi_by_day[-1] + step))
    snapshots = [OpenInterestSnapshot(config.start + timedelta(days=d), c.instrument_id, oi_by_day[d])
                 for d in range(n_days)]

    gt = {k: np.zeros(n) for k in ("z_informed", "true_sigma", "hedge_volume", "informed_volume",
                                  "noise_volume", "underlying_mid", "option_mid", "open_interest",
                                  "return_scale", "diffusive_return", "informed_return")}
    bar_start = t0 + interval_ns * np.arange(n, dtype=np.int64)
    trades, quotes = [], []

    spot, log_vol = config.spot0, log_vol_bar
    prev_mid = prev_signed = prev_oi = None
    hu = config.underlying_half_spread
    for t in range(n):
        start = int(bar_start[t])
        ts_quote = start + 1_000_000
        vol = math.exp(log_vol)

        und_bid, und_ask = spot - hu, spot + hu
        und_mid = (und_bid + und_ask) / 2.0
        inputs = PricingInputs(spot, c.strike, c.rate, c.years_to_expiry(ts_quote), vol, c.right)
        value = bs_price(inputs)
        half = max(0.01, config.option_half_spread_frac * value)
        half = min(half, 0.5 * value)
        opt_bid, opt_ask = value - half, value + half
        quotes.append(QuoteTick(ts_quote, c.underlying_id, und_bid, und_ask))
        quotes.append(QuoteTick(ts_quote, c.instrument_id, opt_bid, opt_ask))

        oi = oi_by_day[(utc_date_of(start) - config.start).days]
        abs_ret = abs(math.log(und_mid / prev_mid)) if prev_mid is not None else 0.0
        abs_doi = abs(oi - prev_oi) if prev_oi is not None else 0.0
        lag = prev_signed if prev_signed is not None else 0.0
        hedge = int(round(c_ret * abs_ret + c_doi * abs_doi + c_lag * lag + c_int))
        z = float(draws["informed"][t])
        informed = int(round(config.informed_scale * z))
        noise = int(round(config.noise_vol * float(draws["noise"][t])))

        for k, size in enumerate((hedge, informed, noise)):
            if size:
                price = opt_ask if size > 0 else opt_bid
                trades.append(TradeTick(start + (2 + k) * 1_000_000, c.instrument_id, price, abs(size)))
        und_size = 100 + int(round(400 * abs(float(draws["underlying_volume"][t]))))
        trades.append(TradeTick(start + 5_000_000, c.underlying_id, und_mid, und_size))

        omega = elasticity(inputs)
        diffusive = -0.5 * vol * vol * dt + vol * sqrt_dt * float(draws["prices"][t])
        planted = vol * sqrt_dt * config.informed_strength * z * (1.0 if omega >= 0 else -1.0)

        gt["z_informed"][t] = z
        gt["true_sigma"][t] = vol
        gt["hedge_volume"][t] = hedge
        gt["informed_volume"][t] = informed
        gt["noise_volume"][t] = noise
        gt["underlying_mid"][t] = und_mid
        gt["option_mid"][t] = (opt_bid + opt_ask) / 2.0
        gt["open_interest"][t] = oi
        gt["return_scale"][t] = abs(omega) * vol * sqrt_dt
        gt["diffusive_return"][t] = diffusive
        gt["informed_return"][t] = planted

        prev_mid, prev_oi, prev_signed = und_mid, oi, hedge + informed + noise
        spot *= math.exp(diffusive + planted)
        log_vol += config.vol_mean_reversion * (log_vol_bar - log_vol) + config.vol_of_vol * float(draws["sigma"][t])

    for k in ("hedge_volume", "informed_volume", "noise_volume", "open_interest"):
        gt[k] = gt[k].astype(np.int64)
    truth = GroundTruth(bar_start=bar_start, **gt)
    return SyntheticMarket(trades, quotes, snapshots, c, truth, config)


def oracle_residuals(truth: GroundTruth, window: int = 60, min_std_floor: float = 1e-9):
    """Reference residual z-scores rebuilt straight from the generator's state.

    Deliberately plain: explicit loops, SVD least squares, no shared code with
    the residual module. Returns a list of ``(bar_start, expected, raw, delta_r)``.
    """
    n = len(truth.bar_start)
    signed = [int(v) for v in truth.signed_volume]
    mids = [float(v) for v in truth.underlying_mid]
    ois = [int(v) for v in truth.open_interest]
    drivers = []
    for t in range(n):
        r = abs(math.log(mids[t] / mids[t - 1])) if t > 0 else 0.0
        doi = float(abs(ois[t] - ois[t - 1])) if t > 0 else 0.0
        lag = float(signed[t - 1]) if t > 0 else 0.0
        drivers.append([r, doi, lag])

    out = []
    for t in range(window, n):
        rows = drivers[t - window:t]
        keep = [j for j in range(3) if len({row[j] for row in rows}) > 1]
        A = np.array([[row[j] for j in keep] + [1.0] for row in rows])
        b = np.array(signed[t - window:t], dtype=float)
        coef = np.linalg.lstsq(A, b, rcond=None)[0]
        fitted = A @ coef
        errs = [b[i] - fitted[i] for i in range(window)]
        mean_err = sum(errs) / window
        std = math.sqrt(sum((e - mean_err) ** 2 for e in errs) / window)
        expected = float(np.dot([drivers[t][j] for j in keep] + [1.0], coef))
        raw = signed[t] - expected
        out.append((int(truth.bar_start[t]), expected, raw, raw / max(std, min_std_floor)))
    return out

