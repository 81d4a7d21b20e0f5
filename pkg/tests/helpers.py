"""Builders shared across the test modules."""

import numpy as np

from residual_flow import synth
from residual_flow.backtest import ModelConfig, run_backtest
from residual_flow.calibrate import FeatureMatrix, build_features
from residual_flow.marketdata import ContractIV, MarketBar, aggregate_bars
from residual_flow.residual import compute_residuals

TRUE_COEF = (0.5, -0.2, 0.1, 0.8)
MINUTE = 60_000_000_000


def market_bars(market):
    c = market.contract
    return aggregate_bars(market.trades, market.quotes, market.open_interest, ContractIV(c),
                          option_id=c.instrument_id, underlying_id=c.underlying_id)


def synth_features(seed, n_bars=2000, informed_strength=0.8, **kw):
    market = synth.generate(synth.SynthConfig(seed=seed, n_bars=n_bars, informed_strength=informed_strength, **kw))
    bars = market_bars(market)
    return build_features(bars, compute_residuals(bars))


def full_vs_restricted(seed, informed_strength):
    fm = synth_features(seed, informed_strength=informed_strength)
    full = run_backtest(fm, ModelConfig())
    restricted = run_backtest(fm, ModelConfig(exclude_features=("delta_r",)))
    return full, restricted


def raw_features(n, rng):
    """Plausible raw columns: volume, open interest, implied vol, residual z."""
    V = rng.integers(0, 200, n).astype(float)
    OI = 10_000 + rng.integers(-500, 500, n).astype(float)
    sigma = 0.2 + 0.02 * rng.standard_normal(n)
    dr = rng.standard_normal(n)
    return np.column_stack([V, OI, sigma, dr])


def noiseless_matrix(n=600, seed=0, coef=TRUE_COEF, intercept=0.001):
    """Target built exactly from standardized features (population std, delta_r unscaled)."""
    rng = np.random.default_rng(seed)
    X = raw_features(n, rng)
    Z = X.copy()
    Z[:, :3] = (X[:, :3] - X[:, :3].mean(axis=0)) / X[:, :3].std(axis=0)
    y = intercept + Z @ np.asarray(coef)
    return FeatureMatrix(np.arange(n, dtype=np.int64) * MINUTE, X, y)


def make_bar(i, signed=0, volume=None, oi=1000, ret=0.0, sigma=0.2, mid=1.0, underlying_volume=0):
    volume = abs(signed) if volume is None else volume
    return MarketBar(bar_start=i * MINUTE, interval=MINUTE, option_volume=volume, signed_option_volume=signed,
                     open_interest=oi, implied_vol=sigma, option_mid=mid, underlying_mid=100.0,
                     underlying_log_return=ret, underlying_volume=underlying_volume)
