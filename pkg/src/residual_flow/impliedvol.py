"""Black-Scholes pricing, delta and implied-volatility inversion.

No dividends. The normal CDF is evaluated as ``0.5 * erfc(-x / sqrt(2))``
using the C99 ``erfc`` from the platform libm (``math.erfc``), which is
accurate to a few ulps over the whole real line, so the CDF carries an
absolute error far below 1e-12 and keeps full *relative* accuracy in the
far left tail. That tail accuracy is what lets deep out-of-the-money prices
be inverted.
"""

from dataclasses import dataclass, replace
import math

from .errors import ArbitrageBound, DomainError, NoConvergence, VolatilityOutOfRange

CALL = "call"
PUT = "put"

VOL_LO = 1e-4
VOL_HI = 5.0

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(x):
    return 0.5 * math.erfc(-x / _SQRT2)


def norm_pdf(x):
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def _check_right(right):
    if right not in (CALL, PUT):
        raise DomainError(f"right must be 'call' or 'put', got {right!r}")
    return right


@dataclass(frozen=True)
class PricingInputs:
    spot: float
    strike: float
    rate: float
    expiry: float
    vol: float
    right: str = CALL

    def __post_init__(self):
        _check_right(self.right)
        for name in ("spot", "strike", "expiry"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")
        if not (math.isfinite(self.vol) and self.vol >= 0):
            raise DomainError(f"vol must be finite and >= 0, got {self.vol!r}")
        if not math.isfinite(self.rate):
            raise DomainError(f"rate must be finite, got {self.rate!r}")

    def with_vol(self, vol):
        return replace(self, vol=vol)


def price_bounds(spot, strike, rate, expiry, right):
    """No-arbitrage (lower, upper) bounds on a European price."""
    disc_k = strike * math.exp(-rate * expiry)
    if right == CALL:
        return max(0.0, spot - disc_k), spot
    return max(0.0, disc_k - spot), disc_k


def _d1_d2(p):
    sd = p.vol * math.sqrt(p.expiry)
    d1 = (math.log(p.spot / p.strike) + (p.rate + 0.5 * p.vol * p.vol) * p.expiry) / sd
    return d1, d1 - sd


def bs_price(p: PricingInputs) -> float:
    lower, upper = price_bounds(p.spot, p.strike, p.rate, p.expiry, p.right)
    if p.vol == 0.0:
        return lower
    disc_k = p.strike * math.exp(-p.rate * p.expiry)
    d1, d2 = _d1_d2(p)
    if p.right == CALL:
        value = p.spot * norm_cdf(d1) - disc_k * norm_cdf(d2)
    else:
        value = disc_k * norm_cdf(-d2) - p.spot * norm_cdf(-d1)
    # rounding can push a hair outside the bounds
    return min(upper, max(lower, value))


def bs_vega(p: PricingInputs) -> float:
    if p.vol == 0.0:
        return 0.0
    d1, _ = _d1_d2(p)
    return p.spot * norm_pdf(d1) * math.sqrt(p.expiry)


def bs_delta(p: PricingInputs) -> float:
    if p.vol == 0.0:
        fwd_gap = p.spot - p.strike * math.exp(-p.rate * p.expiry)
        call_delta = 1.0 if fwd_gap > 0 else (0.0 if fwd_gap < 0 else 0.5)
    else:
        d1, _ = _d1_d2(p)
        call_delta = norm_cdf(d1)
    return call_delta if p.right == CALL else call_delta - 1.0


def elasticity(p: PricingInputs) -> float:
    """Option log-price sensitivity to the underlying log-price, delta * S / price."""
    return bs_delta(p) * p.spot / bs_price(p)


def implied_vol(price, spot, strike, rate, expiry, right=CALL, *, max_iter=200):
    """Invert :func:`bs_price` for volatility.

    Newton steps are taken on ``log(price)`` starting from the
    Brenner-Subrahmanyam guess ``sqrt(2*pi/T) * price / S``; a bracket
    ``[VOL_LO, VOL_HI]`` is tightened on every evaluation and any Newton step
    that leaves it (or has a vanishing vega) is replaced by bisection. Price is
    monotone in volatility, so this always converges for prices the bracket
    can produce.

    Raises
    ------
    ArbitrageBound
        ``price`` is not strictly inside the no-arbitrage bounds.
    VolatilityOutOfRange
        ``price`` is arbitrage-free but below ``bs_price(VOL_LO)`` or above
        ``bs_price(VOL_HI)``.
    """
    base = PricingInputs(spot, strike, rate, expiry, VOL_LO, _check_right(right))
    if not math.isfinite(price):
        raise DomainError(f"price must be finite, got {price!r}")
    lower, upper = price_bounds(spot, strike, rate, expiry, right)
    if not lower < price < upper:
        raise ArbitrageBound(
            f"{right} price {price!r} outside open no-arbitrage interval ({lower!r}, {upper!r})"
        )
    tol = 1e-10 * max(1.0, price)

    lo, hi = VOL_LO, VOL_HI
    p_lo = bs_price(base)
    p_hi = bs_price(base.with_vol(hi))
    if price < p_lo:
        if p_lo - price <= tol:
            return lo
        raise VolatilityOutOfRange(f"price {price!r} below bs_price(vol={lo})={p_lo!r}")
    if price > p_hi:
        if price - p_hi <= tol:
            return hi
        raise VolatilityOutOfRange(f"price {price!r} above bs_price(vol={hi})={p_hi!r}")

    log_target = math.log(price)
    vol = math.sqrt(2.0 * math.pi / expiry) * price / spot
    if not lo < vol < hi:
        vol = 0.5 * (lo + hi)
    for _ in range(max_iter):
        inputs = base.with_vol(vol)
        model = bs_price(inputs)
        if model == price:
            return vol
        if model < price:
            lo = vol
        else:
            hi = vol
        vega = bs_vega(inputs)
        step_ok = False
        if model > 0.0 and vega > 1e-300:
            cand = vol - (math.log(model) - log_target) * model / vega
            step_ok = lo < cand < hi
        if not step_ok:
            cand = 0.5 * (lo + hi)
        if abs(cand - vol) <= 1e-15 * vol or hi - lo <= 1e-15 * hi:
            vol = cand
            break
        vol = cand

    err = abs(bs_price(base.with_vol(vol)) - price)
    if err > tol:
        raise NoConvergence(f"implied vol did not converge (|error|={err:.3g})", last=vol)
    return vol
