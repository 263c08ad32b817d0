"""Limiting relative variance of tau-GRA estimators and related constants.

Both variance curves are ``m * Var(lambda_hat) / lambda**2`` in the limit
``m -> inf`` as functions of the exponent ``tau``:

* LogLog: ``tau**-2 * (G(2t) ln2 / G(t)**2 * (1 + 2**-t) / (1 - 2**-t) - 1)``
* PCSA:   ``(1 - 2**(-2t)) G(2t) ln2 / (t**2 G(t)**2)``

Near ``tau = 0`` the LogLog expression is a difference of two numbers that
agree to ``O(tau**2)``, so both curves are evaluated through
``ln G(1 + x)`` (a zeta series for small x), in which the Euler-Mascheroni
terms cancel exactly.  ``tau = 0`` returns the closed-form limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ._validation import MAX_TAU, check_kind
from .exceptions import InvalidParameterError, NumericalFailureError

LN2 = math.log(2.0)
EULER_GAMMA = 0.57721566490153286061

# zeta(k) for k = 2..14
_ZETA = (
    1.6449340668482264,
    1.2020569031595943,
    1.0823232337111382,
    1.0369277551433699,
    1.0173430619844491,
    1.0083492773819228,
    1.0040773561979443,
    1.0020083928260822,
    1.0009945751278181,
    1.0004941886041195,
    1.0002460865533080,
    1.0001227133475785,
    1.0000612481350587,
)

_SERIES_LIMIT = 0.05

_LANCZOS_G = 7
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(x: float) -> float:
    """Gamma function on (0, 35] via the Lanczos approximation (g=7, n=9)."""
    x = float(x)
    if not 0.0 < x <= 35.0:
        raise InvalidParameterError(f"gamma_fn domain is (0, 35], got {x!r}")
    if x < 0.5:
        # reflection keeps the Lanczos sum in its accurate range
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    x -= 1.0
    a = _LANCZOS_COEF[0]
    t = x + _LANCZOS_G + 0.5
    for i in range(1, _LANCZOS_G + 2):
        a += _LANCZOS_COEF[i] / (x + i)
    return math.sqrt(2 * math.pi) * t ** (x + 0.5) * math.exp(-t) * a


def _lgamma1p_series(x: float) -> float:
    """``ln G(1 + x) + EULER_GAMMA * x`` for small |x| (the non-linear part)."""
    total = 0.0
    xk = x
    for k, z in enumerate(_ZETA, start=2):
        xk *= x
        total += (-1) ** k * z * xk / k
    return total


def lgamma1p(x: float) -> float:
    """``ln G(1 + x)``, accurate to full relative precision near x = 0."""
    if abs(x) <= _SERIES_LIMIT:
        return -EULER_GAMMA * x + _lgamma1p_series(x)
    return math.log(gamma_fn(1.0 + x))


def _check_tau_closed(tau):
    tau = float(tau)
    if not 0.0 <= tau <= MAX_TAU:
        raise InvalidParameterError(f"tau must lie in [0, {MAX_TAU:g}], got {tau!r}")
    return tau


def _check_tau_open(tau):
    tau = float(tau)
    if not 0.0 < tau <= MAX_TAU:
        raise InvalidParameterError(f"tau must lie in (0, {MAX_TAU:g}], got {tau!r}")
    return tau


def _gamma_ratio_log(tau):
    """``ln(G(1 + 2t) / G(1 + t)**2)`` without cancellation for small tau."""
    if 2 * tau <= _SERIES_LIMIT:
        total = 0.0
        tk = tau
        for k, z in enumerate(_ZETA, start=2):
            tk *= tau
            total += (-1) ** k * z * (2**k - 2) * tk / k
        return total
    return lgamma1p(2 * tau) - 2 * lgamma1p(tau)


DF_VARIANCE = (2 * math.pi**2 + LN2**2) / 12
LANG_VARIANCE = LN2**2


def _log_xcothx(x):
    """``ln(x coth x)``; series below 0.01 where ``x / tanh(x) - 1`` loses digits."""
    if x < 0.01:
        x2 = x * x
        return x2 / 3 - 7 * x2**2 / 90 + 62 * x2**3 / 2835
    return math.log(x / math.tanh(x))


def loglog_variance(tau: float) -> float:
    """Limiting ``m * relvar`` of the LogLog tau-GRA estimator.

    Evaluated as ``expm1(D + ln(x coth x)) / tau**2`` with
    ``D = ln G(1+2t) - 2 ln G(1+t)`` and ``x = t ln2 / 2``, an exact
    rearrangement whose two terms are each ``O(tau**2)``.
    """
    tau = _check_tau_closed(tau)
    if tau == 0.0:
        return DF_VARIANCE
    s = _gamma_ratio_log(tau) + _log_xcothx(tau * LN2 / 2)
    return math.expm1(s) / tau**2


def pcsa_variance(tau: float) -> float:
    """Limiting ``m * relvar`` of the PCSA tau-GRA estimator (uniform offsets).

    Evaluated as ``ln2 (1 - 2**(-2t)) exp(D) / (2t)``.
    """
    tau = _check_tau_closed(tau)
    if tau == 0.0:
        return LANG_VARIANCE
    a = 2 * tau * LN2
    return LN2 * LN2 * (-math.expm1(-a) / a) * math.exp(_gamma_ratio_log(tau))


def variance(kind: str, tau: float) -> float:
    return loglog_variance(tau) if check_kind(kind) == "loglog" else pcsa_variance(tau)


def log_loglog_bias_constant(tau: float) -> float:
    tau = _check_tau_open(tau)
    a = tau * LN2
    return (lgamma1p(tau) + math.log(-math.expm1(-a) / a)) / tau


def loglog_bias_constant(tau: float) -> float:
    """``(G(t) (1 - 2**-t) / ln 2) ** (1/t)``; tends to ``exp(-gamma)/sqrt(2)`` as t -> 0."""
    return math.exp(log_loglog_bias_constant(tau))


def log_pcsa_bias_constant(tau: float) -> float:
    tau = _check_tau_open(tau)
    return (lgamma1p(tau) - math.log(tau * LN2)) / tau


def pcsa_bias_constant(tau: float) -> float:
    """``(G(t) / ln 2) ** (1/t)``.

    Grows like ``(t ln2)**(-1/t)`` and overflows below t ~ 0.004; estimators
    use :func:`log_pcsa_bias_constant`.
    """
    try:
        return math.exp(log_pcsa_bias_constant(tau))
    except OverflowError:
        return math.inf


LOGLOG_CRAMER_RAO = LN2 / (math.pi**2 / 6 - 1)
PCSA_CRAMER_RAO = 6 * LN2 / math.pi**2


def cramer_rao(kind: str) -> float:
    """Reference lower bound on ``m * relvar`` for the given sketch."""
    return LOGLOG_CRAMER_RAO if check_kind(kind) == "loglog" else PCSA_CRAMER_RAO


_INV_PHI = (math.sqrt(5) - 1) / 2

DEFAULT_TAU_RANGE = {"loglog": (0.1, 3.0), "pcsa": (0.05, 3.0)}


def golden_section_minimize(f, lo, hi, tol=1e-8, *, prescan=64, max_iter=500):
    """Minimize a scalar function on [lo, hi].

    A coarse grid locates the best bracket first, so a function that is
    not unimodal on the whole interval still converges to its grid-best
    local minimum.  Returns ``(x_min, f_min)``.
    """
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise InvalidParameterError(f"need finite lo < hi, got [{lo}, {hi}]")
    if tol < 1e-8:
        raise InvalidParameterError(f"tol must be >= 1e-8, got {tol}")

    def fv(x):
        y = f(x)
        if not math.isfinite(y):
            raise NumericalFailureError(f"objective is not finite at {x!r}: {y!r}")
        return y

    step = (hi - lo) / prescan
    grid = [lo + i * step for i in range(prescan + 1)]
    vals = [fv(x) for x in grid]
    k = min(range(len(vals)), key=vals.__getitem__)
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, prescan)]

    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fv(c), fv(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fv(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fv(d)
    x = (a + b) / 2
    return x, fv(x)


def optimize_tau(kind, lo=None, hi=None, tol=1e-8):
    """Find the tau minimizing the limiting variance.

    ``kind`` is ``"loglog"``, ``"pcsa"`` or any callable ``tau -> variance``.
    """
    if callable(kind):
        f = kind
        if lo is None or hi is None:
            raise InvalidParameterError("lo and hi are required for a custom curve")
    else:
        kind = check_kind(kind)
        f = loglog_variance if kind == "loglog" else pcsa_variance
        dlo, dhi = DEFAULT_TAU_RANGE[kind]
        lo = dlo if lo is None else lo
        hi = dhi if hi is None else hi
        if not 0 < lo < hi <= MAX_TAU:
            raise InvalidParameterError(f"need 0 < lo < hi <= {MAX_TAU:g}, got [{lo}, {hi}]")
    return golden_section_minimize(f, lo, hi, tol)


@dataclass
class VarianceCurve:
    kind: str
    points: list = field(default_factory=list)
    tau_star: float = math.nan
    v_star: float = math.nan

    @property
    def cramer_rao(self) -> float:
        return cramer_rao(self.kind)


def variance_curve(kind, lo=0.0, hi=3.0, steps=301) -> VarianceCurve:
    """Sample the variance curve on an even grid of ``steps`` points."""
    kind = check_kind(kind)
    if steps < 2:
        raise InvalidParameterError("steps must be >= 2")
    _check_tau_closed(lo)
    _check_tau_closed(hi)
    if not lo < hi:
        raise InvalidParameterError(f"need lo < hi, got [{lo}, {hi}]")
    f = loglog_variance if kind == "loglog" else pcsa_variance
    taus = [lo + (hi - lo) * i / (steps - 1) for i in range(steps)]
    tau_star, v_star = optimize_tau(kind)
    return VarianceCurve(kind, [(t, f(t)) for t in taus], tau_star, v_star)


# Defaults used when the caller gives no tau.
TAU_STAR = {k: optimize_tau(k)[0] for k in ("loglog", "pcsa")}
