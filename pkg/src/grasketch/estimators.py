"""Generalized remaining area (tau-GRA) of a sketch and the cardinality estimators built on it.

For a LogLog sketch the statistic is the per-subsketch mean of the whole
column remaining area raised to ``tau``, ``mean_i 2**(-tau (R_i + X_i))``.
For PCSA it is the total over free cells ``sum_i sum_{free j} 2**(-tau (j + R_i))``,
with the cells above the 64-bit word closed off as a geometric tail.

Estimators are evaluated in log space.  The array helpers at the bottom
take per-trial summaries and are shared with the simulation harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import analysis
from ._validation import check_kind, check_tau
from .exceptions import EmptySketchError, InvalidParameterError
from .sketch import EMPTY, PCSA_WIDTH, LogLogSketch, PCSASketch

ESTIMATOR_IDS = ("tau_gra", "df", "ffgm", "lang", "fm")

LN2 = analysis.LN2
KAPPA_DF = math.exp(-analysis.EULER_GAMMA) / math.sqrt(2.0)
KAPPA_LANG = math.exp(-analysis.EULER_GAMMA) * math.sqrt(2.0)
# From `grasketch calibrate --estimator fm --m 1024 --trials 10000 --seed 0`
# (stderr 1.6e-4); z is 1-based, so this is about 1 / (2 * 0.7735).
KAPPA_FM = 0.6460836


@dataclass(frozen=True)
class GraStatistic:
    tau: float
    value: float
    kind: str

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidParameterError(f"tau must be positive, got {self.tau!r}")
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise InvalidParameterError(f"GRA value must be finite and >= 0, got {self.value!r}")
        check_kind(self.kind)


@dataclass(frozen=True)
class Estimate:
    """A cardinality estimate.

    ``low_confidence`` marks estimates computed from an empty sketch, where
    the asymptotic analysis says nothing.
    """

    lambda_hat: float
    estimator_id: str
    m: int
    tau: Optional[float] = None
    low_confidence: bool = False

    def __float__(self):
        return float(self.lambda_hat)

    def as_dict(self):
        return {
            "lambda_hat": self.lambda_hat,
            "estimator": self.estimator_id,
            "m": self.m,
            "tau": self.tau,
            "low_confidence": self.low_confidence,
        }


def _require(sketch, cls):
    if not isinstance(sketch, cls):
        raise InvalidParameterError(f"expected a {cls.__name__}, got {type(sketch).__name__}")


def _loglog_heights(sketch, empty_as_zero):
    """``R_i + X_i`` per subsketch; EMPTY registers are refused unless opted in."""
    _require(sketch, LogLogSketch)
    regs = sketch.registers.astype(np.float64)
    n_empty = int(np.count_nonzero(sketch.registers == EMPTY))
    if n_empty and not empty_as_zero:
        raise EmptySketchError(
            f"{n_empty} of {sketch.m} registers are EMPTY; pass empty_as_zero=True to "
            "treat them as X=0"
        )
    return sketch.offsets.values + regs


def _pcsa_free_exponents(sketch):
    """Free mask (m, 64) and cell heights ``j + R_i`` for cells 1..64."""
    _require(sketch, PCSASketch)
    free = ~sketch.occupancy()
    heights = np.arange(1, PCSA_WIDTH + 1)[None, :] + sketch.offsets.values[:, None]
    return free, heights


# --- statistics ----------------------------------------------------------


def log2_mean_exp2(t, axis=-1):
    """``log2(mean(2**t))`` along ``axis`` without overflow or underflow."""
    t = np.asarray(t, dtype=np.float64)
    mx = np.max(t, axis=axis, keepdims=True)
    out = np.log2(np.mean(np.exp2(t - mx), axis=axis)) + np.squeeze(mx, axis=axis)
    return out


def loglog_log2_gra(heights, tau):
    """``log2 mean_i 2**(-tau h_i)`` over the last axis of ``heights``."""
    return log2_mean_exp2(-tau * np.asarray(heights, dtype=np.float64))


def _geometric_tail_log2(tau):
    """``log2(sum_{k>=1} 2**(-tau k)) = log2(q / (1 - q))`` with ``q = 2**-tau``."""
    return -tau - math.log2(-math.expm1(-tau * LN2))


def pcsa_log2_gra(free, heights, top, tau):
    """``log2`` of the PCSA tau-GRA total.

    ``free`` and ``heights`` have shape (..., m, W); ``top`` (shape (..., m)
    or scalar) is the height of the last explicit cell, above which every
    cell counts as free.
    """
    heights = np.asarray(heights, dtype=np.float64)
    t = np.where(free, -tau * heights, -np.inf)
    tail = -tau * np.asarray(top, dtype=np.float64) + _geometric_tail_log2(tau)
    tail = np.broadcast_to(tail, t.shape[:-1])
    t = np.concatenate([t.reshape(*t.shape[:-2], -1), tail], axis=-1)
    # log2 of the sum, not the mean
    return log2_mean_exp2(t) + math.log2(t.shape[-1])


def gra_loglog(sketch: LogLogSketch, tau: float, *, empty_as_zero: bool = False) -> float:
    """``mean_i 2**(-tau (R_i + X_i))``."""
    tau = check_tau(tau)
    return float(np.exp2(loglog_log2_gra(_loglog_heights(sketch, empty_as_zero), tau)))


def _pcsa_log2_area(sketch, tau):
    free, heights = _pcsa_free_exponents(sketch)
    return float(pcsa_log2_gra(free, heights, PCSA_WIDTH + sketch.offsets.values, tau))


def gra_pcsa(sketch: PCSASketch, tau: float) -> float:
    """Total tau-GRA ``A`` over every free cell, including the tail above cell 64."""
    tau = check_tau(tau)
    return float(np.exp2(_pcsa_log2_area(sketch, tau)))


def gra_statistic(sketch, tau, *, empty_as_zero=False) -> GraStatistic:
    if sketch.kind == "loglog":
        return GraStatistic(float(tau), gra_loglog(sketch, tau, empty_as_zero=empty_as_zero), "loglog")
    return GraStatistic(float(tau), gra_pcsa(sketch, tau), "pcsa")


# --- formulas on summaries (array friendly) -----------------------------------


def loglog_lambda(log2_gra, m, tau):
    """Invert the LogLog statistic: ``m c(tau) G**(-1/tau)`` with G its per-subsketch mean."""
    log_c = analysis.log_loglog_bias_constant(tau)
    return np.exp(math.log(m) + log_c - LN2 * np.asarray(log2_gra) / tau)


def pcsa_lambda(log2_area, m, tau):
    """Invert the PCSA statistic: ``m c(tau) (A / m)**(-1/tau)``."""
    log_c = analysis.log_pcsa_bias_constant(tau)
    return np.exp(math.log(m) + log_c - LN2 * (np.asarray(log2_area) - math.log2(m)) / tau)


def df_lambda(mean_height, m):
    return KAPPA_DF * m * np.exp2(np.asarray(mean_height))


def lang_lambda(mean_ones, mean_offset, m):
    return KAPPA_LANG * m * np.exp2(np.asarray(mean_ones) + mean_offset)


def fm_lambda(mean_first_zero, mean_offset, m, kappa=None):
    kappa = KAPPA_FM if kappa is None else kappa
    return kappa * m * np.exp2(np.asarray(mean_first_zero) + mean_offset)


# --- estimators ------------------------------------------------------------


def estimate_loglog_gra(sketch: LogLogSketch, tau: float, *, empty_as_zero: bool = False) -> Estimate:
    tau = check_tau(tau)
    lg = loglog_log2_gra(_loglog_heights(sketch, empty_as_zero), tau)
    return Estimate(float(loglog_lambda(lg, sketch.m, tau)), "tau_gra", sketch.m, tau)


def estimate_pcsa_gra(sketch: PCSASketch, tau: float) -> Estimate:
    tau = check_tau(tau)
    la = _pcsa_log2_area(sketch, tau)
    return Estimate(float(pcsa_lambda(la, sketch.m, tau)), "tau_gra", sketch.m, tau, sketch.is_empty)


def estimate_ffgm(sketch: LogLogSketch, *, empty_as_zero: bool = False) -> Estimate:
    """Harmonic-mean estimator; the tau = 1 member of the LogLog family."""
    est = estimate_loglog_gra(sketch, 1.0, empty_as_zero=empty_as_zero)
    return Estimate(est.lambda_hat, "ffgm", est.m, 1.0)


def estimate_df(sketch: LogLogSketch, *, empty_as_zero: bool = False) -> Estimate:
    """Geometric-mean estimator, the tau -> 0 limit of the LogLog family."""
    h = _loglog_heights(sketch, empty_as_zero)
    return Estimate(float(df_lambda(np.mean(h), sketch.m)), "df", sketch.m, 0.0)


def ones_count(bitmaps) -> np.ndarray:
    """Set bits per 64-bit word."""
    b = np.asarray(bitmaps, dtype=np.uint64)
    return np.unpackbits(b.view(np.uint8).reshape(*b.shape, 8), axis=-1).sum(axis=-1)


def first_zero(bitmaps) -> np.ndarray:
    """1-based position of the least significant zero bit (65 for a full word)."""
    b = np.asarray(bitmaps, dtype=np.uint64)
    low = ~b & (b + np.uint64(1))  # isolates the lowest zero bit; 0 when b is all ones
    _, e = np.frexp(low.astype(np.float64))
    return np.where(low == 0, PCSA_WIDTH + 1, e).astype(np.int64)


def estimate_lang(sketch: PCSASketch) -> Estimate:
    """Coupon-collector estimator from the number of occupied cells, the tau -> 0 limit for PCSA."""
    _require(sketch, PCSASketch)
    ones = ones_count(sketch.bitmaps)
    lam = lang_lambda(np.mean(ones), sketch.offsets.mean, sketch.m)
    return Estimate(float(lam), "lang", sketch.m, 0.0, sketch.is_empty)


def estimate_fm(sketch: PCSASketch, *, kappa: Optional[float] = None) -> Estimate:
    """First-zero estimator ``kappa m 2**(mean z + mean R)``."""
    _require(sketch, PCSASketch)
    z = first_zero(sketch.bitmaps)
    lam = fm_lambda(np.mean(z), sketch.offsets.mean, sketch.m, kappa)
    return Estimate(float(lam), "fm", sketch.m, None, sketch.is_empty)


_ALIASES = {"tau-gra": "tau_gra", "tau_gra": "tau_gra", "gra": "tau_gra"}


def normalize_estimator(name) -> str:
    key = _ALIASES.get(name, name)
    if key not in ESTIMATOR_IDS:
        raise InvalidParameterError(
            f"estimator must be one of tau-gra, df, ffgm, lang, fm; got {name!r}"
        )
    return key


_VALID_FOR = {
    "loglog": ("tau_gra", "df", "ffgm"),
    "pcsa": ("tau_gra", "lang", "fm"),
}


def check_estimator_for(kind, estimator) -> str:
    estimator = normalize_estimator(estimator)
    if estimator not in _VALID_FOR[check_kind(kind)]:
        raise InvalidParameterError(
            f"estimator {estimator!r} does not apply to {kind} sketches "
            f"(choose from {', '.join(_VALID_FOR[kind])})"
        )
    return estimator


def estimate(sketch, estimator="tau_gra", tau=None, *, empty_as_zero=False) -> Estimate:
    """Dispatch to the named estimator.

    ``tau=None`` uses the variance-minimizing exponent for the sketch kind;
    ``tau=0`` selects the limiting estimator (DF for LogLog, Lang for PCSA).
    """
    estimator = check_estimator_for(sketch.kind, estimator)
    if estimator == "tau_gra":
        tau = analysis.TAU_STAR[sketch.kind] if tau is None else check_tau(tau, allow_zero=True)
        if tau == 0:
            estimator = "df" if sketch.kind == "loglog" else "lang"
    if estimator == "tau_gra":
        if sketch.kind == "loglog":
            return estimate_loglog_gra(sketch, tau, empty_as_zero=empty_as_zero)
        return estimate_pcsa_gra(sketch, tau)
    if estimator == "df":
        return estimate_df(sketch, empty_as_zero=empty_as_zero)
    if estimator == "ffgm":
        return estimate_ffgm(sketch, empty_as_zero=empty_as_zero)
    if estimator == "lang":
        return estimate_lang(sketch)
    return estimate_fm(sketch)
