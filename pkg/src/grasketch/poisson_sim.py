"""Smoothed, Poissonized, infinite dartboard as a Monte Carlo model.

Each subsketch column has cells indexed by every integer ``j``; cell ``j``
of subsketch ``i`` has size ``2**-(j + R_i) / m`` and, with ``lambda``
darts thrown as a Poisson process, is free independently with probability
``exp(-(lambda / m) 2**-(j + R_i))``.

Two samplers are provided:

* LogLog registers by inversion of their closed-form CDF (no window).
* A per-cell Bernoulli oracle on a finite index window.  Cells below the
  window count as occupied and cells above it as free.  The default window
  is the smallest one whose edge cells are decided with probability
  ``1 - 1e-12`` for every offset.

Trials are seeded individually from the master seed, so any split of the
work (``n_jobs``) reproduces the serial result exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import analysis, estimators, hashing
from ._validation import (
    check_kind,
    check_m,
    check_positive_int,
    check_seed,
    check_smoothing,
    check_tau,
)
from .exceptions import InvalidParameterError, InvalidWindowError
from .sketch import new_sketch

GUARD_PROB = 1e-12
# With c = log2(lambda/m), a cell j outside [c - _BELOW, c + _ABOVE - 1] is
# occupied (below) or free (above) with probability >= 1 - GUARD_PROB for
# every offset in [0, 1).
_BELOW = math.log2(-math.log(GUARD_PROB))
_ABOVE = -math.log2(-math.log1p(-GUARD_PROB))
_CHUNK = 64


# --- configuration and report ---------------------------------------------


@dataclass
class SimConfig:
    kind: str = "loglog"
    m: int = 1024
    lam: float = 1.0
    tau: float = 1.0
    trials: int = 1000
    seed: int = 0
    smoothing: Optional[str] = None
    index_window: Optional[tuple] = None
    estimator: str = "tau_gra"

    def __post_init__(self):
        self.kind = check_kind(self.kind)
        self.m = check_m(self.m)
        self.lam = float(self.lam)
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InvalidParameterError(f"lambda must be positive and finite, got {self.lam!r}")
        self.tau = check_tau(self.tau, allow_zero=True)
        self.trials = check_positive_int(self.trials, "trials")
        self.seed = check_seed(self.seed)
        if self.smoothing is None:
            self.smoothing = "random" if self.kind == "loglog" else "uniform"
        self.smoothing = check_smoothing(self.smoothing)
        self.estimator = estimators.check_estimator_for(self.kind, self.estimator)
        if self.index_window is None:
            self.index_window = default_window(self.m, self.lam)
        self.index_window = tuple(int(j) for j in self.index_window)
        check_window(self.m, self.lam, self.index_window)

    def as_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["index_window"] = list(self.index_window)
        return d


@dataclass
class SimReport:
    """Empirical summary of a batch of trials.

    For estimator runs the statistic is ``lambda_hat / lambda`` and
    ``empirical_relvar_times_m`` is ``m Var(lambda_hat) / lambda**2``.  For
    GRA moment runs the statistic is the normalized GRA and the same field
    holds ``m`` times its variance.
    """

    statistic: str
    empirical_mean: float
    predicted_mean: Optional[float]
    empirical_relvar_times_m: float
    predicted: Optional[float]
    trials: int
    stderr_of_estimate: float
    stderr_of_relvar: float
    config: dict = field(default_factory=dict)

    @property
    def mean_z(self) -> float:
        """``(empirical_mean - predicted_mean) / stderr``."""
        return (self.empirical_mean - self.predicted_mean) / self.stderr_of_estimate

    @property
    def relvar_z(self) -> float:
        return (self.empirical_relvar_times_m - self.predicted) / self.stderr_of_relvar

    @property
    def relvar_ratio(self) -> float:
        return self.empirical_relvar_times_m / self.predicted

    def as_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)

    CSV_FIELDS = (
        "statistic",
        "kind",
        "estimator",
        "m",
        "lambda",
        "tau",
        "trials",
        "seed",
        "empirical_mean",
        "predicted_mean",
        "stderr_of_estimate",
        "empirical_relvar_times_m",
        "predicted",
        "stderr_of_relvar",
    )

    def csv_row(self) -> dict:
        c = self.config
        row = {k: c.get(k) for k in ("kind", "estimator", "m", "lambda", "tau", "trials", "seed")}
        row.update({k: getattr(self, k) for k in self.CSV_FIELDS if hasattr(self, k)})
        return row

    def to_csv(self, header=True) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.CSV_FIELDS, lineterminator="\n")
        if header:
            w.writeheader()
        w.writerow(self.csv_row())
        return buf.getvalue()


# --- windows and seeds ---------------------------------------------------------


def default_window(m, lam):
    """Smallest window passing :func:`check_window`."""
    c = math.log2(lam / m)
    return math.floor(c - _BELOW), math.ceil(c + _ABOVE) - 1


def check_window(m, lam, window):
    j_lo, j_hi = window
    if not j_lo < j_hi:
        raise InvalidWindowError(f"need j_lo < j_hi, got {window}")
    c = math.log2(lam / m)
    # first cells outside the window, worst case over offsets:
    # j_lo - 1 with R -> 1 and j_hi + 1 with R = 0
    p_free_below = math.exp(-(2.0 ** (c - j_lo)))
    p_occ_above = -math.expm1(-(2.0 ** (c - (j_hi + 1))))
    if p_free_below > GUARD_PROB * (1 + 1e-9) or p_occ_above > GUARD_PROB * (1 + 1e-9):
        lo, hi = default_window(m, lam)
        raise InvalidWindowError(
            f"window {window} truncates cells decided with probability below 1 - {GUARD_PROB:g}; "
            f"it must contain [{lo}, {hi}]"
        )


def trial_seed(master_seed, index) -> int:
    return hashing.hash64(int(index).to_bytes(8, "little"), master_seed)


def trial_rng(master_seed, index):
    return np.random.default_rng(trial_seed(master_seed, index))


def draw_offsets(mode, m, rng):
    """Offsets for one trial: fresh uniform draws in random mode."""
    if mode == "random":
        return rng.random(m)
    if mode == "uniform":
        return np.arange(m) / m
    return np.zeros(m)


# --- samplers ------------------------------------------------------------------


def register_from_exponential(e, lam, m, offsets):
    """Register value with ``P(X <= x) = exp(-(lam/m) 2**-(x+R))`` given ``E = -ln U``."""
    return np.ceil(np.log2(lam / (m * np.asarray(e))) - offsets).astype(np.int64)


def sample_loglog_registers(m, lam, offsets, rng):
    """Highest occupied cell per subsketch on the infinite board (values in Z)."""
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam!r}")
    offsets = np.asarray(offsets, dtype=np.float64)
    e = rng.standard_exponential(offsets.shape[-1] if offsets.ndim else m)
    return register_from_exponential(e, lam, m, offsets)


@dataclass
class CellState:
    """Occupancy of window cells; column ``k`` is cell ``j_lo + k``."""

    occupied: np.ndarray
    offsets: np.ndarray
    window: tuple
    _free: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)

    @property
    def cells(self):
        return np.arange(self.window[0], self.window[1] + 1)

    def registers(self):
        """Highest occupied cell; ``j_lo - 1`` when the whole window is free."""
        occ = self.occupied
        top = occ.shape[-1] - 1 - np.argmax(occ[..., ::-1], axis=-1)
        return np.where(occ.any(axis=-1), self.window[0] + top, self.window[0] - 1)

    def ones(self):
        """Occupied cells counted against the all-cells-below-1-occupied baseline."""
        j = self.cells
        w = self.occupied.astype(np.int64) - (j <= 0)
        lo, hi = self.window
        return w.sum(axis=-1) + max(0, lo - 1) - max(0, -hi)

    def first_zero(self):
        free = ~self.occupied
        idx = np.argmax(free, axis=-1)
        return np.where(free.any(axis=-1), self.window[0] + idx, self.window[1] + 1)

    def log2_gra(self, tau):
        """``log2`` of the total tau-GRA including the closed-form tail above the window.

        Works on any leading batch shape.  Heights are measured from ``j_lo``
        so every term lies in ``[2**(-tau W), 1]`` and nothing underflows.
        """
        lo, hi = self.window
        if self._free is None:
            self._free = (~self.occupied).astype(np.float64)
        # 2**(-tau (j - lo + R)) factors into a cell part and an offset part
        per_col = self._free @ np.exp2(-tau * (self.cells - lo))
        scale = np.exp2(-tau * self.offsets)
        tail = np.exp2(-tau * (hi - lo) + estimators._geometric_tail_log2(tau))
        return np.log2(((per_col + tail) * scale).sum(axis=-1)) - tau * lo


def sample_cells_oracle(kind, m, lam, offsets, window, rng):
    """Independent per-cell occupancy on ``window``.

    Returns a :class:`CellState`; for ``kind="loglog"`` the caller usually
    wants ``state.registers()``.
    """
    check_kind(kind)
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam!r}")
    check_window(m, lam, window)
    offsets = np.asarray(offsets, dtype=np.float64)
    return CellState(_sample_occupancy(m, lam, offsets, window, rng), offsets, tuple(window))


def _sample_occupancy(m, lam, offsets, window, rng):
    j = np.arange(window[0], window[1] + 1)
    p_free = np.exp(-(lam / m) * np.exp2(-(j[None, :] + offsets[:, None])))
    return rng.random(p_free.shape) >= p_free


# --- per-trial summaries ----------------------------------------------------------


def _trial_summaries(kind, m, lam, taus, smoothing, window, seed, start, stop):
    """Per-trial sufficient statistics for trials ``start..stop-1``.

    Returns a dict of arrays: ``log2_gra`` (n, len(taus)), plus
    ``mean_height`` (LogLog) or ``mean_ones`` / ``mean_first_zero`` (PCSA),
    and ``mean_offset``.
    """
    n = stop - start
    rngs = [trial_rng(seed, start + k) for k in range(n)]
    offsets = np.stack([draw_offsets(smoothing, m, rng) for rng in rngs])
    out = {"log2_gra": np.empty((n, len(taus))), "mean_offset": offsets.mean(axis=1)}
    if kind == "loglog":
        h = np.stack([sample_loglog_registers(m, lam, r, rng) for r, rng in zip(offsets, rngs)]) + offsets
        out["mean_height"] = h.mean(axis=1)
        for t, tau in enumerate(taus):
            out["log2_gra"][:, t] = estimators.loglog_log2_gra(h, tau)
        return out
    state = CellState(
        np.stack([_sample_occupancy(m, lam, r, window, rng) for r, rng in zip(offsets, rngs)]),
        offsets,
        tuple(window),
    )
    out["mean_ones"] = state.ones().mean(axis=1)
    out["mean_first_zero"] = state.first_zero().mean(axis=1)
    for t, tau in enumerate(taus):
        out["log2_gra"][:, t] = state.log2_gra(tau)
    return out


def simulate_summaries(kind, m, lam, taus, trials, seed, smoothing=None, window=None, n_jobs=1):
    """Run ``trials`` Poissonized trials and return their per-trial summaries.

    The result does not depend on ``n_jobs``: each trial draws from its own
    seeded stream and chunks are concatenated in trial order.
    """
    kind = check_kind(kind)
    m = check_m(m)
    trials = check_positive_int(trials, "trials")
    seed = check_seed(seed)
    smoothing = check_smoothing(smoothing or ("random" if kind == "loglog" else "uniform"))
    taus = [check_tau(t) for t in taus]
    window = default_window(m, lam) if window is None else tuple(window)
    check_window(m, lam, window)
    bounds = [(s, min(s + _CHUNK, trials)) for s in range(0, trials, _CHUNK)]
    args = (kind, m, lam, taus, smoothing, window, seed)
    if n_jobs == 1 or len(bounds) == 1:
        parts = [_trial_summaries(*args, s, e) for s, e in bounds]
    else:
        from joblib import Parallel, delayed

        parts = Parallel(n_jobs=n_jobs)(delayed(_trial_summaries)(*args, s, e) for s, e in bounds)
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


# --- reports -------------------------------------------------------------------


def _mean_var_report(x, m, statistic, predicted_mean, predicted, config):
    """Mean and ``m * variance`` of trial-level values with their standard errors."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    mean = float(np.mean(x))
    var = float(np.var(x, ddof=1)) if n > 1 else math.nan
    se_mean = math.sqrt(var / n) if n > 1 else math.nan
    d2 = (x - mean) ** 2
    se_var = float(np.std(d2, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return SimReport(
        statistic=statistic,
        empirical_mean=mean,
        predicted_mean=predicted_mean,
        empirical_relvar_times_m=m * var,
        predicted=predicted,
        trials=n,
        stderr_of_estimate=se_mean,
        stderr_of_relvar=m * se_var,
        config=config,
    )


def predicted_gra_moments(kind, tau):
    """Closed-form mean and variance of the normalized GRA statistic at any lambda."""
    g1 = analysis.gamma_fn(tau) if tau < 35 else math.inf
    g2 = analysis.gamma_fn(2 * tau) if 2 * tau <= 35 else math.inf
    if kind == "loglog":
        mean = g1 * -math.expm1(-tau * analysis.LN2) / analysis.LN2
        var = g2 * -math.expm1(-2 * tau * analysis.LN2) / analysis.LN2 - mean**2
    else:
        mean = g1 / analysis.LN2
        var = -math.expm1(-2 * tau * analysis.LN2) * g2 / analysis.LN2
    return mean, var


def normalized_gra(kind, log2_gra, m, lam, tau):
    """Scale the raw statistic so its mean is free of m and lambda.

    LogLog: ``(lam/m)**tau`` times the per-subsketch mean.
    PCSA: ``m**-1 (lam/m)**tau`` times the total.
    """
    shift = tau * math.log2(lam / m) - (math.log2(m) if kind == "pcsa" else 0.0)
    return np.exp2(np.asarray(log2_gra) + shift)


def empirical_gra_moments(config: SimConfig, n_jobs=1) -> SimReport:
    """Mean and ``m``-scaled variance of the normalized GRA statistic against the closed forms.

    At ``lambda = 1`` the normalization is ``m**-tau`` (LogLog, per-subsketch
    mean) and ``m**(-1-tau)`` (PCSA, total).
    """
    c = config
    if c.tau == 0:
        raise InvalidParameterError("GRA moments need tau > 0")
    s = simulate_summaries(c.kind, c.m, c.lam, [c.tau], c.trials, c.seed, c.smoothing, c.index_window, n_jobs)
    x = normalized_gra(c.kind, s["log2_gra"][:, 0], c.m, c.lam, c.tau)
    mean, var = predicted_gra_moments(c.kind, c.tau)
    return _mean_var_report(x, c.m, "normalized_gra", mean, var, c.as_dict())


def lambda_hats(kind, estimator, summaries, m, tau_index=0, taus=None):
    """Estimates per trial from :func:`simulate_summaries` output."""
    s = summaries
    if estimator == "tau_gra":
        tau = taus[tau_index]
        lg = s["log2_gra"][:, tau_index]
        return estimators.loglog_lambda(lg, m, tau) if kind == "loglog" else estimators.pcsa_lambda(lg, m, tau)
    if estimator == "df":
        return estimators.df_lambda(s["mean_height"], m)
    if estimator == "ffgm":
        return estimators.loglog_lambda(s["log2_gra"][:, tau_index], m, 1.0)
    if estimator == "lang":
        return estimators.lang_lambda(s["mean_ones"], s["mean_offset"], m)
    return estimators.fm_lambda(s["mean_first_zero"], s["mean_offset"], m)


def _resolve_estimator(kind, estimator, tau):
    """Map ``(estimator, tau)`` to the estimator actually run and its closed-form variance."""
    estimator = estimators.check_estimator_for(kind, estimator)
    if estimator == "tau_gra" and tau == 0:
        estimator = "df" if kind == "loglog" else "lang"
    if estimator == "ffgm":
        tau = 1.0
    if estimator in ("df", "lang"):
        tau = 0.0
    predicted = None if estimator == "fm" else analysis.variance(kind, tau)
    return estimator, tau, predicted


def empirical_estimator_stats(config: SimConfig, n_jobs=1) -> SimReport:
    """Bias and ``m * relvar`` of ``lambda_hat / lambda`` over Poissonized trials."""
    c = config
    estimator, tau, predicted = _resolve_estimator(c.kind, c.estimator, c.tau)
    taus = [tau] if tau > 0 else [1.0]
    s = simulate_summaries(c.kind, c.m, c.lam, taus, c.trials, c.seed, c.smoothing, c.index_window, n_jobs)
    r = lambda_hats(c.kind, estimator, s, c.m, 0, taus) / c.lam
    cfg = c.as_dict()
    cfg.update(estimator=estimator, tau=tau)
    return _mean_var_report(r, c.m, "lambda_hat/lambda", 1.0, predicted, cfg)


def estimator_reports(kind, m, taus, trials, seed, lam=1.0, smoothing=None, n_jobs=1):
    """tau-GRA reports for several exponents from one shared batch of trials."""
    taus = [check_tau(t) for t in taus]
    s = simulate_summaries(kind, m, lam, taus, trials, seed, smoothing, None, n_jobs)
    out = []
    for i, tau in enumerate(taus):
        r = lambda_hats(kind, "tau_gra", s, m, i, taus) / lam
        cfg = SimConfig(kind, m, lam, tau, trials, seed, smoothing).as_dict()
        out.append(_mean_var_report(r, m, "lambda_hat/lambda", 1.0, analysis.variance(kind, tau), cfg))
    return out


def moment_reports(kind, m, taus, trials, seed, lam=1.0, smoothing=None, n_jobs=1):
    """GRA moment reports for several exponents from one shared batch of trials."""
    taus = [check_tau(t) for t in taus]
    s = simulate_summaries(kind, m, lam, taus, trials, seed, smoothing, None, n_jobs)
    out = []
    for i, tau in enumerate(taus):
        x = normalized_gra(kind, s["log2_gra"][:, i], m, lam, tau)
        mean, var = predicted_gra_moments(kind, tau)
        cfg = SimConfig(kind, m, lam, tau, trials, seed, smoothing).as_dict()
        out.append(_mean_var_report(x, m, "normalized_gra", mean, var, cfg))
    return out


@dataclass
class ScaleInvarianceResult:
    lambdas: tuple
    ks_estimate: float
    ks_gra: float
    pvalue_estimate: float
    pvalue_gra: float


def scale_invariance_test(kind, tau, m, lambda_pairs: Sequence, trials, seed=0, n_jobs=1):
    """Two-sample KS statistics comparing both sides of each ``(lambda1, lambda2)`` pair.

    Compares ``lambda_hat / lambda`` and ``lambda**tau * A`` (the GRA scaled
    by ``lambda**tau``).  The two sides use disjoint trial seeds.
    """
    kind = check_kind(kind)
    tau = check_tau(tau)
    seed = check_seed(seed)
    out = []
    for p, (l1, l2) in enumerate(lambda_pairs):
        sides = []
        for side, lam in enumerate((l1, l2)):
            sub = trial_seed(seed, 2 * p + side)
            s = simulate_summaries(kind, m, lam, [tau], trials, sub, n_jobs=n_jobs)
            lg = s["log2_gra"][:, 0]
            r = lambda_hats(kind, "tau_gra", s, m, 0, [tau]) / lam
            sides.append((r, np.exp2(lg + tau * math.log2(lam))))
        ks_e = stats.ks_2samp(sides[0][0], sides[1][0])
        ks_g = stats.ks_2samp(sides[0][1], sides[1][1])
        out.append(
            ScaleInvarianceResult((l1, l2), float(ks_e.statistic), float(ks_g.statistic), float(ks_e.pvalue), float(ks_g.pvalue))
        )
    return out


def calibrate(estimator, m=1024, trials=10000, seed=0, n_jobs=1):
    """Constant ``kappa`` making ``mean(lambda_hat) / lambda = 1`` for Lang or FM.

    Returns ``(kappa, stderr)``.  Runs PCSA with uniform offsets at
    ``lambda = m`` (the model is scale invariant).
    """
    if estimator not in ("fm", "lang"):
        raise InvalidParameterError(f"calibrate supports 'fm' and 'lang', got {estimator!r}")
    m = check_m(m)
    trials = check_positive_int(trials, "trials")
    lam = float(m)
    s = simulate_summaries("pcsa", m, lam, [1.0], trials, seed, "uniform", None, n_jobs)
    key = "mean_first_zero" if estimator == "fm" else "mean_ones"
    raw = m * np.exp2(s[key] + s["mean_offset"]) / lam
    mu = float(np.mean(raw))
    se = float(np.std(raw, ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan
    return 1.0 / mu, se / mu**2


# --- streaming ----------------------------------------------------------------


def streaming_estimates(kind, m, n_keys, trials, estimator="tau_gra", tau=None, seed=0):
    """Estimates from real sketches fed ``n_keys`` distinct integer keys per trial.

    Trial ``t`` uses sketch seed ``trial_seed(seed, t)`` and keys
    ``t * n_keys .. (t + 1) * n_keys - 1``.
    """
    est = []
    for t in range(trials):
        sk = new_sketch(kind, m, seed=trial_seed(seed, t))
        sk.update(np.arange(t * n_keys, (t + 1) * n_keys, dtype=np.uint64))
        est.append(estimators.estimate(sk, estimator, tau).lambda_hat)
    return np.asarray(est)


def streaming_report(kind, m, n_keys, trials, estimator="tau_gra", tau=None, seed=0):
    est_id = estimators.check_estimator_for(kind, estimator)
    tau = analysis.TAU_STAR[kind] if tau is None and est_id == "tau_gra" else tau
    _, tau_used, predicted = _resolve_estimator(kind, est_id, tau if tau is not None else 0.0)
    r = streaming_estimates(kind, m, n_keys, trials, est_id, tau, seed) / n_keys
    cfg = {"kind": kind, "m": m, "lambda": n_keys, "tau": tau_used, "trials": trials, "seed": seed,
           "estimator": est_id, "model": "streaming"}
    return _mean_var_report(r, m, "lambda_hat/lambda", 1.0, predicted, cfg)
