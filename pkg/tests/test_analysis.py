import math

import mpmath as mp
import numpy as np
import pytest

from grasketch import analysis
from grasketch.exceptions import InvalidParameterError, NumericalFailureError

mp.mp.dps = 40
L = mp.log(2)


def mp_loglog_variance(t):
    t = mp.mpf(t)
    return (mp.gamma(2 * t) * L / mp.gamma(t) ** 2 * (1 + 2**-t) / (1 - 2**-t) - 1) / t**2


def mp_pcsa_variance(t):
    t = mp.mpf(t)
    return (1 - 2 ** (-2 * t)) * mp.gamma(2 * t) * L / (t**2 * mp.gamma(t) ** 2)


def test_gamma_examples():
    assert analysis.gamma_fn(1) == pytest.approx(1, rel=1e-14)
    assert analysis.gamma_fn(5) == pytest.approx(24, rel=1e-13)
    assert analysis.gamma_fn(0.5) == pytest.approx(1.772453850905516, rel=1e-13)


def test_gamma_against_mpmath():
    for x in np.concatenate([np.geomspace(1e-6, 1, 40), np.linspace(1, 35, 80)]):
        assert analysis.gamma_fn(x) == pytest.approx(float(mp.gamma(mp.mpf(float(x)))), rel=1e-12)


def test_gamma_recurrence():
    for x in np.linspace(0.01, 33.9, 200):
        assert analysis.gamma_fn(x + 1) == pytest.approx(x * analysis.gamma_fn(x), rel=1e-11)


def test_gamma_domain():
    for bad in (0.0, -1.0, 35.01):
        with pytest.raises(InvalidParameterError):
            analysis.gamma_fn(bad)


def test_lgamma1p_small_argument():
    for x in (1e-9, -1e-7, 0.01, 0.049, 0.06, 2.0):
        assert analysis.lgamma1p(x) == pytest.approx(float(mp.loggamma(1 + mp.mpf(x))), rel=1e-12)


def test_variance_constants():
    assert analysis.loglog_variance(1) == pytest.approx(3 * math.log(2) - 1, abs=1e-12)
    assert analysis.pcsa_variance(1) == pytest.approx(0.75 * math.log(2), abs=1e-12)
    assert analysis.loglog_variance(0) == pytest.approx((2 * math.pi**2 + math.log(2) ** 2) / 12, abs=1e-15)
    assert analysis.pcsa_variance(0) == pytest.approx(math.log(2) ** 2, abs=1e-15)
    assert analysis.loglog_variance(0.889897) == pytest.approx(1.07507, abs=1e-5)
    assert analysis.pcsa_variance(0.343557) == pytest.approx(0.435532, abs=1e-6)


@pytest.mark.parametrize("kind", ["loglog", "pcsa"])
def test_variance_against_mpmath(kind):
    f = analysis.loglog_variance if kind == "loglog" else analysis.pcsa_variance
    g = mp_loglog_variance if kind == "loglog" else mp_pcsa_variance
    for t in np.geomspace(1e-7, 16, 300):
        assert f(t) == pytest.approx(float(g(float(t))), rel=1e-9)


@pytest.mark.parametrize("kind", ["loglog", "pcsa"])
def test_continuity_at_zero(kind):
    f = analysis.loglog_variance if kind == "loglog" else analysis.pcsa_variance
    # the slope at 0 is O(1), so compare at a point where it contributes < 1e-6
    assert abs(f(1e-7) - f(0)) < 1e-6
    assert abs(f(1e-4) - f(0)) < 5e-4
    for t in (9.9999e-5, 1e-4, 1.00001e-4, 0.0249, 0.025, 0.0251):
        assert f(t) == pytest.approx(float((mp_loglog_variance if kind == "loglog" else mp_pcsa_variance)(t)), rel=1e-10)


def test_negative_tau_rejected():
    for f in (analysis.loglog_variance, analysis.pcsa_variance):
        with pytest.raises(InvalidParameterError):
            f(-0.1)
        with pytest.raises(InvalidParameterError):
            f(16.5)


def test_bias_constants():
    assert analysis.loglog_bias_constant(1) == pytest.approx(1 / (2 * math.log(2)), rel=1e-13)
    kdf = math.exp(-analysis.EULER_GAMMA) / math.sqrt(2)
    assert abs(analysis.loglog_bias_constant(1e-6) - kdf) < 1e-4
    assert analysis.loglog_bias_constant(2) == pytest.approx(math.sqrt(0.75 / math.log(2)), rel=1e-13)
    assert analysis.pcsa_bias_constant(1) == pytest.approx(1 / math.log(2), rel=1e-13)
    assert analysis.pcsa_bias_constant(2) == pytest.approx(math.sqrt(1 / math.log(2)), rel=1e-13)
    t = mp.mpf("0.343557")
    assert analysis.pcsa_bias_constant(0.343557) == pytest.approx(float((mp.gamma(t) / L) ** (1 / t)), rel=1e-12)
    for tau in (1e-3, 0.1, 0.5, 3.0, 16.0):
        t = mp.mpf(tau)
        ref = (mp.gamma(t) * (1 - 2**-t) / L) ** (1 / t)
        assert analysis.loglog_bias_constant(tau) == pytest.approx(float(ref), rel=1e-11)
    assert analysis.pcsa_bias_constant(1e-4) == math.inf
    with pytest.raises(InvalidParameterError):
        analysis.loglog_bias_constant(0)


def test_optimize_tau_matches_reference_minima():
    t, v = analysis.optimize_tau("loglog", 0.1, 3)
    assert t == pytest.approx(0.889897, abs=1e-6)
    assert v == pytest.approx(1.07507, abs=1e-5)
    t, v = analysis.optimize_tau("pcsa", 0.05, 3)
    assert t == pytest.approx(0.343557, abs=1e-6)
    assert v == pytest.approx(0.435532, abs=1e-6)


def test_optimize_tau_against_mpmath_argmin():
    for kind, f, guess in (("loglog", mp_loglog_variance, 0.89), ("pcsa", mp_pcsa_variance, 0.34)):
        ref = mp.findroot(lambda x: mp.diff(f, x), guess)
        assert analysis.optimize_tau(kind)[0] == pytest.approx(float(ref), abs=1e-6)


def test_optimizer_synthetic_and_errors():
    t, v = analysis.optimize_tau(lambda x: (x - 1) ** 2 + 1, 0, 3)
    assert t == pytest.approx(1, abs=1e-7) and v == pytest.approx(1, abs=1e-12)
    # two local minima: the grid pre-scan finds the better one
    t, _ = analysis.golden_section_minimize(lambda x: min((x - 0.5) ** 2 + 0.1, (x - 2.5) ** 2), 0, 3)
    assert t == pytest.approx(2.5, abs=1e-6)
    with pytest.raises(NumericalFailureError):
        analysis.golden_section_minimize(lambda x: math.nan, 0, 1)
    with pytest.raises(InvalidParameterError):
        analysis.optimize_tau("loglog", tol=1e-9)
    with pytest.raises(InvalidParameterError):
        analysis.optimize_tau("loglog", 2, 1)


def test_cramer_rao_constants_and_ordering():
    assert analysis.cramer_rao("loglog") == pytest.approx(1.07475, abs=1e-4)
    assert analysis.cramer_rao("pcsa") == pytest.approx(0.42138, abs=1e-4)
    for kind in ("loglog", "pcsa"):
        assert analysis.cramer_rao(kind) < analysis.optimize_tau(kind)[1]


@pytest.mark.parametrize("kind", ["loglog", "pcsa"])
def test_variance_curve_invariants(kind):
    curve = analysis.variance_curve(kind, 0.05, 3, 500)
    vs = np.array([v for _, v in curve.points])
    assert len(curve.points) == 500
    assert np.all(vs > 0)
    assert np.all(curve.v_star <= vs + 1e-15)
    assert np.all(vs > curve.cramer_rao)
    full = analysis.variance_curve(kind)
    assert full.points[0] == (0.0, analysis.variance(kind, 0))
