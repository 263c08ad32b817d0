"""Mergeable PCSA and LogLog cardinality sketches with tau-GRA estimators."""

from .analysis import (
    TAU_STAR,
    cramer_rao,
    gamma_fn,
    loglog_bias_constant,
    loglog_variance,
    optimize_tau,
    pcsa_bias_constant,
    pcsa_variance,
    variance_curve,
)
from .estimator import CardinalityEstimator
from .estimators import (
    Estimate,
    GraStatistic,
    estimate,
    estimate_df,
    estimate_ffgm,
    estimate_fm,
    estimate_lang,
    estimate_loglog_gra,
    estimate_pcsa_gra,
    gra_loglog,
    gra_pcsa,
)
from .exceptions import (
    CorruptSketchError,
    EmptySketchError,
    GraSketchError,
    IncompatibleSketchError,
    InvalidParameterError,
    InvalidWindowError,
    NumericalFailureError,
)
from .hashing import HashedItem, cell_index, hash64, split
from .poisson_sim import SimConfig, SimReport
from .sketch import LogLogSketch, OffsetVector, PCSASketch, deserialize, merge, new_sketch, serialize

__version__ = "0.1.0"
