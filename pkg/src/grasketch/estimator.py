"""scikit-learn style front end for building a sketch and reading off a cardinality."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import estimators
from ._validation import check_kind, check_m, check_seed, check_smoothing, check_tau
from .sketch import deserialize, merge, new_sketch, serialize


class CardinalityEstimator(BaseEstimator):
    """Count distinct keys with a PCSA or LogLog sketch.

    ``fit`` consumes a 1-D collection of keys (bytes, str, or integers);
    ``partial_fit`` keeps adding to the same sketch, and ``estimate`` returns
    the cardinality as an :class:`~grasketch.estimators.Estimate`.

    Parameters
    ----------
    sketch : {"loglog", "pcsa"}
    m : int
        Number of subsketches.
    tau : float or None
        GRA exponent; None picks the variance-minimizing value, 0 picks the
        limiting estimator (DF or Lang).
    estimator : {"tau-gra", "df", "ffgm", "lang", "fm"}
    smoothing : {"none", "random", "uniform"} or None
        None means random for LogLog and uniform for PCSA.
    seed : int
    empty_as_zero : bool
        Let LogLog estimators read EMPTY registers as X = 0.
    """

    def __init__(
        self,
        sketch="loglog",
        m=4096,
        tau=None,
        estimator="tau-gra",
        smoothing=None,
        seed=0,
        empty_as_zero=False,
    ):
        self.sketch = sketch
        self.m = m
        self.tau = tau
        self.estimator = estimator
        self.smoothing = smoothing
        self.seed = seed
        self.empty_as_zero = empty_as_zero

    def _validate_params(self):
        check_kind(self.sketch)
        check_m(self.m)
        check_seed(self.seed)
        if self.smoothing is not None:
            check_smoothing(self.smoothing)
        if self.tau is not None:
            check_tau(self.tau, allow_zero=True)
        estimators.check_estimator_for(self.sketch, self.estimator)

    def _new(self):
        return new_sketch(self.sketch, self.m, self.smoothing, self.seed)

    def fit(self, X, y=None):
        """Build a fresh sketch from the keys in ``X``."""
        self._validate_params()
        self.sketch_ = self._new()
        self.sketch_.update(_keys(X))
        return self

    def partial_fit(self, X, y=None):
        if not hasattr(self, "sketch_"):
            self._validate_params()
            self.sketch_ = self._new()
        self.sketch_.update(_keys(X))
        return self

    def estimate(self):
        check_is_fitted(self, "sketch_")
        return estimators.estimate(
            self.sketch_, self.estimator, self.tau, empty_as_zero=self.empty_as_zero
        )

    @property
    def cardinality_(self):
        return self.estimate().lambda_hat

    def merge(self, other):
        """New fitted estimator whose sketch is the union of both."""
        check_is_fitted(self, "sketch_")
        check_is_fitted(other, "sketch_")
        out = type(self)(**self.get_params())
        out.sketch_ = merge(self.sketch_, other.sketch_)
        return out

    def to_bytes(self):
        check_is_fitted(self, "sketch_")
        return serialize(self.sketch_)

    @classmethod
    def from_bytes(cls, data, **params):
        sk = deserialize(data)
        params.setdefault("sketch", sk.kind)
        params.setdefault("m", sk.m)
        params.setdefault("seed", sk.seed)
        params.setdefault("smoothing", sk.offsets.mode)
        out = cls(**params)
        out._validate_params()
        out.sketch_ = sk
        return out

    def __sklearn_is_fitted__(self):
        return hasattr(self, "sketch_")


def _keys(X):
    if isinstance(X, np.ndarray):
        if X.ndim == 2 and X.shape[1] == 1:
            X = X[:, 0]
        if X.ndim != 1:
            raise ValueError(f"expected a 1-D collection of keys, got shape {X.shape}")
        if X.dtype.kind in "iu":
            return X
        return X.tolist()
    return X
