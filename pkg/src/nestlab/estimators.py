"""scikit-learn style wrappers.

These are thin: the work happens in ``build_nest``, ``compute_geometry`` and
``classify_parameter``. The wrappers only give the familiar fit/transform
shape so nests can sit in a pipeline next to ordinary feature code.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dynamics import QuadraticMap
from .geometry import compute_geometry
from .nest import NestConfig, build_nest
from .precision import PrecisionContext
from .search import classify_parameter

_COLUMNS = ("mu", "lambda_", "alpha", "K", "rho", "kappa", "r_n")


class PrincipalNestEstimator(BaseEstimator):
    """Build the nest of one parameter; ``fit`` takes the parameter as a decimal string."""

    def __init__(self, depth: int = 10, bits: int = 256, horizon_factor: int = 2, samples: int = 33):
        self.depth = depth
        self.bits = bits
        self.horizon_factor = horizon_factor
        self.samples = samples

    def fit(self, c, y=None):
        fmap = QuadraticMap.from_value(c, PrecisionContext(bits=self.bits))
        config = NestConfig(depth=self.depth, horizon_factor=self.horizon_factor)
        self.nest_ = build_nest(fmap, self.depth, config)
        self.geometry_ = compute_geometry(self.nest_, samples=self.samples)
        self.termination_ = self.nest_.termination.value
        return self

    def table(self) -> np.ndarray:
        """Per-level parameters as floats, one row per level; missing values are nan."""
        check_is_fitted(self, "geometry_")
        rows = []
        for g in self.geometry_.levels:
            rows.append([np.nan if getattr(g, k) is None else float(getattr(g, k)) for k in _COLUMNS])
        return np.asarray(rows, dtype=float).reshape(-1, len(_COLUMNS))


class NestScanTransformer(TransformerMixin, BaseEstimator):
    """Map a column of parameter strings to (depth reached, mu, K) at the last level."""

    def __init__(self, depth: int = 6, bits: int = 256):
        self.depth = depth
        self.bits = bits

    def fit(self, X, y=None):
        self.config_ = NestConfig(depth=self.depth)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "config_")
        out = []
        for c in np.asarray(X, dtype=object).ravel():
            row = classify_parameter(str(c), self.depth, self.config_, self.bits)
            out.append([row.depth_reached, _float(row.mu_last), _float(row.K_last)])
        return np.asarray(out, dtype=float).reshape(-1, 3)


def _float(text: Optional[str]) -> float:
    return float("nan") if text is None else float(text)
