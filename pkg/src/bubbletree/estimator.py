"""Estimator-style wrapper around the tree pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .bubble_tree import TreeConfig, build_tree, mass_accounting, thick_thin
from .concentration import DetectionConfig, detect_bubbles
from .errors import ConfigError
from .grid_metric.types import MetricSequence
from .renormalize import BlowupConfig


def check_sequence(seq, min_frames: int = 2) -> MetricSequence:
    """Validate that ``seq`` is a usable metric sequence."""
    if not isinstance(seq, MetricSequence):
        raise ConfigError(f"expected a MetricSequence, got {type(seq).__name__}")
    if len(seq) < min_frames:
        raise ConfigError(f"need at least {min_frames} frames, got {len(seq)}")
    return seq


class BubbleTreeEstimator(BaseEstimator):
    """Fits a bubble tree to a metric sequence.

    After ``fit`` the tree, the accepted root bubbles, the mass accounting
    and the thick/thin split are available as ``tree_``, ``candidates_``,
    ``accounting_`` and ``thick_thin_``.
    """

    def __init__(self, filter_eps=0.5, eps0=1.0, eta=0.25, tail_window=3, max_depth=4, mass_tol=0.05,
                 efficiency_tol=0.05 * 4.0 * np.pi, thick_thin_eps=None, r0=None, r2=8.0):
        self.filter_eps = filter_eps
        self.eps0 = eps0
        self.eta = eta
        self.tail_window = tail_window
        self.max_depth = max_depth
        self.mass_tol = mass_tol
        self.efficiency_tol = efficiency_tol
        self.thick_thin_eps = thick_thin_eps
        self.r0 = r0
        self.r2 = r2

    def _config(self) -> TreeConfig:
        det = DetectionConfig(tail_window=self.tail_window, eta=self.eta, r0=self.r0, eps0=self.eps0)
        blow = BlowupConfig(filter_eps=self.filter_eps, eps0=self.eps0, r2=self.r2, tail_window=self.tail_window)
        return TreeConfig(det, blow, self.max_depth, mass_tol=self.mass_tol, efficiency_tol=self.efficiency_tol)

    def fit(self, X, y=None):
        seq = check_sequence(X)
        cfg = self._config()
        self.tree_ = build_tree(seq, cfg)
        self.candidates_ = [e.point for e in self.tree_.children(self.tree_.root)]
        self.accounting_ = mass_accounting(self.tree_, seq, self.mass_tol)
        eps = self.filter_eps if self.thick_thin_eps is None else self.thick_thin_eps
        self.thick_thin_ = thick_thin(self.tree_, seq, eps)
        return self

    def predict(self, X):
        """Bubble centres of ``X`` as an array of shape (k, 2)."""
        if not hasattr(self, "tree_"):
            raise NotFittedError("call fit before predict")
        seq = check_sequence(X)
        found = detect_bubbles(seq, self._config().detection)
        return np.array([b.center for b in found], dtype=float).reshape(-1, 2)
