from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bubbletree.errors import ConfigError
from bubbletree.estimator import BubbleTreeEstimator, check_sequence
from bubbletree.families import FamilySpec, example1_center, generate
from bubbletree.grid_metric import disk


@pytest.fixture(scope="module")
def example1_seq():
    return generate(FamilySpec("example1", n_values=(100, 1000, 10000), chart=disk((0, 0), 2.0, 256)))


def test_check_sequence_rejects():
    with pytest.raises(ConfigError):
        check_sequence(np.zeros((3, 3)))


def test_params_round_trip():
    est = BubbleTreeEstimator(filter_eps=2.0, eps0=3.0)
    params = est.get_params()
    assert params["filter_eps"] == 2.0
    assert clone(est).get_params() == params


def test_predict_before_fit(example1_seq):
    with pytest.raises(NotFittedError):
        BubbleTreeEstimator().predict(example1_seq)


def test_fit_predict(example1_seq):
    est = BubbleTreeEstimator(filter_eps=2.0, eps0=3.0).fit(example1_seq)
    assert len(est.tree_.edges) == 1
    assert est.thick_thin_.n_thin == 1
    centres = est.predict(example1_seq)
    assert centres.shape == (1, 2)
    # centres are grid maxima of the last frame, so they sit within a cell diagonal
    h = example1_seq.chart.h
    assert np.hypot(*(centres[0] - example1_center(10000))) < np.sqrt(2) * h


def test_flat_fits_to_single_vertex():
    seq = generate(FamilySpec("flat", n_values=(1, 2, 3), chart=disk((0, 0), 1.0, 64)))
    est = BubbleTreeEstimator().fit(seq)
    assert est.candidates_ == []
    assert est.predict(seq).shape == (0, 2)
