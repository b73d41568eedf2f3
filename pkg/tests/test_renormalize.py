from __future__ import annotations

import numpy as np
import pytest

from bubbletree.concentration import DetectionConfig, detect_bubbles, score_candidate
from bubbletree.errors import (ConfigError, NoConcentration, NoCrossing, PreconditionLengthTooLarge,
                               WindowExceedsSource, WindowOutOfChart)
from bubbletree.families import FamilySpec, example1_center, generate
from bubbletree.grid_metric import MetricGrid, MetricSequence, annulus, disk, functionals
from bubbletree.renormalize import BlowupConfig, NeckSpec, blowup, choose_r1, neck_radius, recenter, rescale

FOUR_PI = 4.0 * np.pi


def radial_power(k, scale=1.0):
    """phi = ln scale - k ln r, whose circles have length 2 pi scale r^(1-k)."""
    return lambda x, y: np.log(scale) - k * np.log(np.hypot(x, y))


@pytest.mark.parametrize("kwargs", [dict(filter_eps=1.0), dict(filter_eps=0.0), dict(r2=1.0)])
def test_blowup_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        BlowupConfig(**kwargs)


def test_neck_spec_rejects_wide_delta():
    with pytest.raises(ValueError):
        NeckSpec((0, 0), 0.1, (0.05, 0.2), 0.5)


class TestNeckRadius:
    def test_inverse_square_root(self):
        g = MetricGrid.from_function(annulus((0, 0), 0.05, 1.0, 256), radial_power(2))
        # L(r) = 2 pi / r crosses 10 at r = 2 pi / 10
        assert neck_radius(g, 10.0, 0.8) == pytest.approx(2 * np.pi / 10, rel=1e-9)

    def test_constant_length_returns_r1(self):
        g = MetricGrid.from_function(annulus((0, 0), 0.05, 1.0, 256), radial_power(1))
        assert neck_radius(g, 2 * np.pi, 0.7) == 0.7

    def test_constant_length_below_eps(self):
        g = MetricGrid.from_function(annulus((0, 0), 0.05, 1.0, 256), radial_power(1, 0.5))
        with pytest.raises(NoCrossing):
            neck_radius(g, 2 * np.pi, 0.7, floor=0.1)

    def test_precondition(self):
        g = MetricGrid.from_function(disk((0, 0), 1.0, 64), lambda x, y: 0 * x)
        with pytest.raises(PreconditionLengthTooLarge):
            neck_radius(g, 1.0, 0.5)

    def test_flat_never_crosses(self):
        g = MetricGrid.from_function(disk((0, 0), 1.0, 64), lambda x, y: 0 * x)
        with pytest.raises(NoCrossing):
            neck_radius(g, 1.0, 0.1)


class TestRescale:
    def test_formula(self):
        phi = lambda x, y: 0.3 * x - 0.2 * y**2  # noqa: E731
        g = MetricGrid.from_function(disk((0, 0), 1.0, 128), phi)
        child = rescale(g, 0.25, 2.0, center=(0.1, 0.2))
        X, Y = child.chart.mesh()
        inside = child.chart.contains(X, Y)
        expected = phi(0.1 + 0.25 * X, 0.2 + 0.25 * Y) + np.log(0.25)
        assert np.allclose(child.phi[inside], expected[inside], atol=1e-12)

    def test_functionals_are_invariant(self):
        g = MetricGrid.from_function(disk((0, 0), 2.0, 256), radial_power(0, 3.0))
        child = rescale(g, 0.5, 1.0)
        a, e = functionals(child, child.chart)
        assert a == pytest.approx(9.0 * np.pi * 0.25, rel=1e-4)
        assert e == pytest.approx(0.0, abs=1e-9)

    def test_window_must_fit(self):
        g = MetricGrid.from_function(disk((0, 0), 1.0, 64), lambda x, y: 0 * x)
        with pytest.raises(WindowExceedsSource):
            rescale(g, 0.5, 3.0)

    def test_positive_delta(self):
        g = MetricGrid.from_function(disk((0, 0), 1.0, 64), lambda x, y: 0 * x)
        with pytest.raises(ValueError):
            rescale(g, 0.0, 1.0)


class TestRecenter:
    def test_moves_maximum_to_origin(self):
        chart = disk((0, 0), 1.0, 256)
        frames = tuple(MetricGrid.from_function(chart, lambda x, y, c=c: -((x - c) ** 2 + y**2))
                       for c in (0.1, 0.05))
        seq = MetricSequence(frames, (1, 2))
        rec = recenter(seq, (0.0, 0.0), 0.5)
        assert rec.chart.outer_radius == pytest.approx(0.4, abs=0.01)
        for g in rec.frames:
            assert g.evaluate(np.array([0.0]), np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-4)

    def test_window_must_fit(self):
        seq = generate(FamilySpec("flat", n_values=(1, 2), chart=disk((0, 0), 1.0, 64)))
        with pytest.raises(WindowOutOfChart):
            recenter(seq, (0.8, 0.0), 0.5)


def test_choose_r1_flat():
    g = MetricGrid.from_function(disk((0, 0), 1.0, 64), lambda x, y: 0 * x)
    r1 = choose_r1([g], 0.9, 1.0)
    assert 2 * np.pi * r1 <= 0.5
    assert 2 * np.pi * r1 > 0.5 * 2.0 ** (-1 / 32) - 1e-12


def test_blowup_flat_has_no_neck():
    seq = generate(FamilySpec("flat", n_values=(1, 2, 3), chart=disk((0, 0), 1.0, 128)))
    cand = score_candidate(seq, (0.0, 0.0), 0.5, DetectionConfig())
    with pytest.raises(NoConcentration):
        blowup(seq, cand)


def test_blowup_example1_child_is_sphere():
    # the outer neck, where the circle length falls to eps/2, must lie inside
    # the window for every tail frame; eps = 2 puts it near 4 pi / n
    seq = generate(FamilySpec("example1", n_values=(100, 1000, 10000), chart=disk((0, 0), 2.0, 256)))
    (cand,) = detect_bubbles(seq)
    res = blowup(seq, cand, BlowupConfig(filter_eps=2.0, eps0=3.0))
    assert res.neck.r2 >= 2.0
    a, e = res.child_budget
    assert a + res.area_loss <= cand.area_conc * 1.05
    assert a == pytest.approx(FOUR_PI, rel=0.05)
    assert np.hypot(*np.subtract(res.centers[-1], example1_center(10000))) < 0.01
