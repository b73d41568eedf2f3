from __future__ import annotations

import numpy as np
import pytest

from bubbletree.concentration import (DetectionConfig, area_growth_ratio, bubble_count_bound, concentration_profile,
                                      default_radius, detect_bubbles, isoperimetric_defect, local_maxima, waist)
from bubbletree.errors import ConfigError, RadiusUnresolvable, RegionOutOfChart
from bubbletree.families import FamilySpec, example1_center, example1_field, generate
from bubbletree.grid_metric import MetricGrid, MetricSequence, annulus, disk

FOUR_PI = 4.0 * np.pi


@pytest.fixture(scope="module")
def example1_seq():
    # from n = 30 on, D_0.5 about the centre holds over 99% of the sphere
    return generate(FamilySpec("example1", n_values=(30, 100, 300), chart=disk((0, 0), 2.0, 256)))


@pytest.mark.parametrize("C1, C2, expected", [
    (0.0, 0.0, 0),
    (FOUR_PI, FOUR_PI, 2),
    (2 * FOUR_PI, 2 * FOUR_PI, 4),
    (FOUR_PI, FOUR_PI * 0.99, 1),
    (np.pi, 4 * np.pi, 1),
])
def test_count_bound(C1, C2, expected):
    assert bubble_count_bound(C1, C2) == expected


def test_count_bound_rejects_negative():
    with pytest.raises(ValueError):
        bubble_count_bound(-1.0, 1.0)


@pytest.mark.parametrize("kwargs", [dict(eta=0.0), dict(eta=1.0), dict(tail_window=1), dict(levels=2)])
def test_detection_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        DetectionConfig(**kwargs)


class TestProfile:
    def test_ladder_is_monotone(self, example1_seq):
        prof = concentration_profile(example1_seq, example1_center(300), 0.5, 8)
        assert np.all(np.diff(prof.area_at, axis=1) <= 1e-12)
        assert np.all(np.diff(prof.energy_at, axis=1) <= 1e-12)
        assert not prof.pseudo

    def test_sphere_mass(self, example1_seq):
        prof = concentration_profile(example1_seq, example1_center(300), 0.5, 8)
        assert prof.area_conc == pytest.approx(FOUR_PI, rel=0.05)
        assert prof.energy_conc == pytest.approx(FOUR_PI, rel=0.05)
        assert prof.shrink < 0.5

    def test_rows_cover_frames_and_radii(self, example1_seq):
        prof = concentration_profile(example1_seq, example1_center(300), 0.5, 4)
        assert len(list(prof.rows())) == 3 * 5

    def test_region_must_fit(self, example1_seq):
        with pytest.raises(RegionOutOfChart):
            concentration_profile(example1_seq, (1.8, 0.0), 0.5, 4)

    def test_ladder_below_grid(self, example1_seq):
        with pytest.raises(RadiusUnresolvable):
            concentration_profile(example1_seq, (0.0, 0.0), 0.5, 40)

    def test_constant_shift(self):
        # phi + c scales area by e^{2c} and energy by e^{-2c}
        c = 0.2
        chart = disk((0, 0), 2.0, 256)
        base = generate(FamilySpec("example1", n_values=(30, 100, 300), chart=chart))
        shifted = MetricSequence(tuple(MetricGrid.from_function(chart, lambda x, y, n=n: example1_field(n)(x, y) + c)
                                       for n in (30, 100, 300)), (30, 100, 300))
        p = example1_center(300)
        a = concentration_profile(base, p, 0.5, 8)
        b = concentration_profile(shifted, p, 0.5, 8)
        assert b.area_conc == pytest.approx(np.exp(2 * c) * a.area_conc, rel=1e-3)
        assert b.energy_conc == pytest.approx(np.exp(-2 * c) * a.energy_conc, rel=1e-3)


def test_waist_is_nonincreasing(example1_seq):
    w = waist(example1_seq, example1_center(300), 0.5, 6)
    assert np.all(np.diff(w.waist_at) <= 1e-12)
    assert w.waist_at[0] > 0


def test_area_growth_flat():
    chart = disk((0, 0), 1.0, 128)
    flat = generate(FamilySpec("flat", n_values=(1, 2), chart=chart))
    ratio = area_growth_ratio(flat, (0, 0), 2.0, [0.1, 0.2, 0.4])
    assert ratio == pytest.approx(np.pi, rel=1e-3)


def test_area_growth_rejects_alpha():
    chart = disk((0, 0), 1.0, 64)
    flat = generate(FamilySpec("flat", n_values=(1, 2), chart=chart))
    with pytest.raises(ConfigError):
        area_growth_ratio(flat, (0, 0), 2.5, [0.1])


def test_isoperimetric_needs_disk():
    g = MetricGrid.from_function(disk((0, 0), 1.0, 64), lambda x, y: 0 * x)
    with pytest.raises(ConfigError):
        isoperimetric_defect(g, annulus((0, 0), 0.1, 0.5, 64))


def test_local_maxima_two_peaks():
    g = MetricGrid.from_function(disk((0, 0), 1.0, 128),
                                 lambda x, y: -((x - 0.4) ** 2 + y**2) * ((x + 0.4) ** 2 + y**2) * 10)
    peaks = local_maxima(g, 0.1)
    assert len(peaks) == 2
    assert sorted(round(p[0], 1) for p in peaks) == [-0.4, 0.4]


def test_default_radius_clears_neighbours():
    chart = disk((0, 0), 2.0, 64)
    assert default_radius(chart, (0, 0), []) == pytest.approx(1.0)
    assert default_radius(chart, (0, 0), [(0.5, 0)]) == pytest.approx(0.225)
    assert default_radius(chart, (1.5, 0), []) == pytest.approx(0.45)


def test_example3_two_points():
    seq = generate(FamilySpec("example3", n_values=(30, 100, 300), chart=annulus((1.5, 0), 0.1, 1.2, 512)))
    found = detect_bubbles(seq)
    assert sorted(round(b.center[0], 1) for b in found) == [1.0, 2.0]
    for b in found:
        assert b.area_conc == pytest.approx(FOUR_PI, rel=0.05)
