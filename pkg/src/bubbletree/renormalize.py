"""Blow-up at a bubble point: recentering, neck selection and rescaling."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .concentration import BubbleCandidate, _argmax_near, resolution_floor
from .errors import (BudgetViolated, ConfigError, NoConcentration, NoCrossing, PreconditionLengthTooLarge,
                     WindowExceedsSource, WindowOutOfChart)
from .grid_metric.operators import circle_length, functionals, integrals
from .grid_metric.types import DomainChart, MetricGrid, MetricSequence, annulus, disk

logger = logging.getLogger(__name__)

SCAN_PER_DECADE = 256
LENGTH_RTOL = 1e-9


@dataclass(frozen=True)
class BlowupConfig:
    filter_eps: float = 0.5
    eps0: float = 1.0
    r2: float = 8.0
    min_r2: float = 2.0
    tail_window: int = 3
    budget_tol: float = 0.05
    r1: float | None = None
    r1_per_octave: int = 32

    def __post_init__(self):
        if not 0 < self.filter_eps < self.eps0:
            raise ConfigError("need 0 < filter_eps < eps0")
        if self.r2 < self.min_r2:
            raise ConfigError("r2 must be at least min_r2")


@dataclass(frozen=True, eq=False)
class NeckSpec:
    center: tuple[float, float]
    r1: float
    delta: tuple[float, ...]
    filter_eps: float
    r2: float = 0.0

    def __post_init__(self):
        if any(d > self.r1 * (1 + 1e-12) for d in self.delta):
            raise ValueError("inner neck radius exceeds r1")


@dataclass(frozen=True, eq=False)
class BlowupResult:
    child: MetricSequence
    neck: NeckSpec
    area_loss: float
    parent_conc: tuple[float, float]
    child_budget: tuple[float, float]
    centers: tuple[tuple[float, float], ...] = ()
    recentered: MetricSequence | None = None
    labels: tuple[int, ...] = ()


def recenter_points(seq: MetricSequence, p, window: float) -> list[tuple[float, float]]:
    if not seq.chart.contains_disk(p, window):
        raise WindowOutOfChart(f"D_{window:g}({p[0]:g},{p[1]:g}) leaves the chart")
    return [tuple(p) if g.vanished else _argmax_near(g, p, window) for g in seq.frames]


def _translated(g: MetricGrid, c, chart: DomainChart) -> MetricGrid:
    if g.vanished:
        return MetricGrid.zero_metric(chart)
    ev = g.evaluate
    cx, cy = c

    def moved(x, y):
        return ev(np.asarray(x) + cx, np.asarray(y) + cy)

    return MetricGrid.from_function(chart, moved, f"{g.note}@({cx:.6g},{cy:.6g})")


def recenter(seq: MetricSequence, p, window: float, centers=None) -> MetricSequence:
    """Move each frame's maximum of phi in D_window(p) to the origin.

    The new chart is the disk about 0 that every translated frame still
    covers, so its radius is ``window`` less the largest displacement.
    """
    pts = recenter_points(seq, p, window) if centers is None else [tuple(c) for c in centers]
    shift = max(float(np.hypot(c[0] - p[0], c[1] - p[1])) for c in pts)
    radius = window - shift
    if radius <= 0:
        raise WindowOutOfChart("frame maxima drift to the edge of the window")
    chart = disk((0.0, 0.0), radius, seq.chart.grid_n)
    return MetricSequence(tuple(_translated(g, c, chart) for g, c in zip(seq.frames, pts)), seq.labels)


def _lengths(g: MetricGrid, center, radii, n_theta: int = 256) -> np.ndarray:
    """Circle lengths for many radii at once (periodic trapezoid)."""
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    r = np.asarray(radii, dtype=float)[:, None]
    vals = g.evaluate(center[0] + r * np.cos(theta), center[1] + r * np.sin(theta))
    return 2.0 * np.pi * r[:, 0] * np.mean(np.exp(vals), axis=1)


def neck_radius(g: MetricGrid, eps: float, r1: float, center=(0.0, 0.0), floor: float | None = None) -> float:
    """Outermost radius r <= r1 at which the circle length reaches ``eps``.

    Scans down from r1 on a log grid of 256 samples per decade and refines
    the first crossing with a bracketing root finder.
    """
    L1 = circle_length(g, center, r1)
    if L1 > eps * (1 + LENGTH_RTOL):
        raise PreconditionLengthTooLarge(f"circle length {L1:.6g} at r1={r1:g} exceeds eps={eps:g}")
    if L1 >= eps * (1 - LENGTH_RTOL):
        return float(r1)
    lo_r = resolution_floor(g) if floor is None else floor
    decades = np.log10(r1 / lo_r)
    if decades <= 0:
        raise NoCrossing("r1 is below the smallest resolvable radius")
    prev_r = r1
    step = 10.0 ** (-1.0 / SCAN_PER_DECADE)
    k0 = 1
    total = int(np.floor(decades * SCAN_PER_DECADE))
    while k0 <= total:
        ks = np.arange(k0, min(k0 + SCAN_PER_DECADE, total + 1))
        rs = r1 * step**ks
        Ls = _lengths(g, center, rs)
        hit = np.nonzero(Ls >= eps)[0]
        if hit.size:
            i = int(hit[0])
            lo = float(rs[i])
            hi = float(rs[i - 1]) if i > 0 else prev_r
            f = lambda r: circle_length(g, center, r) - eps  # noqa: E731
            if f(lo) < 0:
                # the batch estimate was marginal; accept the precise check
                k0 = int(ks[i]) + 1
                prev_r = lo
                continue
            if f(hi) >= 0:
                return hi
            return float(brentq(f, lo, hi, xtol=1e-15, rtol=1e-12))
        prev_r = float(rs[-1])
        k0 = int(ks[-1]) + 1
    raise NoCrossing(f"circle length stays below eps={eps:g} down to r={lo_r:.3g}")


def rescale(g: MetricGrid, delta: float, window: float, center=(0.0, 0.0), grid_n: int | None = None) -> MetricGrid:
    """phi(center + delta z) + ln delta on the disk |z| < window."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not g.chart.contains_disk(center, delta * window):
        raise WindowExceedsSource(f"D_{delta * window:.3g} about {tuple(center)} leaves the source chart")
    chart = disk((0.0, 0.0), window, grid_n or g.chart.grid_n)
    if g.vanished:
        return MetricGrid.zero_metric(chart)
    ev = g.evaluate
    cx, cy = center
    ld = float(np.log(delta))

    def scaled(x, y):
        return ev(cx + delta * np.asarray(x), cy + delta * np.asarray(y)) + ld

    return MetricGrid.from_function(chart, scaled, f"{g.note}*{delta:.6g}")


def choose_r1(frames, r_max: float, eps: float, per_octave: int = 32, floor: float = 0.0) -> float:
    """Largest radius r <= r_max at which every frame's circle length is <= eps/2."""
    octaves = max(1, int(np.ceil(np.log2(r_max / max(floor, r_max * 2.0**-40)))))
    rs = r_max * 2.0 ** -np.linspace(0.0, octaves, octaves * per_octave + 1)
    ok = np.ones(len(rs), dtype=bool)
    for g in frames:
        ok &= _lengths(g, (0.0, 0.0), rs) <= 0.5 * eps
    if not ok.any():
        raise NoConcentration(f"no radius below {r_max:.3g} has circle length <= eps/2")
    return float(rs[int(np.argmax(ok))])


def blowup(seq: MetricSequence, candidate: BubbleCandidate, cfg: BlowupConfig | None = None) -> BlowupResult:
    """Magnify the concentration at ``candidate`` into a child sequence."""
    cfg = cfg or BlowupConfig()
    prof = candidate.profile
    r0 = float(prof.radii[0])
    centers = [tuple(c) for c in prof.frame_centers] if prof.frame_centers is not None else None
    rec = recenter(seq, candidate.center, r0, centers)
    tail = rec.frames[-cfg.tail_window:]
    r_max = rec.chart.outer_radius * (1 - 1e-9)
    floor = max(resolution_floor(g) for g in rec.frames)
    r1 = cfg.r1 if cfg.r1 is not None else choose_r1(tail, r_max, cfg.filter_eps, cfg.r1_per_octave, floor)
    if r1 > r_max:
        raise NoConcentration(f"r1={r1:g} leaves the recentred window {r_max:g}")
    keep, deltas = [], []
    for i, g in enumerate(rec.frames):
        try:
            deltas.append(neck_radius(g, cfg.filter_eps, r1))
            keep.append(i)
        except NoConcentration as err:
            if i >= len(rec) - cfg.tail_window:
                raise NoConcentration(f"tail frame n={rec.labels[i]}: {err}") from err
            logger.info("frame n=%d has no neck: %s", rec.labels[i], err)
    if len(keep) < 2:
        raise NoConcentration("fewer than two frames show a neck")
    r2 = min(cfg.r2, min(r1 / d for d in deltas))
    if r2 < cfg.min_r2:
        raise NoConcentration(f"neck too short: r1/delta = {r2:.3g} < {cfg.min_r2:g}")
    labels = tuple(rec.labels[i] for i in keep)
    child = MetricSequence(tuple(rescale(rec.frames[i], d, r2) for i, d in zip(keep, deltas)), labels)
    last, d_last = rec.frames[keep[-1]], deltas[-1]
    inner = d_last * r2
    tau = 0.0
    if r1 > inner * (1 + 1e-12):
        tau = integrals(last, annulus((0.0, 0.0), inner, r1, rec.chart.grid_n)).area
    child_area, child_energy = functionals(child.frames[-1], child.chart)
    A_p, K_p = candidate.area_conc, candidate.energy_conc
    tol = cfg.budget_tol
    if child_area + tau > A_p * (1 + tol) + 1e-12 or child_energy > K_p * (1 + tol) + 1e-12:
        raise BudgetViolated(
            f"child area {child_area:.6g} + loss {tau:.6g} vs A_p {A_p:.6g}; "
            f"child energy {child_energy:.6g} vs K_p {K_p:.6g}")
    neck = NeckSpec(tuple(candidate.center), float(r1), tuple(deltas), cfg.filter_eps, float(r2))
    kept_centers = tuple(tuple(centers[i]) for i in keep) if centers else ()
    return BlowupResult(child, neck, float(tau), (A_p, K_p), (child_area, child_energy), kept_centers, rec, labels)
