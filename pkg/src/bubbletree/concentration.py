"""Concentration profiles, waists and bubble-point detection for metric sequences.

Limits over n are replaced by extremes over the last ``tail_window`` frames.
Each frame is followed through its own density maximum near the candidate,
so a bubble drifting toward its limit point is measured where it is.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, CountBoundViolated, RadiusUnresolvable, RegionOutOfChart
from .grid_metric.operators import circle_length, functionals, integrals, quadrature_nodes
from .grid_metric.types import DomainChart, MetricGrid, MetricSequence, disk

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi
EXACT_DEPTH = 24


@dataclass(frozen=True)
class DetectionConfig:
    tail_window: int = 3
    eta: float = 0.25
    merge_radius: float | None = None
    min_area: float = 0.05 * FOUR_PI
    r0: float | None = None
    levels: int = 16
    retain: float = 0.02
    shrink_ratio: float = 0.5
    max_candidates: int = 16
    eps0: float = 0.5

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ConfigError("eta must lie in (0, 1)")
        if self.tail_window < 2:
            raise ConfigError("tail_window must be at least 2")
        if self.levels < 3:
            raise ConfigError("levels must be at least 3")


@dataclass(frozen=True, eq=False)
class ConcentrationProfile:
    center: tuple[float, float]
    radii: np.ndarray
    area_at: np.ndarray
    energy_at: np.ndarray
    area_conc: float
    energy_conc: float
    labels: tuple[int, ...] = ()
    frame_centers: np.ndarray | None = None
    circle_at: np.ndarray | None = None
    half_mass: np.ndarray | None = None
    tail: int = 3
    star_index: int = 0
    pseudo: bool = False

    @property
    def star_radius(self) -> float:
        return float(self.radii[self.star_index])

    @property
    def shrink(self) -> float:
        """Half-mass radius of the last frame over that of the first tail frame."""
        hm = self.half_mass[-self.tail:]
        return float(hm[-1] / hm[0]) if hm[0] > 0 else 1.0

    def rows(self):
        """(n, r, center_x, center_y, area, energy, circle_length) per frame and radius."""
        for i, n in enumerate(self.labels):
            cx, cy = self.frame_centers[i]
            for j, r in enumerate(self.radii):
                L = np.nan if self.circle_at is None else self.circle_at[i, j]
                yield (n, float(r), float(cx), float(cy), float(self.area_at[i, j]), float(self.energy_at[i, j]),
                       float(L))


@dataclass(frozen=True, eq=False)
class BubbleCandidate:
    center: tuple[float, float]
    area_conc: float
    energy_conc: float
    product_root: float
    profile: ConcentrationProfile
    accepted: bool = False
    reasons: tuple[str, ...] = field(default=())

    @property
    def pseudo(self) -> bool:
        return self.profile.pseudo


@dataclass(frozen=True, eq=False)
class WaistProfile:
    center: tuple[float, float]
    rho0: float
    rhos: np.ndarray
    waist_at: np.ndarray


def bubble_count_bound(C1: float, C2: float) -> int:
    """Largest number of bubbles an area C1 / energy C2 budget allows."""
    if C1 < 0 or C2 < 0:
        raise ValueError("C1 and C2 must be nonnegative")
    return int(np.floor(np.sqrt(C1 * C2) / TWO_PI + 1e-12))


def resolution_floor(g: MetricGrid) -> float:
    h = g.chart.h
    return 4.0 * h / 2.0**EXACT_DEPTH if g.exact else 4.0 * h


def _check_ladder(seq: MetricSequence, r0: float, levels: int):
    if levels < 3:
        raise ConfigError("levels must be at least 3")
    floor = max(resolution_floor(g) for g in seq.frames)
    if r0 * 2.0**-levels < floor * (1 - 1e-12):
        raise RadiusUnresolvable(f"smallest radius {r0 * 2.0**-levels:.3g} is below the resolvable {floor:.3g}")


def _region_grid(chart: DomainChart, r: float) -> int:
    return int(np.clip(np.ceil(chart.grid_n * r / chart.outer_radius), 64, chart.grid_n))


def _argmax_near(g: MetricGrid, p, r: float) -> tuple[float, float]:
    """Position of the largest phi in D_r(p), refined off-grid for exact metrics."""
    X, Y = g.chart.mesh()
    mask = (np.hypot(X - p[0], Y - p[1]) <= r) & g.chart.contains(X, Y)
    if not mask.any():
        return (float(p[0]), float(p[1]))
    vals = np.where(mask, g.phi, -np.inf)
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    best = np.array([X[i, j], Y[i, j]])
    # a coarse sample of the exact field can miss a peak narrower than h
    if g.exact:
        h = g.chart.h
        t = np.linspace(-1.5 * h, 1.5 * h, 25)
        sx, sy = np.meshgrid(best[0] + t, best[1] + t, indexing="ij")
        inside = np.hypot(sx - p[0], sy - p[1]) <= r
        sv = np.where(inside, g.evaluate(sx, sy), -np.inf)
        k = np.unravel_index(int(np.argmax(sv)), sv.shape)
        best = np.array([sx[k], sy[k]])

        def neg(q):
            if np.hypot(q[0] - p[0], q[1] - p[1]) > r:
                return np.inf
            return -float(g.evaluate(np.array(q[0]), np.array(q[1])))

        res = minimize(neg, best, method="Nelder-Mead",
                       options={"xatol": 1e-13 + 1e-12 * np.abs(best).max(), "fatol": 1e-15,
                                "initial_simplex": [best, best + [t[1] - t[0], 0], best + [0, t[1] - t[0]]],
                                "maxiter": 400})
        if np.isfinite(res.fun) and -res.fun >= -neg(best):
            best = res.x
    return (float(best[0]), float(best[1]))


def _half_mass_radius(nodes, center, total: float) -> float:
    rho = np.hypot(nodes.x - center[0], nodes.y - center[1])
    dens = nodes.d**2 * np.exp(2.0 * nodes.phi)
    order = np.argsort(rho)
    cum = np.cumsum(dens[order])
    k = int(np.searchsorted(cum, 0.5 * total))
    return float(rho[order][min(k, len(order) - 1)])


def _monotone(v: np.ndarray, rtol: float = 1e-2) -> bool:
    d = np.diff(v)
    tol = rtol * max(float(np.max(np.abs(v))), 1e-300)
    return bool(np.all(d >= -tol) or np.all(d <= tol))


def concentration_profile(seq: MetricSequence, p, r0: float, levels: int, tail_window: int = 3,
                          track: bool = True, retain: float = 0.02) -> ConcentrationProfile:
    """Area and energy of D_r around p for r on the ladder r0 * 2^-j, every frame.

    With ``track`` each frame is measured about its own maximum of phi in
    D_r0(p). The tail estimates use the smallest ladder radius at which every
    tail frame still holds all but ``retain`` of its D_r0(p) area and energy.
    """
    chart = seq.chart
    p = (float(p[0]), float(p[1]))
    if not chart.contains_disk(p, r0):
        raise RegionOutOfChart(f"D_{r0:g}{p} is not inside the chart")
    _check_ladder(seq, r0, levels)
    radii = r0 * 2.0 ** -np.arange(levels + 1)
    region = disk(p, r0, _region_grid(chart, r0))
    nf = len(seq)
    area_at = np.zeros((nf, len(radii)))
    energy_at = np.zeros((nf, len(radii)))
    circle_at = np.full((nf, len(radii)), np.nan)
    centers = np.zeros((nf, 2))
    totals = np.zeros(nf)
    energy_totals = np.zeros(nf)
    half = np.zeros(nf)
    for i, g in enumerate(seq.frames):
        if g.vanished:
            centers[i] = p
            continue
        c = _argmax_near(g, p, r0) if track else p
        centers[i] = c
        nodes = quadrature_nodes(g, region)
        a, e = nodes.radial_profile(c, radii)
        # ladder disks about c are clipped to D_r0(p); monotone by construction
        area_at[i], energy_at[i] = a, e
        whole = nodes.integrate(region)
        totals[i], energy_totals[i] = whole.area, whole.energy
        half[i] = _half_mass_radius(nodes, c, totals[i])
        for j, r in enumerate(radii):
            if chart.contains_circle(c, r):
                circle_at[i, j] = circle_length(g, c, r, n_theta=max(64, int(np.ceil(TWO_PI * r / chart.h))))
    W = max(1, min(int(tail_window), nf))
    tail = slice(nf - W, nf)
    # the disk must hold nearly all of both functionals; energy tails can be
    # much heavier than area tails
    keep = ((area_at[tail] >= (1.0 - retain) * totals[tail, None])
            & (energy_at[tail] >= (1.0 - retain) * energy_totals[tail, None]))
    ok = np.all(keep, axis=0)
    star = int(np.max(np.nonzero(ok)[0])) if ok.any() else 0
    A = float(np.min(area_at[tail, star]))
    K = float(np.min(energy_at[tail, star]))
    pseudo = not (_monotone(area_at[:, star]) and _monotone(energy_at[:, star]))
    return ConcentrationProfile(p, radii, area_at, energy_at, max(A, 0.0), max(K, 0.0), tuple(seq.labels),
                                centers, circle_at, half, W, star, pseudo)


def waist(seq: MetricSequence, p, rho0: float, levels: int, tail_window: int = 3, centers=None,
          per_octave: int = 16) -> WaistProfile:
    """Least circle length over r in [rho, rho0] and over the tail, for rho on the ladder."""
    chart = seq.chart
    _check_ladder(seq, rho0, levels)
    rhos = rho0 * 2.0 ** -np.arange(levels + 1)
    rs = rho0 * 2.0 ** -np.linspace(0.0, levels, levels * per_octave + 1)
    pairs = seq.tail(tail_window)
    W = len(pairs)
    if centers is None:
        centers = [tuple(p)] * W
    else:
        centers = list(centers)[-W:]
    lengths = np.full((W, len(rs)), np.inf)
    for k, ((_, g), c) in enumerate(zip(pairs, centers)):
        if not chart.contains_circle(c, rho0):
            raise RegionOutOfChart(f"circle of radius {rho0:g} about {c} leaves the chart")
        if g.vanished:
            lengths[k] = 0.0
            continue
        lengths[k] = [circle_length(g, c, r) for r in rs]
    per_r = lengths.min(axis=0)
    # running minimum from rho0 inward: rs is decreasing
    running = np.minimum.accumulate(per_r)
    waist_at = running[::per_octave]
    return WaistProfile((float(p[0]), float(p[1])), float(rho0), rhos, waist_at)


def area_growth_ratio(seq: MetricSequence, p, alpha: float, radii, tail_window: int = 3, centers=None) -> float:
    """Largest A_n(D_rho)/rho^alpha over the tail frames and the given radii."""
    if not 0 < alpha <= 2:
        raise ConfigError("alpha must lie in (0, 2]")
    radii = np.asarray(sorted(radii), dtype=float)
    chart = seq.chart
    floor = max(resolution_floor(g) for g in seq.frames)
    if radii[0] < floor:
        raise RadiusUnresolvable(f"radius {radii[0]:.3g} below the resolvable {floor:.3g}")
    pairs = seq.tail(tail_window)
    if centers is None:
        centers = [tuple(p)] * len(pairs)
    else:
        centers = list(centers)[-len(pairs):]
    best = -np.inf
    for (_, g), c in zip(pairs, centers):
        region = disk(c, radii[-1], _region_grid(chart, radii[-1]))
        if g.vanished:
            best = max(best, 0.0)
            continue
        nodes = quadrature_nodes(g, region)
        areas, _ = nodes.radial_profile(c, radii)
        best = max(best, float(np.max(areas / radii**alpha)))
    return best


def isoperimetric_defect(g: MetricGrid, region: DomainChart, **kw) -> float:
    """Total |K| dA over the disk minus the lower bound 2 pi - L^2 / (2A)."""
    if region.kind != "disk":
        raise ConfigError("isoperimetric defect is defined on disks")
    # the bound is compared in absolute terms, so 1% relative quadrature
    # accuracy on the functionals is plenty and keeps sweeps cheap
    kw.setdefault("rtol", 1e-2)
    I = integrals(g, region, **kw)
    L = circle_length(g, region.center, region.outer_radius)
    return float(I.abs_curvature - (TWO_PI - L * L / (2.0 * I.area)))


def sequence_totals(seq: MetricSequence) -> tuple[float, float]:
    """(C1, C2): the largest frame area and energy over the whole chart."""
    C1 = C2 = 0.0
    for g in seq.frames:
        a, e = functionals(g, seq.chart)
        C1, C2 = max(C1, a), max(C2, e)
    return C1, C2


def _boundary_distance(chart: DomainChart, c) -> float:
    dx, dy = c[0] - chart.center[0], c[1] - chart.center[1]
    if chart.kind == "plane_window":
        return float(chart.outer_radius - max(abs(dx), abs(dy)))
    rho = float(np.hypot(dx, dy))
    d = chart.outer_radius - rho
    if chart.kind == "annulus":
        d = min(d, rho - chart.inner_radius)
    return float(d)


def local_maxima(g: MetricGrid, merge_radius: float, limit: int = 16) -> list[tuple[float, float]]:
    """Interior local maxima of phi, strongest first, merged within ``merge_radius``.

    A node counts when no neighbour exceeds it and at least one is lower, so
    a peak falling midway between two rows still shows up.
    """
    if g.vanished:
        return []
    phi = g.phi
    X, Y = g.chart.mesh()
    inside = g.chart.contains(X, Y, margin=2.0 * g.chart.h)
    c = phi[1:-1, 1:-1]
    top = np.ones_like(c, dtype=bool)
    above_some = np.zeros_like(c, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nb = phi[1 + di:phi.shape[0] - 1 + di, 1 + dj:phi.shape[1] - 1 + dj]
            top &= c >= nb
            above_some |= c > nb
    strict = top & above_some & inside[1:-1, 1:-1]
    ii, jj = np.nonzero(strict)
    vals = c[ii, jj]
    order = np.argsort(-vals, kind="stable")
    kept: list[tuple[float, float]] = []
    for k in order:
        q = (float(X[ii[k] + 1, jj[k] + 1]), float(Y[ii[k] + 1, jj[k] + 1]))
        if all(np.hypot(q[0] - a, q[1] - b) > merge_radius for a, b in kept):
            kept.append(q)
        if len(kept) >= limit:
            break
    return kept


def default_radius(chart: DomainChart, c, others) -> float:
    """Largest ladder top that stays clear of the chart edge and other peaks."""
    r = chart.outer_radius / 2.0
    if others:
        r = min(r, 0.45 * min(float(np.hypot(c[0] - o[0], c[1] - o[1])) for o in others))
    return min(r, 0.9 * _boundary_distance(chart, c))


def score_candidate(seq: MetricSequence, c, r0: float, cfg: DetectionConfig) -> BubbleCandidate:
    floor = max(resolution_floor(g) for g in seq.frames)
    levels = int(min(cfg.levels, np.floor(np.log2(r0 / floor))))
    prof = concentration_profile(seq, c, r0, levels, cfg.tail_window, retain=cfg.retain)
    A, K = prof.area_conc, prof.energy_conc
    root = float(np.sqrt(A * K))
    reasons = []
    if root < (1.0 - cfg.eta) * TWO_PI:
        reasons.append("product_root")
    if A < cfg.min_area:
        reasons.append("min_area")
    if prof.shrink > cfg.shrink_ratio:
        reasons.append("not_shrinking")
    return BubbleCandidate(tuple(c), A, K, root, prof, not reasons, tuple(reasons))


def detect_bubbles(seq: MetricSequence, cfg: DetectionConfig | None = None, totals=None,
                   return_all: bool = False):
    """Bubble points of the sequence, strongest first.

    Candidates are the last frame's density maxima; each is scored by its
    concentration profile and kept when the tail concentrations satisfy the
    product bound, carry enough area and are still contracting along n.
    """
    cfg = cfg or DetectionConfig()
    chart = seq.chart
    merge = cfg.merge_radius if cfg.merge_radius is not None else 4.0 * chart.h
    peaks = local_maxima(seq.frames[-1], merge, cfg.max_candidates)
    scored = []
    for k, c in enumerate(peaks):
        others = peaks[:k] + peaks[k + 1:]
        r0 = cfg.r0 if cfg.r0 is not None else default_radius(chart, c, others)
        r0 = min(r0, _boundary_distance(chart, c))
        if r0 <= 0:
            continue
        try:
            scored.append(score_candidate(seq, c, r0, cfg))
        except RadiusUnresolvable as err:
            logger.info("candidate %s skipped: %s", c, err)
    accepted = [b for b in scored if b.accepted]
    if accepted:
        C1, C2 = totals if totals is not None else sequence_totals(seq)
        bound = bubble_count_bound(C1, C2)
        if len(accepted) > bound:
            raise CountBoundViolated(f"{len(accepted)} bubbles accepted but the budget allows {bound}")
    return (accepted, scored) if return_all else accepted
