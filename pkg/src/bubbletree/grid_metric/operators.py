"""Differential-geometric quantities of a single conformal metric."""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import cg

from ..errors import (CircleOutOfChart, GridTooCoarse, NotRotationallySymmetric, OriginInDomain,
                      RegionOutOfChart, SolverDivergence, VanishedMetric)
from .quadrature import Integrals, NodeSet, sample_region
from .types import DomainChart, MetricGrid, RadialStats, ScalarField

MIN_THETA = 64
SYMMETRY_TOL = 1e-6


def _require_live(g: MetricGrid):
    if g.vanished:
        raise VanishedMetric("operation needs a non-vanished metric")


def discrete_laplacian(phi: np.ndarray, h: float) -> np.ndarray:
    """Five-point Laplacian; the one-node rim is left as NaN."""
    lap = np.full(phi.shape, np.nan)
    lap[1:-1, 1:-1] = (phi[2:, 1:-1] + phi[:-2, 1:-1] + phi[1:-1, 2:] + phi[1:-1, :-2]
                       - 4.0 * phi[1:-1, 1:-1]) / h**2
    return lap


def _stencil_mask(chart: DomainChart) -> np.ndarray:
    X, Y = chart.mesh()
    inside = chart.contains(X, Y)
    ok = np.zeros_like(inside)
    ok[1:-1, 1:-1] = (inside[1:-1, 1:-1] & inside[2:, 1:-1] & inside[:-2, 1:-1]
                      & inside[1:-1, 2:] & inside[1:-1, :-2])
    return ok


def curvature_field(g: MetricGrid) -> ScalarField:
    """Gaussian curvature K = -lap(phi) e^{-2 phi} at the grid nodes."""
    _require_live(g)
    if g.chart.grid_n < 16:
        raise GridTooCoarse("curvature needs grid_n >= 16")
    lap = discrete_laplacian(g.phi, g.chart.h)
    valid = _stencil_mask(g.chart)
    K = np.zeros_like(g.phi)
    lv = lap[valid]
    with np.errstate(divide="ignore", over="ignore"):
        mag = np.exp(np.log(np.abs(lv)) - 2.0 * g.phi[valid])
    K[valid] = -np.sign(lv) * np.where(lv == 0.0, 0.0, mag)
    return ScalarField(g.chart, K, valid)


def quadrature_nodes(g: MetricGrid, region: DomainChart, **kw) -> NodeSet:
    """Adaptive quadrature nodes of ``g`` over ``region``.

    Metrics carrying an exact source refine toward unresolved structure;
    interpolated metrics are capped a couple of levels below their grid.
    """
    _require_live(g)
    if not g.chart.contains_chart(region):
        raise RegionOutOfChart(f"region {region} is not inside the metric chart")
    if not g.exact:
        kw.setdefault("max_depth", 2)
    return sample_region(g.evaluate, region, **kw)


def integrals(g: MetricGrid, region: DomainChart, **kw) -> Integrals:
    if g.vanished:
        if not g.chart.contains_chart(region):
            raise RegionOutOfChart(f"region {region} is not inside the metric chart")
        return Integrals(0.0, 0.0, 0.0, 0.0)
    return quadrature_nodes(g, region, **kw).integrate(region)


def functionals(g: MetricGrid, region: DomainChart, **kw) -> tuple[float, float]:
    """(area, curvature energy) of ``g`` over ``region``."""
    I = integrals(g, region, **kw)
    return I.area, I.energy


def total_curvature(g: MetricGrid, region: DomainChart, **kw) -> float:
    """Integral of K dA = -integral of lap(phi) dx dy over ``region``."""
    return integrals(g, region, **kw).total_curvature


def _theta_count(g: MetricGrid, r: float) -> int:
    return max(MIN_THETA, int(np.ceil(2.0 * np.pi * r / g.chart.h)))


def _circle_samples(g: MetricGrid, center, r: float, n_theta: int, dr: float = 0.0):
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    rr = r + dr
    return g.evaluate(center[0] + rr * np.cos(theta), center[1] + rr * np.sin(theta))


def _check_circle(g: MetricGrid, center, r: float, margin: float = 0.0):
    if not r > 0:
        raise CircleOutOfChart("radius must be positive")
    ch = g.chart
    if not (ch.contains_circle(center, r + margin) and (margin == 0 or ch.contains_circle(center, r - margin))):
        raise CircleOutOfChart(f"circle r={r:g} about {tuple(center)} leaves the chart")
    if margin and r - margin <= 0:
        raise CircleOutOfChart("circle too close to its centre for radial differences")


def circle_length(g: MetricGrid, center, r: float, n_theta: int | None = None) -> float:
    """Length of |z - center| = r in the metric: integral of e^phi r dtheta."""
    _require_live(g)
    _check_circle(g, center, r)
    n = _theta_count(g, r) if n_theta is None else int(n_theta)
    L = 2.0 * np.pi * r * float(np.mean(np.exp(_circle_samples(g, center, r, n))))
    if n_theta is None and g.exact:
        # periodic trapezoid converges fast; double until it has
        for _ in range(12):
            n *= 2
            L2 = 2.0 * np.pi * r * float(np.mean(np.exp(_circle_samples(g, center, r, n))))
            done = abs(L2 - L) <= 1e-12 * max(abs(L2), 1e-300)
            L = L2
            if done:
                break
    return L


def _radial_step(g: MetricGrid, r: float) -> float:
    return 1e-4 * r if g.exact else 0.5 * g.chart.h


def radial_stats(g: MetricGrid, center, r: float) -> RadialStats:
    """Circle average of phi, radial flux of phi, circle length and extrema."""
    _require_live(g)
    margin = 2.0 * g.chart.h
    _check_circle(g, center, r, margin=margin if not g.exact else 0.0)
    dr = _radial_step(g, r)
    if g.exact:
        _check_circle(g, center, r, margin=dr)
    n = _theta_count(g, r)
    vals = _circle_samples(g, center, r, n)
    outer = _circle_samples(g, center, r, n, dr)
    inner = _circle_samples(g, center, r, n, -dr)
    dphi = (outer - inner) / (2.0 * dr)
    return RadialStats(
        center=(float(center[0]), float(center[1])),
        radius=float(r),
        average=float(np.mean(vals)),
        flux=float(2.0 * np.pi * r * np.mean(dphi)),
        circle_length=circle_length(g, center, r),
        sup_phi=float(np.max(vals)),
        inf_phi=float(np.min(vals)),
    )


def geodesic_defect(g: MetricGrid, center, r: float) -> float:
    """Mean of phi_r + 1/r on the circle; zero iff the circle is a geodesic."""
    _require_live(g)
    n = _theta_count(g, r)
    dr = _radial_step(g, r)
    _check_circle(g, center, r, margin=dr)
    vals = _circle_samples(g, center, r, n)
    if float(np.max(vals) - np.min(vals)) > SYMMETRY_TOL:
        raise NotRotationallySymmetric(
            f"phi varies by {np.ptp(vals):.3g} on the circle; geodesic test needs rotational symmetry")
    dphi = (_circle_samples(g, center, r, n, dr) - _circle_samples(g, center, r, n, -dr)) / (2.0 * dr)
    return float(np.mean(dphi) + 1.0 / r)


def _inverted_chart(chart: DomainChart) -> DomainChart:
    cx, cy = chart.center
    c2 = cx * cx + cy * cy
    if chart.kind == "annulus" and c2 == 0.0:
        if chart.inner_radius == 0.0:
            raise OriginInDomain("annulus with zero inner radius contains the origin")
        return DomainChart("annulus", (0.0, 0.0), 1.0 / chart.inner_radius, 1.0 / chart.outer_radius,
                           chart.grid_n)
    R = chart.outer_radius * (np.sqrt(2.0) if chart.kind == "plane_window" else 1.0)
    if c2 <= R * R:
        raise OriginInDomain("chart contains a neighbourhood of the origin")
    # a disk avoiding 0 maps to a disk under w = 1/z
    k = c2 - R * R
    return DomainChart("disk", (cx / k, -cy / k), R / k, 0.0, chart.grid_n)


def chart_invert(g: MetricGrid) -> MetricGrid:
    """The same metric in the coordinate w = 1/z.

    phi~(w) = phi(1/w) - 2 ln|w|, resampled on the image chart. Plane
    windows are mapped through their circumscribed disk.
    """
    _require_live(g)
    image = _inverted_chart(g.chart)
    ev = g.evaluate

    def inverted(x, y):
        q = x * x + y * y
        return ev(x / q, -y / q) - np.log(q)

    return MetricGrid.from_function(image, inverted, note=f"inverted({g.note})")


def dirichlet_split(g: MetricGrid, subdisk: DomainChart, rtol: float = 1e-8,
                    maxiter: int | None = None) -> tuple[ScalarField, ScalarField]:
    """Split phi = u + v on ``subdisk``: lap u = lap phi, u = 0 outside; v harmonic.

    Uses the five-point Laplacian on the metric's own grid; nodes of the
    subdisk are unknowns and every other node is a zero Dirichlet value.
    """
    _require_live(g)
    if not g.chart.contains_chart(subdisk):
        raise RegionOutOfChart("subdisk must lie inside the chart")
    ch = g.chart
    h = ch.h
    X, Y = ch.mesh()
    inside = subdisk.contains(X, Y) & _stencil_mask(ch)
    inside[0, :] = inside[-1, :] = inside[:, 0] = inside[:, -1] = False
    idx = -np.ones(inside.shape, dtype=int)
    n_unknown = int(inside.sum())
    idx[inside] = np.arange(n_unknown)
    lap_phi = discrete_laplacian(g.phi, h)

    ii, jj = np.nonzero(inside)
    rows = [np.arange(n_unknown)]
    cols = [np.arange(n_unknown)]
    vals = [np.full(n_unknown, 4.0)]
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = idx[ii + di, jj + dj]
        ok = nb >= 0
        rows.append(np.arange(n_unknown)[ok])
        cols.append(nb[ok])
        vals.append(np.full(int(ok.sum()), -1.0))
    A = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(n_unknown, n_unknown)).tocsr()
    b = -lap_phi[inside] * h * h
    bnorm = float(np.linalg.norm(b))
    u = np.zeros_like(g.phi)
    if bnorm > 0:
        cap = maxiter if maxiter is not None else 20 * int(np.sqrt(n_unknown) + 1) * 10
        sol, info = cg(A, b, rtol=rtol * 1e-2, atol=0.0, maxiter=cap)
        resid = float(np.linalg.norm(A @ sol - b))
        if info != 0 or resid > rtol * bnorm:
            raise SolverDivergence(f"CG stopped with residual {resid:.3g} (target {rtol * bnorm:.3g})")
        u[inside] = sol
    v = g.phi - u
    return ScalarField(ch, u, inside.copy()), ScalarField(ch, v, inside.copy())
