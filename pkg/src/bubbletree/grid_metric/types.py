"""Charts, metric samples and the small records produced by the operators."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from ..errors import GridTooCoarse, GeometryError, VanishedMetric

FieldFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

CHART_KINDS = ("disk", "plane_window", "annulus")


def _ramp(t):
    return np.clip(t + 0.5, 0.0, 1.0)


@dataclass(frozen=True)
class DomainChart:
    """A coordinate domain sampled by a uniform ``grid_n`` x ``grid_n`` grid.

    The grid covers the bounding square ``center +- outer_radius``. A
    ``plane_window`` is that whole square; ``disk`` and ``annulus`` are the
    round subsets of it.
    """

    kind: str = "disk"
    center: tuple[float, float] = (0.0, 0.0)
    outer_radius: float = 1.0
    inner_radius: float = 0.0
    grid_n: int = 256

    def __post_init__(self):
        if self.kind not in CHART_KINDS:
            raise GeometryError(f"unknown chart kind {self.kind!r}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "outer_radius", float(self.outer_radius))
        object.__setattr__(self, "inner_radius", float(self.inner_radius))
        object.__setattr__(self, "grid_n", int(self.grid_n))
        if not self.outer_radius > 0:
            raise GeometryError("outer_radius must be positive")
        if not 0 <= self.inner_radius < self.outer_radius:
            raise GeometryError("need 0 <= inner_radius < outer_radius")
        if self.kind != "annulus" and self.inner_radius != 0:
            raise GeometryError("inner_radius is only meaningful for annulus charts")
        if self.grid_n < 16:
            raise GridTooCoarse(f"grid_n={self.grid_n} < 16")

    @property
    def h(self) -> float:
        return 2.0 * self.outer_radius / (self.grid_n - 1)

    @cached_property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        cx, cy = self.center
        t = np.linspace(-self.outer_radius, self.outer_radius, self.grid_n)
        return cx + t, cy + t

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates, indexed ``[i, j]`` with ``i`` along x."""
        xs, ys = self.axes
        return np.meshgrid(xs, ys, indexing="ij")

    def coverage(self, x, y, d) -> np.ndarray:
        """Fraction of the square cell of side ``d`` centred at (x, y) in the domain.

        Linear ramp in the signed distance to the boundary: exact for
        axis-aligned edges, second order along circles, and monotone in the
        radii so nested disks give nested weights.
        """
        cx, cy = self.center
        dx = np.asarray(x) - cx
        dy = np.asarray(y) - cy
        if self.kind == "plane_window":
            R = self.outer_radius
            return _ramp((R - np.abs(dx)) / d) * _ramp((R - np.abs(dy)) / d)
        rho = np.hypot(dx, dy)
        w = _ramp((self.outer_radius - rho) / d)
        if self.kind == "annulus":
            w = w - _ramp((self.inner_radius - rho) / d)
        return w

    def contains(self, x, y, margin: float = 0.0) -> np.ndarray:
        cx, cy = self.center
        dx = np.asarray(x) - cx
        dy = np.asarray(y) - cy
        if self.kind == "plane_window":
            # closed square: its edge nodes are grid nodes and belong to it
            R = self.outer_radius - margin + 1e-12 * self.outer_radius
            return (np.abs(dx) <= R) & (np.abs(dy) <= R)
        rho = np.hypot(dx, dy)
        inside = rho < self.outer_radius - margin
        if self.kind == "annulus":
            inside &= rho > self.inner_radius + margin
        return inside

    def contains_disk(self, c, r: float, tol: float = 1e-9) -> bool:
        """Whether the closed disk D_r(c) lies in the domain."""
        slack = tol * max(1.0, self.outer_radius)
        dx = float(c[0]) - self.center[0]
        dy = float(c[1]) - self.center[1]
        if self.kind == "plane_window":
            R = self.outer_radius + slack
            return abs(dx) + r <= R and abs(dy) + r <= R
        off = float(np.hypot(dx, dy))
        if off + r > self.outer_radius + slack:
            return False
        if self.kind == "annulus":
            # disk must avoid the hole entirely
            return off - r >= self.inner_radius - slack
        return True

    def contains_circle(self, c, r: float, tol: float = 1e-9) -> bool:
        """Whether the circle |z - c| = r lies in the closed domain."""
        if self.kind != "annulus":
            return self.contains_disk(c, r, tol)
        slack = tol * max(1.0, self.outer_radius)
        off = float(np.hypot(float(c[0]) - self.center[0], float(c[1]) - self.center[1]))
        if off + r > self.outer_radius + slack:
            return False
        # either the circle encloses the hole or stays beside it
        return r - off >= self.inner_radius - slack or off - r >= self.inner_radius - slack

    def contains_chart(self, other: "DomainChart", tol: float = 1e-9) -> bool:
        """Whether the domain of ``other`` lies inside this domain."""
        slack = tol * max(1.0, self.outer_radius)
        ox, oy = other.center
        R = other.outer_radius
        if other.kind == "plane_window":
            corners = np.array([(ox + sx * R, oy + sy * R) for sx in (-1, 1) for sy in (-1, 1)])
            if self.kind == "plane_window":
                outer_ok = bool(np.all(np.abs(corners - self.center) <= self.outer_radius + slack))
            else:
                outer_ok = bool(np.all(np.hypot(*(corners - self.center).T) <= self.outer_radius + slack))
        else:
            outer_ok = self.contains_disk(other.center, R, tol) if self.kind != "annulus" else (
                float(np.hypot(ox - self.center[0], oy - self.center[1])) + R <= self.outer_radius + slack)
        if not outer_ok or self.kind != "annulus":
            return outer_ok
        # our hole must not meet the other domain
        hx, hy = self.center
        rh = self.inner_radius
        dist = float(np.hypot(ox - hx, oy - hy))
        if other.kind == "plane_window":
            qx = max(abs(hx - ox) - R, 0.0)
            qy = max(abs(hy - oy) - R, 0.0)
            return float(np.hypot(qx, qy)) >= rh - slack
        if dist >= R + rh - slack:
            return True
        return other.kind == "annulus" and dist + rh <= other.inner_radius + slack

    def project(self, x, y):
        """Move points into the closed domain along rays from the chart centre."""
        cx, cy = self.center
        dx = np.asarray(x, dtype=float) - cx
        dy = np.asarray(y, dtype=float) - cy
        if self.kind == "plane_window":
            R = self.outer_radius
            return cx + np.clip(dx, -R, R), cy + np.clip(dy, -R, R)
        rho = np.hypot(dx, dy)
        lo = self.inner_radius * (1 + 1e-9) if self.kind == "annulus" else 0.0
        target = np.clip(rho, lo, self.outer_radius)
        safe = np.where(rho > 0, rho, 1.0)
        ux = np.where(rho > 0, dx / safe, 1.0)
        uy = np.where(rho > 0, dy / safe, 0.0)
        return cx + target * ux, cy + target * uy

    def with_grid(self, grid_n: int) -> "DomainChart":
        return DomainChart(self.kind, self.center, self.outer_radius, self.inner_radius, grid_n)


def disk(center=(0.0, 0.0), radius: float = 1.0, grid_n: int = 256) -> DomainChart:
    return DomainChart("disk", tuple(center), radius, 0.0, grid_n)


def annulus(center=(0.0, 0.0), inner: float = 0.5, outer: float = 1.0, grid_n: int = 256) -> DomainChart:
    return DomainChart("annulus", tuple(center), outer, inner, grid_n)


def window(center=(0.0, 0.0), half_width: float = 1.0, grid_n: int = 256) -> DomainChart:
    return DomainChart("plane_window", tuple(center), half_width, 0.0, grid_n)


@dataclass(frozen=True, eq=False)
class MetricGrid:
    """Conformal metric e^{2 phi}(dx^2 + dy^2) sampled on ``chart``.

    ``source`` is the continuous field the samples came from, when known.
    Operators resample through :meth:`evaluate`, which uses the source if
    present and a bicubic interpolant of the samples otherwise.
    """

    chart: DomainChart
    phi: np.ndarray | None
    vanished: bool = False
    source: FieldFn | None = field(default=None, repr=False)
    note: str = ""

    def __post_init__(self):
        if self.vanished:
            return
        phi = np.asarray(self.phi, dtype=float)
        n = self.chart.grid_n
        if phi.shape != (n, n):
            raise GeometryError(f"phi has shape {phi.shape}, expected {(n, n)}")
        if not np.all(np.isfinite(phi)):
            raise GeometryError("phi samples must be finite (use vanished=True for the zero metric)")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def from_function(cls, chart: DomainChart, fn: FieldFn, note: str = "") -> "MetricGrid":
        X, Y = chart.mesh()
        phi = _safe_eval(fn, chart, X, Y)
        return cls(chart, phi, False, fn, note)

    @classmethod
    def zero_metric(cls, chart: DomainChart) -> "MetricGrid":
        return cls(chart, None, True)

    @property
    def exact(self) -> bool:
        return self.source is not None

    @cached_property
    def _spline(self):
        from scipy.interpolate import RectBivariateSpline

        xs, ys = self.chart.axes
        return RectBivariateSpline(xs, ys, self.phi, kx=3, ky=3)

    def evaluate(self, x, y) -> np.ndarray:
        """phi at arbitrary points (not restricted to grid nodes)."""
        if self.vanished:
            raise VanishedMetric("the zero metric has no conformal factor")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.source is not None:
            return _safe_eval(self.source, self.chart, x, y)
        xs, ys = self.chart.axes
        xc = np.clip(x, xs[0], xs[-1])
        yc = np.clip(y, ys[0], ys[-1])
        return self._spline.ev(xc.ravel(), yc.ravel()).reshape(x.shape)

    def restrict(self, chart: DomainChart) -> "MetricGrid":
        """Same metric sampled on another chart of the same coordinates."""
        if self.vanished:
            return MetricGrid.zero_metric(chart)
        return MetricGrid.from_function(chart, self.evaluate, self.note)

    def shifted(self, c: float) -> "MetricGrid":
        """phi + c (metric scaled by e^{2c})."""
        if self.vanished:
            return self
        src = None if self.source is None else (lambda x, y, s=self.source: s(x, y) + c)
        return MetricGrid(self.chart, self.phi + c, False, src, self.note)


def _safe_eval(fn: FieldFn, chart: DomainChart, x, y) -> np.ndarray:
    with np.errstate(all="ignore"):
        vals = np.asarray(fn(x, y), dtype=float)
    vals = np.broadcast_to(vals, np.shape(x)).copy()
    bad = ~np.isfinite(vals)
    if bad.any():
        px, py = chart.project(np.asarray(x)[bad], np.asarray(y)[bad])
        with np.errstate(all="ignore"):
            vals[bad] = np.asarray(fn(px, py), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise GeometryError("conformal factor is not finite inside the chart")
    return vals


@dataclass(frozen=True, eq=False)
class MetricSequence:
    frames: tuple[MetricGrid, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        labels = tuple(int(n) for n in self.labels)
        if len(frames) < 2:
            raise GeometryError("a metric sequence needs at least two frames")
        if len(labels) != len(frames):
            raise GeometryError("one label per frame")
        if any(n <= 0 for n in labels) or any(b <= a for a, b in zip(labels, labels[1:])):
            raise GeometryError("labels must be positive and strictly increasing")
        chart = frames[0].chart
        if any(f.chart != chart for f in frames):
            raise GeometryError("all frames must share one chart")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "labels", labels)

    @property
    def chart(self) -> DomainChart:
        return self.frames[0].chart

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def tail(self, window: int) -> "list[tuple[int, MetricGrid]]":
        k = max(1, min(int(window), len(self.frames)))
        return list(zip(self.labels[-k:], self.frames[-k:]))

    def subsequence(self, indices: Sequence[int]) -> "MetricSequence":
        idx = sorted(indices)
        return MetricSequence(tuple(self.frames[i] for i in idx), tuple(self.labels[i] for i in idx))

    def shifted(self, c: float) -> "MetricSequence":
        return MetricSequence(tuple(f.shifted(c) for f in self.frames), self.labels)


@dataclass(frozen=True, eq=False)
class ScalarField:
    chart: DomainChart
    values: np.ndarray
    valid_mask: np.ndarray


@dataclass(frozen=True)
class RadialStats:
    center: tuple[float, float]
    radius: float
    average: float
    flux: float
    circle_length: float
    sup_phi: float
    inf_phi: float
