"""Explicit metric families with closed-form oracles.

Every generator returns a :class:`MetricSequence` whose frames keep the exact
conformal factor as their ``source``, so operators can resample them at any
resolution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ChartTooSmall, ConfigError, CriticalPointInChart, GeometryError
from .grid_metric.operators import functionals
from .grid_metric.types import DomainChart, MetricGrid, MetricSequence, disk

logger = logging.getLogger(__name__)

FAMILIES = ("example1", "example2_disk", "example2_glued", "example3", "random_rotsym", "flat")
FUNCTIONAL_CAP = 1e3


@dataclass(frozen=True)
class FamilySpec:
    family: str = "example1"
    n_values: tuple[int, ...] = (10, 100, 1000)
    beta: float = 1.0
    roots: tuple[float, ...] = (1.0, 2.0)
    offset_exp: float = 0.33
    seed: int = 0
    chart: DomainChart = field(default_factory=lambda: disk((0.0, 0.0), 2.0, 512))
    normalized: bool = True
    amplitude: float = 1.0
    concentrate: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        ns = tuple(int(n) for n in self.n_values)
        if len(ns) < 2 or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] <= 0:
            raise ConfigError("n_values must be positive and strictly increasing (at least two)")
        object.__setattr__(self, "n_values", ns)
        object.__setattr__(self, "roots", tuple(float(r) for r in self.roots))
        if self.family.startswith("example2") and not 0.5 < self.beta < 1.5:
            raise ConfigError("example2 needs 0.5 < beta < 1.5")
        if not 0 <= self.amplitude <= 3:
            raise ConfigError("random_rotsym amplitude must lie in [0, 3]")


def _sequence(chart, fields, labels, notes) -> MetricSequence:
    frames = tuple(MetricGrid.from_function(chart, fn, note) for fn, note in zip(fields, notes))
    return MetricSequence(frames, tuple(labels))


def _loose_functionals(g: MetricGrid) -> tuple[float, float]:
    """Area and energy from a coarse adaptive pass; enough to bound them."""
    return functionals(g, g.chart, rtol=1e-2)


def check_functionals(seq: MetricSequence, cap: float = FUNCTIONAL_CAP) -> None:
    for n, g in zip(seq.labels, seq.frames):
        a, e = _loose_functionals(g)
        if not (np.isfinite(a) and np.isfinite(e)):
            raise GeometryError(f"frame n={n}: functionals are not finite")
        if a >= cap or e >= cap:
            raise GeometryError(f"frame n={n}: area {a:.4g} or energy {e:.4g} exceeds {cap:g}")


# ---------------------------------------------------------------- example 1

def example1_field(n: float, offset_exp: float = 0.33, normalized: bool = True):
    """phi_n for e^{2 phi} = c n^2 / (1 + n^2 |z + n^-offset|^2)^2, c = 4 or 1."""
    shift = float(n) ** (-offset_exp)
    lead = np.log(2.0 * n) if normalized else np.log(float(n))

    def phi(x, y):
        return lead - np.log1p(n * n * ((x + shift) ** 2 + y * y))

    return phi


def example1_center(n: float, offset_exp: float = 0.33) -> tuple[float, float]:
    return (-float(n) ** (-offset_exp), 0.0)


def example1_neck_radius(n: float, eps: float) -> float:
    """Larger root of eps n^2 r^2 - 4 pi n r + eps = 0 (circle length = eps)."""
    disc = 16.0 * np.pi**2 - 4.0 * eps * eps
    if disc < 0:
        raise ValueError("filter exceeds the largest circle length 2 pi")
    return (4.0 * np.pi + np.sqrt(disc)) / (2.0 * eps * n)


def gen_example1(spec: FamilySpec) -> MetricSequence:
    ch = spec.chart
    for n in spec.n_values:
        c = example1_center(n, spec.offset_exp)
        if not ch.contains(np.array(c[0]), np.array(c[1])):
            raise ChartTooSmall(f"chart does not contain the bubble centre {c} of frame n={n}")
    fields = [example1_field(n, spec.offset_exp, spec.normalized) for n in spec.n_values]
    tag = "" if spec.normalized else ",raw"
    seq = _sequence(ch, fields, spec.n_values, [f"example1(n={n}{tag})" for n in spec.n_values])
    check_functionals(seq)
    return seq


# ---------------------------------------------------------------- example 2

CAP_RADIUS = 2.0


def _profile(r, beta):
    return -np.log(r) - beta * np.log(np.log(r))


def _profile_d1(r, beta):
    return -1.0 / r - beta / (r * np.log(r))


def _profile_d2(r, beta):
    L = np.log(r)
    return 1.0 / r**2 + beta * (L + 1.0) / (r**2 * L**2)


def _cap_coefficients(beta: float) -> tuple[float, float, float]:
    """a + b r^2 + c r^4 matching the profile to second order at r = 2."""
    R = CAP_RADIUS
    A = np.array([[1.0, R**2, R**4], [0.0, 2 * R, 4 * R**3], [0.0, 2.0, 12 * R**2]])
    rhs = np.array([_profile(R, beta), _profile_d1(R, beta), _profile_d2(R, beta)])
    a, b, c = np.linalg.solve(A, rhs)
    return float(a), float(b), float(c)


def example2_profile(beta: float):
    """Radial conformal factor phi(r) = -ln r - beta ln ln r for r > 2, smooth cap inside."""
    a, b, c = _cap_coefficients(beta)

    def phi_r(r):
        r = np.asarray(r, dtype=float)
        s = r * r
        with np.errstate(invalid="ignore", divide="ignore"):
            outer = _profile(np.maximum(r, CAP_RADIUS), beta)
        return np.where(r > CAP_RADIUS, outer, a + b * s + c * s * s)

    return phi_r


def example2_constants(n: float, beta: float) -> dict:
    ln_n = np.log(n)
    return {"eps": beta / ln_n, "delta": beta / ln_n**2, "T": n + ln_n}


def _smoothstep5(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def example2_radial(n: float, beta: float, blend: bool = True):
    """phi_n(r): the profile for r <= n, the quadratic neck branch beyond.

    The literal branches meet with a slope jump at r = n. With ``blend`` the
    switch happens over the first half of the neck [n, n + ln(n)/2] through a
    C^2 smoothstep, which leaves both r <= n and the geodesic at T_n untouched.
    """
    k = example2_constants(n, beta)
    eps, dl = k["eps"], k["delta"]
    base = _profile(n, beta) + np.log(n)
    prof = example2_profile(beta)
    w = 0.5 * np.log(n)

    def neck(r):
        return base - np.log(r) - eps * (r - n) + 0.5 * dl * (r - n) ** 2

    def phi_r(r):
        r = np.asarray(r, dtype=float)
        safe = np.maximum(r, 1e-300)
        inner = prof(r)
        outer = neck(safe)
        if not blend:
            return np.where(r <= n, inner, outer)
        s = _smoothstep5((r - n) / w)
        with np.errstate(invalid="ignore", divide="ignore"):
            mixed = (1.0 - s) * prof(np.maximum(r, n)) + s * outer
        return np.where(r <= n, inner, mixed)

    return phi_r


def example2_field(n: float, beta: float, center=(0.0, 0.0), blend: bool = True):
    rad = example2_radial(n, beta, blend)
    cx, cy = center

    def phi(x, y):
        return rad(np.hypot(x - cx, y - cy))

    return phi


def example2_glued_field(n: float, beta: float, blend: bool = True):
    """The doubled sphere in the chart zeta = 1/z, reflected across |z| = T_n.

    |zeta| >= 1/T is the original disk; |zeta| < 1/T is the mirror copy,
    where the copy of the profile concentrates at zeta = 0 as n grows.
    """
    rad = example2_radial(n, beta, blend)
    T = example2_constants(n, beta)["T"]
    lnT2 = 2.0 * np.log(T)

    def phi(x, y):
        rho = np.hypot(x, y)
        safe = np.maximum(rho, 1e-300)
        mirror = rad(T * T * rho) + lnT2
        with np.errstate(divide="ignore"):
            direct = rad(1.0 / safe) - 2.0 * np.log(safe)
        return np.where(rho <= 1.0 / T, mirror, direct)

    return phi


def gen_example2(spec: FamilySpec) -> MetricSequence:
    ch = spec.chart
    ns = spec.n_values
    if ns[0] < 8:
        raise ConfigError("example2 needs n >= 8")
    if spec.family == "example2_glued":
        # the chart must stay inside |zeta| <= 1/2, i.e. outside the cap |z| < 2
        lim = 1.0 / CAP_RADIUS
        if np.hypot(*ch.center) + ch.outer_radius * (np.sqrt(2) if ch.kind == "plane_window" else 1.0) > lim + 1e-12:
            raise ChartTooSmall("glued chart must lie in |zeta| <= 1/2")
        fields = [example2_glued_field(n, spec.beta) for n in ns]
        notes = [f"example2_glued(n={n},beta={spec.beta})" for n in ns]
    else:
        for n in ns:
            T = example2_constants(n, spec.beta)["T"]
            if not ch.contains_circle(ch.center, T):
                raise ChartTooSmall(f"chart radius {ch.outer_radius} does not cover D_T with T={T:.6g}")
        fields = [example2_field(n, spec.beta, ch.center) for n in ns]
        notes = [f"example2_disk(n={n},beta={spec.beta})" for n in ns]
    seq = _sequence(ch, fields, ns, notes)
    for n, g in zip(ns, seq.frames):
        a, e = _loose_functionals(g)
        if not (np.isfinite(a) and np.isfinite(e)):
            raise GeometryError(f"example2 frame n={n} has non-finite functionals")
        if e >= FUNCTIONAL_CAP:
            logger.warning("functionals<1e3: example2 frame n=%d has neck energy %.3g", n, e)
    return seq


# ---------------------------------------------------------------- example 3

def _poly(roots):
    return np.poly1d(np.poly(np.asarray(roots, dtype=float)))


def example3_field(n: float, roots: Sequence[float] = (1.0, 2.0)):
    """phi_n = ln(2 n |f'| / (1 + n^2 |f|^2)) with f = prod (z - root)."""
    f = _poly(roots)
    df = f.deriv()
    cf = f.coeffs.astype(complex)
    cdf = df.coeffs.astype(complex)

    def phi(x, y):
        z = np.asarray(x) + 1j * np.asarray(y)
        fz = np.polyval(cf, z)
        dfz = np.polyval(cdf, z)
        return np.log(2.0 * n * np.abs(dfz)) - np.log1p(n * n * np.abs(fz) ** 2)

    return phi


def critical_points(roots: Sequence[float]) -> np.ndarray:
    return _poly(roots).deriv().roots.astype(complex)


def gen_example3(spec: FamilySpec) -> MetricSequence:
    ch = spec.chart
    roots = spec.roots
    if not roots:
        raise ConfigError("example3 needs at least one root")
    X, Y = ch.mesh()
    inside = ch.contains(X, Y)
    dfz = np.polyval(_poly(roots).deriv().coeffs.astype(complex), X + 1j * Y)
    if np.any(np.abs(dfz[inside]) < 1e-9):
        raise CriticalPointInChart("f' vanishes at a node of the chart")
    for c in critical_points(roots):
        if ch.contains(np.array(c.real), np.array(c.imag)):
            raise CriticalPointInChart(f"critical point {c:.6g} of f lies inside the chart")
    fields = [example3_field(n, roots) for n in spec.n_values]
    seq = _sequence(ch, fields, spec.n_values, [f"example3(n={n},m={len(roots)})" for n in spec.n_values])
    check_functionals(seq)
    return seq


# ---------------------------------------------------------------- random

RANDOM_KNOTS = 4
RANDOM_ENERGY_BUDGET = 250.0


def _radial_samples(spl, R2: float, r_max: float, samples: int = 4001):
    """Laplacian, value and radius of the unscaled profile on [0, r_max]."""
    r = np.linspace(0.0, r_max, samples)
    u = r * r / R2
    p, pu, puu = spl(u), spl(u, 1), spl(u, 2)
    # Laplacian of p(r^2 / R^2) in the plane
    lap = (4.0 * u * puu + 4.0 * pu) / R2
    return lap, p, r


def random_radial_profile(seed: int, radius: float, amplitude: float = 1.0,
                          energy_budget: float = RANDOM_ENERGY_BUDGET):
    """Seeded C^2 radial profile: a natural cubic spline in r^2 with |phi| <= amplitude.

    Splining in r^2 keeps the field smooth through the centre. The shape is
    first scaled so its peak equals ``amplitude``, then damped by factors of
    0.8 until the curvature energy over the disk of radius sqrt(2) * radius
    (which covers a square chart too) is at most ``energy_budget``.
    """
    rng = np.random.default_rng(seed)
    # knots span u = r^2 / radius^2 in [0, 2], i.e. out to the corners of a
    # square chart of half-width ``radius``
    u = np.linspace(0.0, 2.0, RANDOM_KNOTS)
    vals = rng.uniform(-1.0, 1.0, RANDOM_KNOTS)
    spl = CubicSpline(u, vals, bc_type="natural")
    probe = spl(np.linspace(0.0, 2.0, 4097))
    peak = float(np.max(np.abs(probe)))
    scale = 0.0 if amplitude == 0 or peak == 0 else amplitude / peak
    R2 = float(radius) ** 2
    lap, p, r = _radial_samples(spl, R2, np.sqrt(2.0) * float(radius))
    for _ in range(200):
        energy = float(np.trapezoid(scale**2 * lap**2 * np.exp(-2.0 * scale * p) * 2.0 * np.pi * r, r))
        if energy <= energy_budget:
            break
        scale *= 0.8

    def phi_r(r):
        # the cubic continues smoothly past r = radius, so quadrature halos
        # that poke outside the chart see no kink
        return scale * spl(np.asarray(r, dtype=float) ** 2 / R2)

    return phi_r


def random_rotsym_field(seed: int, radius: float, amplitude: float = 1.0, center=(0.0, 0.0)):
    prof = random_radial_profile(seed, radius, amplitude)
    cx, cy = center

    def phi(x, y):
        return prof(np.hypot(np.asarray(x) - cx, np.asarray(y) - cy))

    return phi


def gen_random_rotsym(spec: FamilySpec) -> MetricSequence:
    ch = spec.chart
    base = random_rotsym_field(spec.seed, ch.outer_radius, spec.amplitude, ch.center)
    if not spec.concentrate:
        fields = [base] * len(spec.n_values)
    else:
        rng = np.random.default_rng([spec.seed, 1])
        ang = rng.uniform(0, 2 * np.pi)
        off = rng.uniform(0, 0.3) * ch.outer_radius
        cx = ch.center[0] + off * np.cos(ang)
        cy = ch.center[1] + off * np.sin(ang)

        def bubbled(n):
            def phi(x, y):
                b = np.log(2.0 * n) - np.log1p(n * n * ((x - cx) ** 2 + (y - cy) ** 2))
                return 0.5 * np.logaddexp(2.0 * base(x, y), 2.0 * b)
            return phi

        fields = [bubbled(n) for n in spec.n_values]
    seq = _sequence(ch, fields, spec.n_values, [f"random_rotsym(seed={spec.seed},n={n})" for n in spec.n_values])
    check_functionals(seq)
    return seq


def gen_flat(spec: FamilySpec) -> MetricSequence:
    zero = lambda x, y: np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)  # noqa: E731
    return _sequence(spec.chart, [zero] * len(spec.n_values), spec.n_values, ["flat"] * len(spec.n_values))


GENERATORS = {
    "example1": gen_example1,
    "example2_disk": gen_example2,
    "example2_glued": gen_example2,
    "example3": gen_example3,
    "random_rotsym": gen_random_rotsym,
    "flat": gen_flat,
}


def generate(spec: FamilySpec) -> MetricSequence:
    return GENERATORS[spec.family](spec)
