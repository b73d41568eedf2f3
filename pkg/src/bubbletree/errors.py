"""Exception hierarchy shared by all analysis stages."""


class BubbleTreeError(Exception):
    """Base class; ``invariant`` names the violated contract for diagnostics."""

    invariant = "analysis"


class GeometryError(BubbleTreeError, ValueError):
    invariant = "geometry"


class VanishedMetric(GeometryError):
    invariant = "metric-not-vanished"


class GridTooCoarse(GeometryError):
    invariant = "grid_n>=16"


class RegionOutOfChart(GeometryError):
    invariant = "region-inside-chart"


class CircleOutOfChart(GeometryError):
    invariant = "circle-inside-chart"


class OriginInDomain(GeometryError):
    invariant = "inversion-excludes-origin"


class WindowOutOfChart(GeometryError):
    invariant = "window-inside-chart"


class WindowExceedsSource(GeometryError):
    invariant = "rescale-window-inside-source"


class RadiusUnresolvable(GeometryError):
    invariant = "smallest-radius>=4h"


class ChartTooSmall(GeometryError):
    invariant = "chart-covers-family"


class CriticalPointInChart(GeometryError):
    invariant = "no-critical-point-of-f"


class NotRotationallySymmetric(GeometryError):
    invariant = "rotational-symmetry"


class SolverDivergence(BubbleTreeError, RuntimeError):
    invariant = "dirichlet-solver-converged"


class CountBoundViolated(BubbleTreeError):
    invariant = "bubble-count<=sqrt(C1*C2)/2pi"


class NoConcentration(BubbleTreeError):
    invariant = "neck-exists"


class NoCrossing(NoConcentration):
    invariant = "neck-crossing-exists"


class PreconditionLengthTooLarge(NoConcentration):
    invariant = "L(r1)<=eps"


class BudgetViolated(BubbleTreeError):
    invariant = "child-budget<=parent-concentration"


class DepthExceeded(BubbleTreeError):
    invariant = "depth<=max_depth"


class ThinViolation(BubbleTreeError):
    invariant = "thin-circle-length<eps"


class ConfigError(BubbleTreeError, ValueError):
    invariant = "config-schema"


class SequenceFormatError(BubbleTreeError, ValueError):
    invariant = "btseq-format"
