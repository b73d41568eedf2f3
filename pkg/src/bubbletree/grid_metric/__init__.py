"""Conformal metrics on a chart and their geometric functionals."""

from .operators import (chart_invert, circle_length, curvature_field, dirichlet_split, discrete_laplacian,
                        functionals, geodesic_defect, integrals, quadrature_nodes, radial_stats,
                        total_curvature)
from .quadrature import Integrals, NodeSet, integrate_region, sample_region
from .types import (DomainChart, MetricGrid, MetricSequence, RadialStats, ScalarField, annulus, disk,
                    window)

__all__ = [
    "DomainChart", "MetricGrid", "MetricSequence", "RadialStats", "ScalarField", "Integrals", "NodeSet",
    "annulus", "disk", "window", "chart_invert", "circle_length", "curvature_field", "dirichlet_split",
    "discrete_laplacian", "functionals", "geodesic_defect", "integrals", "quadrature_nodes",
    "radial_stats", "total_curvature", "integrate_region", "sample_region",
]
