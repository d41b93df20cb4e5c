"""Python access to the kforge core: polygons, sample clouds, balanced-metric
iterations, curvature and the real Monge-Ampere solver."""

from ._kforge import (
    CloudError,
    ConfigError,
    Cloud,
    GeometryError,
    ParseError,
    Polygon,
    Weights,
    build_grid,
    potential,
    real_ma,
    run_iteration,
    scalar_curvature,
    sections,
    soliton,
)

__all__ = [
    "CloudError",
    "ConfigError",
    "Cloud",
    "GeometryError",
    "ParseError",
    "Polygon",
    "Weights",
    "build_grid",
    "potential",
    "real_ma",
    "run_iteration",
    "scalar_curvature",
    "sections",
    "soliton",
]
