"""
Core module for the goodness-of-fit pipeline.

This module contains the point-pattern geometry and the Gibbs models:
- Configuration / Cube / CellGrid: marked patterns, windows and partitions
- PoissonModel / TwoTypeStrauss / AreaInteraction: exponential-family models
"""

from .geometry import (
    Configuration,
    Cube,
    CellGrid,
    MarkedPoint,
    ObservationDomain,
    nearest_distance,
    partition_window,
    restrict
)
from .models import (
    AreaInteraction,
    GibbsModel,
    PoissonModel,
    TwoTypeStrauss,
    added_disc_area,
    make_model
)

__all__ = [
    'Configuration',
    'Cube',
    'CellGrid',
    'MarkedPoint',
    'ObservationDomain',
    'nearest_distance',
    'partition_window',
    'restrict',
    'AreaInteraction',
    'GibbsModel',
    'PoissonModel',
    'TwoTypeStrauss',
    'added_disc_area',
    'make_model'
]
