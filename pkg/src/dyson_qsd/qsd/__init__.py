"""Killed-process quantities: regions, survival, Fleming-Viot and oracles."""

from .regions import Region, region_contains  # noqa: F401
from .measures import EmpiricalMeasure, tv_distance  # noqa: F401
