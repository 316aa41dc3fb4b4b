"""Metapopulation SI outbreaks and identification of their invasion pathways
from per-node infected counts."""

__version__ = "0.1.0"

from .errors import DataInconsistencyError, DegenerateCaseError, PathfinderError  # noqa: E402
from .network import MetapopNetwork, SurveillanceSeries  # noqa: E402

__all__ = [
    "__version__",
    "DataInconsistencyError",
    "DegenerateCaseError",
    "MetapopNetwork",
    "PathfinderError",
    "SurveillanceSeries",
]
