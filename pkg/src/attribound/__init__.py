"""Conservative one-sided bounds on attributable treatment effects under
arbitrary interference, plus a spatial simulation harness."""

__version__ = "0.1.0"

from attribound.model import (
    CounterfactualBound,
    DistanceProvider,
    ExperimentData,
    SmoothingKernel,
    ValidationError,
    build_kernel,
    distances_from_edges,
    validate,
)

__all__ = [
    "__version__",
    "CounterfactualBound",
    "DistanceProvider",
    "ExperimentData",
    "SmoothingKernel",
    "ValidationError",
    "build_kernel",
    "distances_from_edges",
    "validate",
]
