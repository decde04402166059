"""Hot-loop kernels with a numba backend and a pure-numpy fallback.

The active backend is chosen once at import time: numba when available,
unless ``ATTRIBOUND_DISABLE_NUMBA`` is set (see ``attribound._accel``).
Both backends are importable directly (``attribound._kernels.jit`` /
``attribound._kernels.ref``) for parity tests and benchmarks.
"""

from attribound._accel import numba_available

if numba_available():
    from attribound._kernels import jit as _backend

    NUMBA_ACTIVE = True
else:
    from attribound._kernels import ref as _backend

    NUMBA_ACTIVE = False

BACKEND_NAME = "numba" if NUMBA_ACTIVE else "numpy"

dinic_maxflow = _backend.dinic_maxflow
grid_scan_descending = _backend.grid_scan_descending
hypergeom_uppertail = _backend.hypergeom_uppertail
bounded_level_dp = _backend.bounded_level_dp

__all__ = [
    "NUMBA_ACTIVE",
    "BACKEND_NAME",
    "dinic_maxflow",
    "grid_scan_descending",
    "hypergeom_uppertail",
    "bounded_level_dp",
]
