"""Backend selection for the compiled kernels.

The hot inner loops live in ``attribound._kernels.jit`` (numba ``@njit``) with
pure-numpy equivalents in ``attribound._kernels.ref``.  The jit backend is used
whenever numba imports cleanly; set ``ATTRIBOUND_DISABLE_NUMBA=1`` to force the
numpy path (useful for debugging and for the benchmark comparison).
"""

import os

ENV_FLAG = "ATTRIBOUND_DISABLE_NUMBA"


def numba_disabled() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


def numba_available() -> bool:
    if numba_disabled():
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True
