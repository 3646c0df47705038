"""Backend selection for the numeric kernels.

Hot loops (rasterization, lattice noise) exist twice: a numba ``@njit``
kernel and a vectorized numpy fallback.  The numba path is used when numba
imports and ``SHAPEATTR_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are
always importable so tests can compare them.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_disabled():
    return os.environ.get("SHAPEATTR_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend():
    return "numba" if USE_NUMBA else "numpy"


def set_backend(name):
    """Switch kernels at runtime; ``name`` is ``"numba"`` or ``"numpy"``."""
    global USE_NUMBA
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    USE_NUMBA = name == "numba"
