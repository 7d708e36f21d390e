"""Kernel backend selection: numba-jitted loops or a pure-numpy path.

The hot numerical kernels (the quadratic-cost convolution recursions and
the event-driven simulation loops) exist in two flavors:

* the default, compiled with ``numba.njit(cache=True)``;
* a pure-python/numpy fallback with identical semantics.

Selection is controlled by the ``LOSSFLUID_BACKEND`` environment variable:

* ``auto`` (default): use numba if it imports, numpy otherwise;
* ``numba``: require numba, raise if unavailable;
* ``numpy``: force the fallback even when numba is installed.

``benchmarks/bench_backends.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

_ENV_VAR = "LOSSFLUID_BACKEND"
_VALID = ("auto", "numba", "numpy")


def _resolve() -> str:
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice not in _VALID:
        raise RuntimeError(
            f"{_ENV_VAR} must be one of {_VALID}, got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise RuntimeError(f"{_ENV_VAR}=numba but numba is not importable")
        return "numpy"
    return "numba"


BACKEND = _resolve()
NUMBA_ENABLED = BACKEND == "numba"

if NUMBA_ENABLED:
    from numba import njit as _njit

    def jit_kernel(func):
        """Compile an event-loop kernel (scalar loops, nogil)."""
        return _njit(cache=True, nogil=True)(func)

else:

    def jit_kernel(func):
        """Fallback: run the kernel as plain Python."""
        return func
