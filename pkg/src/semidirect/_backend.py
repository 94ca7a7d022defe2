"""Numba/numpy backend selection for the hot kernels.

Set SEMIDIRECT_NUMBA=0 to force the pure-numpy fallback path; any other value
(or unset) uses numba when it is importable.  The choice is made once at
import time; `benchmarks/bench_kernels.py` compares the two paths.
"""

import os


def _detect() -> bool:
    flag = os.environ.get("SEMIDIRECT_NUMBA", "auto").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        if flag in ("1", "true", "on", "yes"):
            raise
        return False
    return True


NUMBA_ENABLED = _detect()


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
