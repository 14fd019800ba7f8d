"""JIT backend selection.

Kernels are compiled with numba unless ``SRM_RIPPLE_DISABLE_NUMBA`` is set to a
truthy value (or numba is not importable), in which case the same functions run
as plain Python over numpy arrays. The choice is made once, at import time.
"""

import os

_FLAG = "SRM_RIPPLE_DISABLE_NUMBA"


def _flag_set():
    return os.environ.get(_FLAG, "").strip().lower() not in ("", "0", "false", "no")


if _flag_set():
    NUMBA_AVAILABLE = False
else:
    try:
        from numba import njit as _numba_njit

        NUMBA_AVAILABLE = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_AVAILABLE = False


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise an identity decorator."""
    if NUMBA_AVAILABLE:
        return _numba_njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def decorator(func):
        return func

    return decorator


def backend_name():
    return "numba" if NUMBA_AVAILABLE else "python"
