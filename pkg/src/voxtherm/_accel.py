"""Selects between numba-compiled kernels and the pure-numpy fallbacks.

Set ``VOXTHERM_PURE_NUMPY=1`` to force the numpy path (also used when numba
is not importable).
"""
import os

_FALSY = ("", "0", "false", "no", "off")

try:
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    _numba_njit = None


def _flag_set():
    return os.environ.get("VOXTHERM_PURE_NUMPY", "0").strip().lower() not in _FALSY


USE_NUMBA = HAVE_NUMBA and not _flag_set()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, otherwise a no-op decorator.

    Compilation happens regardless of the env flag so that the benchmark can
    compare both paths in one process; the flag only picks the default.
    """
    if HAVE_NUMBA:
        return _numba_njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def decorator(func):
        return func

    return decorator


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
