"""Kernel compilation switch.

Hot loops are written in the subset of Python that numba compiles.  Setting
``REORDERDG_DISABLE_JIT=1`` in the environment before import runs the very
same functions as plain Python/numpy, which is slow but handy for debugging
and for checking that both paths agree.
"""
import os

_FLAG = os.environ.get("REORDERDG_DISABLE_JIT", "").strip().lower()
JIT_ENABLED = _FLAG not in ("1", "true", "yes", "on")

if JIT_ENABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a hard dependency
        numba = None
        JIT_ENABLED = False
else:
    numba = None


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def backend():
    return "numba" if JIT_ENABLED else "python"
