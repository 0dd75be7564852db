"""Switch between numba-compiled kernels and the pure numpy fallback.

Set ``APNN_DISABLE_NUMBA=1`` in the environment (before import) to force the
numpy path. The flag is also flipped automatically when numba cannot be
imported.
"""
import os

_disabled = os.environ.get("APNN_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError
    from numba import njit as _njit

    USE_NUMBA = True
except ImportError:
    _njit = None
    USE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if _njit is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return _njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_allocator_tuned = False


def tune_allocator(threshold=1 << 30):
    """Keep large temporaries on the glibc heap instead of fresh mmaps.

    Training allocates the same multi-megabyte arrays every step; served by
    mmap, each one costs a round of page faults. Returns True when the
    setting was applied (glibc only; a no-op elsewhere).
    """
    global _allocator_tuned
    if _allocator_tuned:
        return True
    try:
        import ctypes

        libc = ctypes.CDLL("libc.so.6")
        ok = libc.mallopt(_M_MMAP_THRESHOLD, threshold) == 1 and libc.mallopt(_M_TRIM_THRESHOLD, threshold) == 1
    except (OSError, AttributeError):
        return False
    _allocator_tuned = bool(ok)
    return _allocator_tuned
