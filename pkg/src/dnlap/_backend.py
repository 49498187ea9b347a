"""Pick the compiled pair kernels when importable, else the numpy versions.

Set ``DNLAP_BACKEND=python`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("DNLAP_BACKEND", "").lower() != "python":
    try:
        from . import _kernels_cy
    except ImportError:  # extension not built
        pass
    else:
        kernels = _kernels_cy
        BACKEND = "cython"

_threads = 0


def set_threads(k: int) -> None:
    """Thread count for the compiled kernels; 0 picks one per available core."""
    global _threads
    _threads = int(k) if k and k > 0 else (os.cpu_count() or 1)


def threads() -> int:
    return _threads or (os.cpu_count() or 1)
