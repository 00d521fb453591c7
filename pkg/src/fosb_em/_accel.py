"""Backend selection for the hot assembly kernels.

The numba kernels are used by default. Setting ``FOSB_EM_NUMBA=0`` in the
environment (or calling :func:`use_backend`) selects the vectorised numpy
implementation instead, which needs no compilation.
"""
from __future__ import annotations

import contextlib
import os

try:  # pragma: no cover - exercised implicitly
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_OFF = {"0", "false", "no", "off"}

_backend = (
    "numba"
    if HAVE_NUMBA and os.environ.get("FOSB_EM_NUMBA", "1").strip().lower() not in _OFF
    else "numpy"
)


def backend() -> str:
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily switch the kernel backend."""
    old = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(old)


if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
