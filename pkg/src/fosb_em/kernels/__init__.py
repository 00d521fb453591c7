"""Hot assembly kernels with a numba and a numpy implementation."""
from __future__ import annotations

from .. import _accel
from . import _numpy


def assemble(*args, **kwargs):
    """Dispatch to the active backend (see :mod:`fosb_em._accel`)."""
    if _accel.backend() == "numba":
        from . import _numba

        return _numba.assemble(*args, **kwargs)
    return _numpy.assemble(*args, **kwargs)
