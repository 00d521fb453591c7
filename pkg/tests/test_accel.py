import os
import subprocess
import sys

import numpy as np
import pytest

from fosb_em import _accel
from fosb_em.operators import QuadratureOptions, assemble_boundary_operators
from fosb_em.spaces import build_space

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


@pytest.mark.parametrize("quad", [QuadratureOptions(), QuadratureOptions(singular_order=3, far_degree=4)])
def test_backends_agree(sphere2, quad):
    space = build_space(sphere2)
    out = {}
    for name in ("numpy", "numba"):
        with _accel.use_backend(name):
            out[name] = assemble_boundary_operators(space, [3.0, 3.0 * np.sqrt(2.1)], quad=quad)
    assert out["numpy"].keys() == out["numba"].keys()
    for key, blk in out["numpy"].items():
        a, b = blk.matrix, out["numba"][key].matrix
        assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(a), key


def test_use_backend_restores(ico):
    before = _accel.backend()
    with _accel.use_backend("numpy"):
        assert _accel.backend() == "numpy"
    assert _accel.backend() == before
    with pytest.raises(ValueError):
        _accel.set_backend("fortran")


@pytest.mark.parametrize("flag, expected", [("0", "numpy"), ("off", "numpy"), ("1", "numba")])
def test_environment_flag(flag, expected):
    env = dict(os.environ, FOSB_EM_NUMBA=flag)
    r = subprocess.run([sys.executable, "-c", "from fosb_em._accel import backend; print(backend())"],
                       env=env, capture_output=True, text=True, check=True)
    assert r.stdout.strip() == expected
