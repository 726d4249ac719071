"""The compiled core and the pure-Python fallback must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kdvfeedback import _backend, _core_py

compiled = _backend.compiled_core()
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled core not built")

H = 3.0 / 64


def state(n=65):
    return arrays(np.float64, n, elements=st.floats(-10, 10, allow_nan=False)).map(
        lambda u: np.concatenate([[0.0], u[1:-1], [0.0]])
    )


def close(a, b, rel=1e-13):
    scale = max(1.0, float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) <= rel * scale


@needs_compiled
@settings(max_examples=40, deadline=None)
@given(state())
def test_apply_D_and_convection(u):
    assert close(compiled.apply_D(u, H), _core_py.apply_D(u, H))
    assert close(compiled.convection(u, H), _core_py.convection(u, H))


@needs_compiled
@settings(max_examples=40, deadline=None)
@given(state(), st.floats(1e-5, 1e-1), st.booleans())
def test_explicit_rhs(u, cdt, nonlinear):
    assert close(compiled.explicit_rhs(u, H, cdt, nonlinear), _core_py.explicit_rhs(u, H, cdt, nonlinear))


@needs_compiled
@settings(max_examples=30, deadline=None)
@given(state(), st.floats(1e-5, 1e-1))
def test_band_solve(b, tdt):
    ab = _core_py.step_matrix_band(64, H, tdt)
    lu, piv, info = _core_py.band_factor(ab)
    assert info == 0
    assert close(compiled.band_solve(lu, piv, b), _core_py.band_solve(lu, piv, b))


@needs_compiled
@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 9), st.integers(0, 2**31 - 1))
def test_series_pairs(n_pairs, n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n_pairs, n)) + 1j * rng.standard_normal((n_pairs, n))
    B = rng.standard_normal((n_pairs, n)) + 1j * rng.standard_normal((n_pairs, n))
    A = np.concatenate([np.conj(A[::-1]), A])
    B = np.concatenate([np.conj(B[::-1]), B])
    assert close(compiled.series_pairs(A, B), _core_py.series_pairs(A, B), rel=1e-13 * n_pairs)


@needs_compiled
@pytest.mark.parametrize("nonlinear", [False, True])
def test_picard_step(nonlinear):
    nx = 64
    x = np.linspace(0, 3.0, nx + 1)
    u = 0.3 * np.sin(np.pi * x / 3.0)
    gw = 0.01 * np.sin(np.pi * x / 3.0)
    tdt = 5e-4
    lu, piv, _ = _core_py.band_factor(_core_py.step_matrix_band(nx, H, tdt))
    out = []
    for core in (compiled, _core_py):
        rhs = core.explicit_rhs(u, H, tdt, nonlinear)
        gaps = np.zeros(30)
        new, it, status = core.picard_step(lu, piv, rhs, u, gw, 0.0, tdt, H, 1e-12, 30, nonlinear, gaps)
        out.append((new, it, status, gaps))
    (a, ia, sa, ga), (b, ib, sb, gb) = out
    assert sa == sb == 0 and ia == ib
    assert close(a, b)
    assert close(ga, gb, rel=1e-10)


def test_selected_backend_name():
    assert _backend.name() in ("cython", "python")
    if compiled is not None:
        assert _backend.name() == "cython"


def test_pure_python_override():
    env = dict(os.environ, KDVFEEDBACK_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import kdvfeedback; print(kdvfeedback.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
