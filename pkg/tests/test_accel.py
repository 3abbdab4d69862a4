import numpy as np
import pytest

from pqsingular import _accel

pytestmark = pytest.mark.skipif(not _accel.NUMBA_AVAILABLE, reason="numba backend disabled")


def _data(n=101, seed=0):
    rng = np.random.default_rng(seed)
    u = np.abs(rng.standard_normal(n)) + 0.1
    u[[0, -1]] = 0.0
    w = np.full(n, 1.0 / (n - 1))
    w[[0, -1]] *= 0.5
    return u, 1.0 / (n - 1), w, rng.standard_normal(n)


def test_flux_energy_and_grad_power_agree():
    u, h, _, _ = _data()
    assert np.allclose(_accel.edge_flux_1d_nb(u, h, 2.5, 1e-6), _accel.edge_flux_1d_np(u, h, 2.5, 1e-6),
                       rtol=1e-13)
    assert _accel.pq_energy_1d_nb(u, h, 2.5, 1.5, 1e-6) == pytest.approx(
        _accel.pq_energy_1d_np(u, h, 2.5, 1.5, 1e-6), rel=1e-13)
    assert _accel.grad_power_1d_nb(u, h, 3.0) == pytest.approx(_accel.grad_power_1d_np(u, h, 3.0), rel=1e-13)


@pytest.mark.parametrize("delta", [0.5, 1.0, 1.5])
def test_objective_and_newton_system_agree(delta):
    u, h, w, b = _data(seed=1)
    args = (u, h, w, 1.0, 0.3, 2.5, 1.5, 1e-6, 0.7, delta, 1e-3, b)
    assert _accel.objective_1d_nb(*args) == pytest.approx(_accel.objective_1d_np(*args), rel=1e-12)
    for a, c in zip(_accel.newton_system_1d_nb(*args), _accel.newton_system_1d_np(*args)):
        assert np.allclose(a, c, rtol=1e-12, atol=1e-14)


def test_thomas_agrees_with_banded_solver():
    rng = np.random.default_rng(2)
    n = 50
    diag = 4.0 + rng.random(n)
    off = -rng.random(n - 1)
    rhs = rng.standard_normal(n)
    x1 = _accel.thomas_nb(off, diag, rhs)
    x2 = _accel.thomas_np(off, diag, rhs)
    A = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    assert np.allclose(A @ x1, rhs) and np.allclose(x1, x2)


def test_backend_flag_is_reported():
    assert _accel.BACKEND in ("numba", "numpy")


def test_numpy_fallback_reproduces_numba_solve():
    import subprocess
    import sys
    import os
    code = ("import numpy as np;from pqsingular.mesh import build_interval_mesh;"
            "from pqsingular.params import ProblemParams;from pqsingular import elliptic, _accel;"
            "m=build_interval_mesh(0,1,128);u=elliptic.solve_PS(m,ProblemParams(2.5,1.5,1.5)).u;"
            "print(_accel.BACKEND, repr(float(u.max())))")
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, PQSINGULAR_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, val = res.stdout.split()
        out[backend] = float(val)
    assert set(out) == {"numba", "numpy"}
    assert out["numba"] == pytest.approx(out["numpy"], rel=1e-10)
