import math

import numpy as np
import pytest
from flint import arb

from kamcap.errors import NoConvergence
from kamcap.interval import to_acb_array, working_precision
from kamcap.models import make_model
from kamcap.solver import (
    Parameterization, band_limit, band_mask, frame_and_torsion, hermitian, integrable_seed, invariance_error,
    newton_step, orbit_seed, read_torus, resample, rotation_number, sampling_to_parameterization, seed_on_line,
    solve_torus, solver_precision, tail_mass, write_torus,
)

GOLDEN = (math.sqrt(5) - 1) / 2


def _golden_arb():
    return (arb(5).sqrt() - 1) / 2


def _flat_K(action, N=16, omega=GOLDEN):
    c = np.zeros((2, N), dtype=np.complex128)
    c[1, 0] = action
    return Parameterization(1, c, [omega])


def test_integrable_torus_is_invariant():
    m = make_model("standard", eps="0")
    E, e = invariance_error(_flat_K(GOLDEN), m)
    assert e < 1e-15
    K = integrable_seed(m, [GOLDEN], (16,))
    assert K.coeffs[1, 0] == pytest.approx(GOLDEN)


def test_zero_action_error_is_constant():
    m = make_model("standard", eps="0")
    E, e = invariance_error(_flat_K(0.0), m)
    c = E.coeffs
    assert c[0, 0] == pytest.approx(-GOLDEN) and abs(c[1, 0]) < 1e-15
    assert np.max(np.abs(c[:, 1:])) < 1e-15


def test_zero_error_gives_zero_step():
    m = make_model("standard", eps="0")
    K = _flat_K(GOLDEN)
    K2, e = newton_step(K, m)
    assert e < 1e-15 and np.max(np.abs(K2.coeffs - K.coeffs)) < 1e-15


def test_one_step_from_zero_action():
    m = make_model("standard", eps="0")
    with working_precision(200):
        w = _golden_arb().mid()
        K = Parameterization(1, to_acb_array(_flat_K(0.0).coeffs), [w])
        K2, _ = newton_step(K, m)
        _, e = invariance_error(K2, m)
        assert e < 1e-55
        assert K2.coeffs[1, 0].real.overlaps(w) or abs(K2.coeffs[1, 0].real - w) < arb(10) ** -55


def test_frame_of_flat_torus():
    m = make_model("standard", eps="0")
    f = frame_and_torsion(_flat_K(GOLDEN), m)
    assert np.allclose(f.B, 1) and np.allclose(f.A, 0) and np.allclose(f.T_avg, 1)
    assert np.allclose(f.N[:, 0], [[0], [1]])


def test_froeschle_flat_torsion_is_identity():
    m = make_model("froeschle", eps="0", lambda1="0", lambda2="0")
    w = [0.6823278038280193, 0.4655712318767680]
    c = np.zeros((4, 8, 8), dtype=np.complex128)
    c[2, 0, 0], c[3, 0, 0] = w
    f = frame_and_torsion(Parameterization(2, c, w), m)
    assert np.allclose(f.T_avg, np.eye(2))


def test_newton_is_quadratic():
    m = make_model("standard", eps="0.1")
    with working_precision(400):
        w = _golden_arb()
        K = integrable_seed(m, [w], (512,))
        K = Parameterization(1, band_limit(to_acb_array(K.coeffs), 1), [w.mid()])
        errs = []
        for _ in range(7):
            K, e = newton_step(K, m)
            errs.append(e)
    pairs = [(a, b) for a, b in zip(errs, errs[1:]) if b > 1e-100]
    assert len(pairs) >= 5
    for a, b in pairs:
        assert 1.7 <= math.log(b) / math.log(a) <= 2.1


def test_band_mask_edges():
    mask = band_mask((16,))
    k = np.fft.fftfreq(16, 1 / 16).astype(int)
    assert list(mask) == [abs(v) >= 4 for v in k]
    c = np.ones((2, 16), dtype=np.complex128)
    assert np.all(band_limit(c, 1)[:, mask] == 0)


def test_hermitian_projection():
    rng = np.random.default_rng(0)
    c = rng.normal(size=(2, 8)) + 1j * rng.normal(size=(2, 8))
    h = hermitian(c, 1)
    assert np.allclose(np.fft.ifft(h, axis=1).imag, 0)


def test_resample_round_trip():
    rng = np.random.default_rng(1)
    c = band_limit(hermitian(rng.normal(size=(2, 16)) + 0j, 1), 1)
    K = Parameterization(1, c, [GOLDEN])
    assert np.allclose(resample(resample(K, (64,)), (16,)).coeffs, c)


def test_solve_golden_torus():
    m = make_model("standard", eps="0.06")
    K = solve_torus(m, [_golden_arb()], (128,), tol=1e-33)
    assert K.hp and K.history[-1] <= 1e-33
    assert tail_mass(K) <= 1e-33
    assert solver_precision(1e-33) == 180 and solver_precision(1e-60) == 240


def test_solver_reports_floor():
    m = make_model("standard", eps="0.6")
    with pytest.raises(NoConvergence) as ei:
        solve_torus(m, [GOLDEN], (32,), tol=1e-40)
    assert ei.value.step in ("solve", "continuation")


def test_torus_file_round_trip(tmp_path):
    m = make_model("standard", eps="0.06")
    K = solve_torus(m, [_golden_arb()], (64,), tol=1e-25, max_grid=(128,))
    p = tmp_path / "t.txt"
    write_torus(p, K)
    with working_precision(200):
        s = read_torus(p)
        assert s.n == 1 and s.N == K.N
        K2 = sampling_to_parameterization(s, K.omega)
        _, e = invariance_error(K2, m)
    assert e < 1e-24


def test_rotation_number_and_orbit_seed():
    m = make_model("standard", eps="0")
    assert rotation_number(m, [0.1, 0.3])[0] == pytest.approx(0.3, abs=1e-12)
    m = make_model("standard", eps="0.06")
    K = solve_torus(m, [GOLDEN], (64,), tol=1e-20, max_grid=(128,))
    x0 = K.to_float().grid_values()[:, 0]
    rot = rotation_number(m, [x0[0], x0[1]], 20000)[0]
    assert rot == pytest.approx(GOLDEN, abs=1e-10)
    S = orbit_seed(m, [x0[0], x0[1]], K.N, J=20000, omega=[GOLDEN])
    _, e = invariance_error(S, m)
    assert e < 1e-8


def test_seed_on_line_finds_frequency():
    m = make_model("standard", eps="0.06")
    S = seed_on_line(m, GOLDEN, [0.0, 0.0], (0.6, 0.62), (64,), J=20000, J_fit=20000)
    assert S.omega == [GOLDEN]
    _, e = invariance_error(S, m)
    assert e < 1e-8
