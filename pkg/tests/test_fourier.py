import itertools

import numpy as np
import pytest
from flint import acb, arb

from kamcap import fourier as fr
from kamcap.errors import InvalidStrip, NeumannFailure, ShapeMismatch
from kamcap.interval import to_arb_array, working_precision


def _arr(vals):
    return to_arb_array(np.asarray(vals, dtype=float))


def test_constant_sampling():
    c = fr.fft_forward(_arr(np.full(8, 2.5)), 1)
    assert c[0].contains(2.5)
    assert all(z.contains(0) for z in c[1:])


def test_cosine_on_eight_points():
    with working_precision(128):
        th = fr.grid_points_arb((8,))[0]
        vals = np.array([(2 * arb.pi() * t).cos() for t in th], dtype=object)
        c = fr.fft_forward(vals, 1)
        assert c[1].contains(arb(1) / 2) and c[7].contains(arb(1) / 2)
        for i in (0, 2, 3, 4, 5, 6):
            assert c[i].contains(0) and abs(c[i]).upper() < arb(2) ** -120


@pytest.mark.parametrize("N", [(2,), (8,), (16,), (32,), (4, 8)])
def test_fft_contains_naive_dft(N):
    rng = np.random.default_rng(sum(N))
    with working_precision(96):
        vals = _arr(rng.normal(size=(2,) + N))
        fast = fr.fft_forward(vals, len(N))
        slow = fr.naive_dft(vals, len(N))
        for a, b in zip(fast.reshape(-1), slow.reshape(-1)):
            assert a.overlaps(b)
            assert abs(a - b).upper() < arb(2) ** -80


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ShapeMismatch):
        fr.fft_forward(_arr(np.ones(12)), 1)


def test_backward_examples():
    c = np.full(8, acb(0), dtype=object)
    c[1] = acb(1)
    v = fr.fft_backward(c, 1)
    for j in range(8):
        assert v[j].overlaps(acb(arb(2 * j) / 8).exp_pi_i())
    z = fr.fft_backward(np.full(8, acb(0), dtype=object), 1)
    assert all(x == 0 for x in z)


def test_round_trip_contains_input():
    rng = np.random.default_rng(3)
    with working_precision(128):
        x = rng.normal(size=(3, 16, 8))
        back = fr.fft_backward(fr.fft_forward(_arr(x), 2), 2)
        for b, a in zip(back.reshape(-1), x.reshape(-1)):
            assert b.real.contains(float(a)) and b.imag.contains(0)


def test_real_symmetry():
    rng = np.random.default_rng(4)
    c = fr.fft_forward(_arr(rng.normal(size=16)), 1)
    for k in range(1, 8):
        assert c[k].overlaps(c[16 - k].conjugate())


def test_norm_examples():
    c = np.full(8, acb(0), dtype=object)
    c[0] = acb(1)
    assert fr.fourier_norm(c, arb("0.3"), 1).contains(1)
    c[0] = acb(0)
    c[1] = c[7] = acb(arb(1) / 2)
    assert fr.fourier_norm(c, 0, 1).contains(1)


def test_norm_of_geometric_coefficients():
    with working_precision(128):
        rho, rho_hat, N = arb("0.05"), arb("0.2"), 32
        q = (-2 * arb.pi() * rho_hat).exp()
        c = np.array([acb(q ** abs(int(k))) for k in fr.freqs(N)], dtype=object)
        got = fr.fourier_norm(c, rho, 1)
        p = (-2 * arb.pi() * (rho_hat - rho)).exp()
        # sum over -16 <= k < 16 of p^|k|
        closed = 1 + 2 * p * (1 - p ** 15) / (1 - p) + p ** 16
        assert got.overlaps(closed) or abs(got - closed).upper() < arb(10) ** -30


def test_norm_dominates_grid_values():
    rng = np.random.default_rng(5)
    x = rng.normal(size=16)
    c = fr.fft_forward(_arr(x), 1)
    assert float(fr.fourier_norm(c, 0, 1).upper()) >= np.max(np.abs(x))


def test_sstar_decays_in_rho_hat():
    for k in [(0,), (3,), (-5,)]:
        a = fr.alias_coeff_bound(k, arb("0.05"), (32,))
        b = fr.alias_coeff_bound(k, arb("0.1"), (32,))
        assert b < a


def test_sstar_closed_form_n1():
    """n = 1, k = 0: s* = 2 q / (1 - q) with q = exp(-2 pi rho_hat N)."""
    with working_precision(128):
        r = arb("0.1")
        for N in (21, 32):
            q = (-2 * arb.pi() * r * N).exp()
            assert fr.alias_coeff_bound((0,), r, (N,)).overlaps(2 * q / (1 - q))


def test_sstar_matches_product_form():
    for k, N in [((0, 0), (16, 16)), ((3, -2), (16, 8)), ((1,), (8,))]:
        a = fr.alias_coeff_bound(k, arb("0.07"), N)
        b = fr.alias_coeff_bound_product(k, arb("0.07"), N)
        assert a.overlaps(b)


def _alias_error(k, N, q, terms=400):
    """f~_k - f_k = sum_{m != 0} q^|k + m N| for the coefficients q^|k|."""
    return sum((q ** abs(k + m * N) for m in range(-terms, terms + 1) if m), arb(0))


COMBOS = list(itertools.product([8, 16, 32, 64], ["0.02", "0.05", "0.1", "0.2", "0.4"]))


@pytest.mark.parametrize("N,rh", COMBOS)
def test_aliasing_bounded_by_sstar(N, rh):
    """f_k = exp(-2 pi r |k|) with r > rho_hat so that ||f||_rho_hat is finite."""
    with working_precision(128):
        rho_hat = arb(rh)
        r = rho_hat * 2
        q = (-2 * arb.pi() * r).exp()
        norm = ((arb.pi() * (r - rho_hat)).coth())
        for k in fr.freqs(N):
            k = int(k)
            err = _alias_error(k, N, q)
            assert err <= fr.alias_coeff_bound((k,), rho_hat, (N,)) * norm


@pytest.mark.parametrize("N,rh", COMBOS[::4])
def test_error_constant_bounds_exact_error(N, rh):
    """||f~ - f||_0 <= C_N(0, rho_hat) ||f||_rho_hat on geometric coefficients."""
    with working_precision(128):
        rho_hat = arb(rh)
        r = rho_hat * 2
        q = (-2 * arb.pi() * r).exp()
        norm = (arb.pi() * (r - rho_hat)).coth()
        inside = sum((_alias_error(int(k), N, q) for k in fr.freqs(N)), arb(0))
        # modes outside I_N: k >= N/2 and k < -N/2
        outside = 2 * q ** (N // 2) / (1 - q) - q ** (N // 2)
        assert inside + outside <= fr.error_constant(0, rho_hat, (N,)) * norm


def test_error_constant_odd_closed_form():
    with working_precision(128):
        r, M = arb("0.1"), 10
        N = 2 * M + 1
        C = fr.error_constant(0, r, (N,))
        e = (2 * arb.pi() * r).exp()
        general = 4 * (-2 * arb.pi() * r * M).exp() / (e - 1)
        displayed = general / (1 - (-2 * arb.pi() * r * N).exp())
        assert C.overlaps(general)
        assert C <= displayed


def test_error_constant_order():
    rho, rho_hat = arb("0.01"), arb("0.05")
    for N in [(16,), (32,), (16, 16)]:
        N2 = tuple(2 * m for m in N)
        c1, c2 = fr.error_constant(rho, rho_hat, N), fr.error_constant(rho, rho_hat, N2)
        assert c2 < c1
        assert c2 <= c1 * (-arb.pi() * (rho_hat - rho) * min(N)).exp() * 10


def test_error_constant_components():
    ec = fr.approx_error_constant(arb("0.01"), arb("0.05"), (32, 16))
    assert ec.S1 >= 0 and ec.S2 >= 0 and ec.T >= 0
    assert ec.C.overlaps(ec.S1 + ec.S2 + ec.T)
    with pytest.raises(InvalidStrip):
        fr.approx_error_constant(arb("0.05"), arb("0.05"), (32,))


def test_nu_closed_form():
    for m in (7, 8, 33):
        assert fr.nu(arb("0.03"), m).overlaps(fr.nu_sum(arb("0.03"), m))


def test_derivative_and_shift():
    with working_precision(128):
        c = np.full(8, acb(0), dtype=object)
        c[1] = c[7] = acb(arb(1) / 2)  # cos 2 pi theta
        d = fr.series_derivative(c, 0, 1)
        assert d[1].overlaps(acb(0, arb.pi())) and d[7].overlaps(acb(0, -arb.pi()))
        w = arb(1) / 4
        s = fr.series_shift(c, [w], 1)
        # cos(2 pi (theta + 1/4)) = -sin 2 pi theta
        assert s[1].overlaps(acb(0, arb(1) / 2)) and s[7].overlaps(acb(0, -arb(1) / 2))


def test_product_error_bound():
    rng = np.random.default_rng(6)
    with working_precision(128):
        N = 32
        rho, rho_hat = arb("0.01"), arb("0.05")
        band = np.zeros(N)
        band[:4] = rng.normal(size=4) * 0.1
        band[-3:] = rng.normal(size=3) * 0.1
        a = np.fft.ifft(band).real * N
        b = np.cos(2 * np.pi * np.arange(N) / N) + 2
        A, B = fr.fft_forward(_arr(a), 1), fr.fft_forward(_arr(b), 1)
        AB = fr.fft_forward(_arr(a * b), 1)
        bound = fr.product_error_bound(A, B, rho, rho_hat, 1)
        C = fr.error_constant(rho, rho_hat, (N,))
        assert bound.overlaps((C * fr.fourier_norm(A, rho_hat, 1) * fr.fourier_norm(B, rho_hat, 1)).upper())
        # the exact product is a trig polynomial of degree < N/2: no aliasing at all
        assert fr.fourier_norm(AB, rho, 1) <= fr.fourier_norm(A, rho, 1) * fr.fourier_norm(B, rho, 1) + bound


def test_inverse_certificate():
    with working_precision(128):
        N = 128
        th = np.arange(N) / N
        a = 2 + 0.5 * np.cos(2 * np.pi * th)
        A = fr.fft_forward(_arr(a), 1)
        X = fr.fft_forward(_arr(1 / a), 1)
        e, corr = fr.inverse_certificate(A, X, arb("0.01"), arb("0.1"), 1)
        assert e < arb(10) ** -10
        assert e < 1 and corr >= 0
        big = fr.fft_forward(_arr(100 * a), 1)
        with pytest.raises(NeumannFailure):
            fr.inverse_certificate(big, big, arb("0.01"), arb("0.1"), 1, C=arb(1))
