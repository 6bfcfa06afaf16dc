"""Grid <-> Fourier transforms, analytic norms and DFT error constants.

Arrays carry leading component axes and ``n`` trailing grid axes. Coefficient
arrays use FFT ordering along each axis: index j holds the mode
k = j for j < N/2 and k = j - N for j >= N/2, so index N/2 is k = -N/2 and the
stored set is exactly I_N = {-N/2 <= k < N/2}.

Every routine works on complex128 arrays (float kind) and on object arrays of
acb balls (interval kind) through the same code.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from flint import acb, arb, ctx

from .errors import IndexOutOfRange, InvalidStrip, NeumannFailure, ShapeMismatch
from .interval import apply, is_interval, to_acb_array


def _check_pow2(N: Sequence[int]) -> None:
    for m in N:
        if m < 1 or m & (m - 1):
            raise ShapeMismatch(f"grid size {m} is not a power of 2")


def freqs(m: int) -> np.ndarray:
    k = np.arange(m)
    return np.where(k < m // 2, k, k - m) if m > 1 else k


def wavenumbers(N: Sequence[int]) -> list[np.ndarray]:
    """Per-axis integer mode arrays, shaped to broadcast over the grid."""
    n = len(N)
    out = []
    for ax, m in enumerate(N):
        shape = [1] * n
        shape[ax] = m
        out.append(freqs(m).reshape(shape))
    return out


def abs_k1(N: Sequence[int]) -> np.ndarray:
    tot = np.zeros(tuple(N), dtype=np.int64)
    for k in wavenumbers(N):
        tot = tot + np.abs(k)
    return tot


def grid_points(N: Sequence[int]) -> list[np.ndarray]:
    """theta_j = j / N per axis, as float arrays shaped for broadcasting."""
    n = len(N)
    out = []
    for ax, m in enumerate(N):
        shape = [1] * n
        shape[ax] = m
        out.append((np.arange(m) / m).reshape(shape))
    return out


def grid_points_arb(N: Sequence[int]) -> list[np.ndarray]:
    n = len(N)
    out = []
    for ax, m in enumerate(N):
        shape = [1] * n
        shape[ax] = m
        # j / 2^q is exact in binary
        out.append(np.array([arb(j) / m for j in range(m)], dtype=object).reshape(shape))
    return out


# -- FFT ----------------------------------------------------------------------

@lru_cache(maxsize=128)
def _twiddles_arb(h: int, sign: int, prec: int) -> np.ndarray:
    # e^{sign * pi i j / h}, j < h; the exponent j/h is exact in binary
    return np.array([acb(arb(sign * j) / h).exp_pi_i() for j in range(h)], dtype=object)


@lru_cache(maxsize=128)
def _twiddles_float(h: int, sign: int) -> np.ndarray:
    w = np.exp(sign * 1j * np.pi * np.arange(h) / h)
    w.setflags(write=False)
    return w


def _bitrev(m: int) -> np.ndarray:
    bits = m.bit_length() - 1
    idx = np.arange(m)
    rev = np.zeros(m, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_last_axis(a: np.ndarray, sign: int) -> np.ndarray:
    """Radix-2 decimation in time along the last axis, no scaling."""
    m = a.shape[-1]
    if m == 1:
        return a.copy()
    obj = a.dtype == object
    x = a[..., _bitrev(m)]
    lead = x.shape[:-1]
    h = 1
    while h < m:
        w = _twiddles_arb(h, sign, ctx.prec) if obj else _twiddles_float(h, sign)
        y = x.reshape(lead + (m // (2 * h), 2, h))
        even = y[..., 0, :]
        odd = y[..., 1, :] * w
        z = np.empty_like(y)
        z[..., 0, :] = even + odd
        z[..., 1, :] = even - odd
        x = z.reshape(lead + (m,))
        h *= 2
    return x


def _transform(values: np.ndarray, n: int, sign: int) -> np.ndarray:
    if values.ndim < n:
        raise ShapeMismatch("array has fewer axes than the torus dimension")
    N = values.shape[values.ndim - n:]
    _check_pow2(N)
    if values.dtype == object:
        x = values if isinstance(values.reshape(-1)[0], acb) else to_acb_array(values)
    else:
        x = values.astype(np.complex128)
    for ax in range(values.ndim - n, values.ndim):
        x = np.moveaxis(_fft_last_axis(np.moveaxis(x, ax, -1), sign), -1, ax)
    return x


def fft_forward(values: np.ndarray, n: int) -> np.ndarray:
    """f~_k = (1/N_tot) sum_j f_j exp(-2 pi i k.theta_j) over the last n axes."""
    x = _transform(values, n, -1)
    ntot = int(np.prod(values.shape[values.ndim - n:]))
    if x.dtype == object:
        # division by a power of two is exact
        scale = arb(1) / ntot
        return x * scale
    return x / ntot


def fft_backward(coeffs: np.ndarray, n: int) -> np.ndarray:
    """f_j = sum_{k in I_N} f~_k exp(2 pi i k.theta_j)."""
    return _transform(coeffs, n, +1)


def naive_dft(values: np.ndarray, n: int) -> np.ndarray:
    """O(N^2) reference transform for testing, interval kind only."""
    N = values.shape[values.ndim - n:]
    lead = values.shape[:values.ndim - n]
    ntot = int(np.prod(N))
    out = np.empty(values.shape, dtype=object)
    ks = list(itertools.product(*[freqs(m) for m in N]))
    js = list(itertools.product(*[range(m) for m in N]))
    for c in np.ndindex(*lead) if lead else [()]:
        for kk, k in zip(itertools.product(*[range(m) for m in N]), ks):
            acc = acb(0)
            for j in js:
                phase = sum(arb(int(k[l]) * int(j[l])) / int(N[l]) for l in range(n))
                acc += acb(values[c + j]) * acb(-2 * phase).exp_pi_i()
            out[c + kk] = acc / ntot
    return out


# -- series operations --------------------------------------------------------

@dataclass
class FourierSeries:
    """Coefficients on I_N for a (possibly multi-component) map on T^n."""

    coeffs: np.ndarray
    n: int
    real: bool = True

    @property
    def grid(self) -> tuple[int, ...]:
        return self.coeffs.shape[self.coeffs.ndim - self.n:]

    @property
    def kind(self) -> str:
        return "interval" if is_interval(self.coeffs) else "float"

    def components(self) -> tuple[int, ...]:
        return self.coeffs.shape[: self.coeffs.ndim - self.n]

    def dump(self, digits: int = 40) -> str:
        lines = [
            f"{self.n}",
            " ".join(str(m) for m in self.grid),
            " ".join(str(m) for m in self.components()) or "1",
            self.kind,
            str(ctx.prec),
        ]
        flat = self.coeffs.reshape(self.components() + (-1,)) if self.components() else self.coeffs.reshape(1, -1)
        flat = flat.reshape(-1, flat.shape[-1])
        for row in flat:
            for z in row:
                if isinstance(z, acb):
                    lines.append(f"{z.real.mid().str(digits, radius=False)} {z.imag.mid().str(digits, radius=False)}")
                else:
                    z = complex(z)
                    lines.append(f"{z.real!r} {z.imag!r}")
        return "\n".join(lines) + "\n"


def series_derivative(coeffs: np.ndarray, axis: int, n: int) -> np.ndarray:
    """Coefficients of d/dtheta_axis: multiply by 2 pi i k_axis."""
    N = coeffs.shape[coeffs.ndim - n:]
    k = wavenumbers(N)[axis]
    if coeffs.dtype == object:
        two_pi = 2 * arb.pi()
        fac = apply(lambda v: acb(0, two_pi * int(v)), k)
        return coeffs * fac
    return coeffs * (2j * np.pi * k)


def shift_factors(omega, N: Sequence[int], interval: bool) -> np.ndarray:
    """exp(2 pi i k.omega) on I_N; width grows like |k| width(omega)."""
    n = len(N)
    tot = None
    for ax, (m, w) in enumerate(zip(N, omega)):
        shape = [1] * n
        shape[ax] = m
        k = freqs(m)
        if interval:
            w = w if isinstance(w, arb) else arb(w)
            f = np.array([acb(2 * int(kk) * w).exp_pi_i() for kk in k], dtype=object)
        else:
            f = np.exp(2j * np.pi * k * float(w))
        f = f.reshape(shape)
        tot = f if tot is None else tot * f
    return tot


def series_shift(coeffs: np.ndarray, omega, n: int) -> np.ndarray:
    """Coefficients of f(theta + omega)."""
    N = coeffs.shape[coeffs.ndim - n:]
    return coeffs * shift_factors(omega, N, coeffs.dtype == object)


def _weights(N: Sequence[int], rho, interval: bool) -> np.ndarray:
    ak = abs_k1(N)
    top = int(ak.max())
    if interval:
        rho = rho if isinstance(rho, arb) else arb(rho)
        base = (2 * arb.pi() * rho).exp()
        table = [arb(1)]
        for _ in range(top):
            table.append(table[-1] * base)
        # table holds exp(2 pi rho m) as balls; take the upper ends so each
        # weight is a true upper bound
        table = np.array([t.upper() for t in table], dtype=object)
        return table[ak]
    return np.exp(2 * np.pi * float(rho) * ak)


def fourier_norm(coeffs: np.ndarray, rho, n: int):
    """sum_k |f~_k| exp(2 pi |k|_1 rho) for each component.

    Returns a scalar for scalar series, else an array over the component
    axes. Interval results are point balls at the upper bound.
    """
    N = coeffs.shape[coeffs.ndim - n:]
    interval = coeffs.dtype == object
    w = _weights(N, rho, interval)
    grid_axes = tuple(range(coeffs.ndim - n, coeffs.ndim))
    if interval:
        mags = apply(lambda z: abs(z).upper(), coeffs)
        prod = mags * w
        lead = coeffs.shape[: coeffs.ndim - n]
        out = np.empty(lead, dtype=object)
        for c in np.ndindex(*lead) if lead else [()]:
            acc = arb(0)
            for v in prod[c].reshape(-1):
                acc = acc + v
            out[c] = acc.upper()
        return out[()] if not lead else out
    return np.sum(np.abs(coeffs) * w, axis=grid_axes)


def matrix_norm(entry_norms: np.ndarray):
    """Max-row-sum combination of entrywise norms of an (r, c) array."""
    if entry_norms.dtype == object:
        best = arb(0)
        for i in range(entry_norms.shape[0]):
            s = arb(0)
            for j in range(entry_norms.shape[1]):
                s = s + entry_norms[i, j]
            s = s.upper()
            best = s if s > best else best
        return best
    return float(np.max(np.sum(entry_norms, axis=1)))


def matrix_fourier_norm(coeffs: np.ndarray, rho, n: int):
    return matrix_norm(fourier_norm(coeffs, rho, n))


# -- DFT approximation error ----------------------------------------------------

def one_minus_prod(xs: Sequence[arb]) -> arb:
    """1 - prod(1 - x_l) by inclusion-exclusion (no cancellation)."""
    total = arb(0)
    for j in range(1, len(xs) + 1):
        sj = arb(0)
        for comb in itertools.combinations(xs, j):
            p = arb(1)
            for v in comb:
                p = p * v
            sj = sj + p
        total = total + sj if j % 2 == 1 else total - sj
    return total


def _mu(delta: arb, m: int) -> arb:
    if m % 2 == 0:
        return arb(1)
    t = (arb.pi() * delta).exp()
    return 2 * t / (t * t + 1)


def _coth_pi(delta: arb) -> arb:
    # (e^{2 pi d} + 1)/(e^{2 pi d} - 1)
    e = (2 * arb.pi() * delta).expm1()
    return (e + 2) / e


def nu(delta, m: int) -> arb:
    """sum_{k=-[m/2]}^{[(m-1)/2]} exp(-2 pi delta |k|) in closed form."""
    delta = delta if isinstance(delta, arb) else arb(delta)
    return _coth_pi(delta) * (1 - _mu(delta, m) * (-arb.pi() * delta * m).exp())


def nu_sum(delta, m: int) -> arb:
    delta = delta if isinstance(delta, arb) else arb(delta)
    x = (-2 * arb.pi() * delta).exp()
    return sum((x ** abs(k) for k in range(-(m // 2), (m - 1) // 2 + 1)), arb(0))


def alias_coeff_bound(k: Sequence[int], rho_hat, N: Sequence[int]) -> arb:
    """s*_N(k, rho_hat): bound of |f~_k - f_k| / ||f||_{rho_hat}.

    Evaluated as prod(e_l + a_l) - prod(e_l) expanded over nonempty subsets,
    with e_l = exp(-2 pi rho_hat |k_l|) and
    a_l = q_l (exp(2 pi rho_hat k_l) + exp(-2 pi rho_hat k_l)) / (1 - q_l),
    q_l = exp(-2 pi rho_hat N_l); algebraically the same as the product form.
    """
    rho_hat = rho_hat if isinstance(rho_hat, arb) else arb(rho_hat)
    if len(k) != len(N):
        raise ShapeMismatch("k and N differ in length")
    for kl, m in zip(k, N):
        if not (-m / 2 <= kl < m / 2):
            raise IndexOutOfRange(f"k={tuple(k)} outside I_N for N={tuple(N)}")
    if not rho_hat > 0:
        raise InvalidStrip("rho_hat must be positive")
    tp = 2 * arb.pi() * rho_hat
    es, as_ = [], []
    for kl, m in zip(k, N):
        q = (-tp * m).exp()
        c = (tp * abs(kl)).exp()
        es.append(1 / c)
        as_.append(q * (c + 1 / c) / (-(-tp * m).expm1()))
    total = arb(0)
    n = len(k)
    for mask in itertools.product((0, 1), repeat=n):
        if not any(mask):
            continue
        p = arb(1)
        for l in range(n):
            p = p * (as_[l] if mask[l] else es[l])
        total = total + p
    return total


def alias_coeff_bound_product(k: Sequence[int], rho_hat, N: Sequence[int]) -> arb:
    """s*_N(k, rho_hat) literally as prod(...) - exp(-2 pi rho_hat |k|_1)."""
    rho_hat = rho_hat if isinstance(rho_hat, arb) else arb(rho_hat)
    tp = 2 * arb.pi() * rho_hat
    p = arb(1)
    for kl, m in zip(k, N):
        u = tp * (abs(kl) - arb(m) / 2)
        p = p * (-arb.pi() * rho_hat * m).exp() * (u.exp() + (-u).exp()) / (1 - (-tp * m).exp())
    return p - (-tp * sum(abs(v) for v in k)).exp()


@dataclass
class ErrorConstants:
    rho: arb
    rho_hat: arb
    N: tuple[int, ...]
    S1: arb
    S2: arb
    T: arb
    C: arb
    s_star: Callable[[Sequence[int]], arb] = field(repr=False)


def approx_error_constant(rho, rho_hat, N: Sequence[int]) -> ErrorConstants:
    """C_N(rho, rho_hat) with ||f~ - f||_rho <= C_N ||f||_rho_hat."""
    rho = rho if isinstance(rho, arb) else arb(rho)
    rho_hat = rho_hat if isinstance(rho_hat, arb) else arb(rho_hat)
    N = tuple(int(m) for m in N)
    if not (rho >= 0):
        raise InvalidStrip("rho must be nonnegative")
    if not (rho < rho_hat):
        raise InvalidStrip(f"need rho < rho_hat, got {rho} >= {rho_hat}")
    n = len(N)
    pi = arb.pi()
    qs = [(-2 * pi * rho_hat * m).exp() for m in N]
    # 1/(1 - q) with 1 - q from expm1
    inv1q = [1 / (-(-2 * pi * rho_hat * m).expm1()) for m in N]
    pref = arb(1)
    for v in inv1q:
        pref = pref * v

    s1 = arb(0)
    for sigma in itertools.product((1, -1), repeat=n):
        if all(s == 1 for s in sigma):
            continue
        p = arb(1)
        for s, m in zip(sigma, N):
            p = p * ((s - 1) * pi * rho_hat * m).exp() * nu(s * rho_hat - rho, m)
        s1 = s1 + p
    s1 = pref * s1

    d = rho_hat - rho
    nus = arb(1)
    for m in N:
        nus = nus * nu(d, m)
    s2 = pref * one_minus_prod(qs) * nus

    xs = [_mu(d, m) * (-pi * d * m).exp() for m in N]
    t = _coth_pi(d) ** n * one_minus_prod(xs)

    def s_star(k: Sequence[int]) -> arb:
        return alias_coeff_bound(k, rho_hat, N)

    c = s1 + s2 + t
    return ErrorConstants(rho, rho_hat, N, s1, s2, t, c, s_star)


def error_constant(rho, rho_hat, N: Sequence[int]) -> arb:
    return approx_error_constant(rho, rho_hat, N).C


def product_error_bound(A, B, rho, rho_hat, n: int | None = None, C: arb | None = None) -> arb:
    """C_N(rho, rho_hat) ||A||_{F,rho_hat} ||B||_{F,rho_hat}.

    ``A`` and ``B`` may be coefficient arrays (matrix or scalar valued; the
    max-row-sum combination is used for 2-d component shapes) or precomputed
    norm bounds.
    """
    na = _norm_of(A, rho_hat, n)
    nb = _norm_of(B, rho_hat, n)
    if C is None:
        N = _grid_of(A, n) or _grid_of(B, n)
        C = error_constant(rho, rho_hat, N)
    return (C * na * nb).upper()


def _grid_of(a, n):
    if isinstance(a, np.ndarray) and n is not None:
        return a.shape[a.ndim - n:]
    return None


def _norm_of(a, rho_hat, n) -> arb:
    if isinstance(a, np.ndarray):
        if n is None:
            raise ValueError("n is required when passing coefficient arrays")
        lead = a.ndim - n
        nr = fourier_norm(a if a.dtype == object else to_acb_array(a), rho_hat, n)
        if lead == 2:
            return matrix_norm(nr)
        if lead == 1:
            return max_of(nr)
        return nr
    return a if isinstance(a, arb) else arb(a)


def max_of(values) -> arb:
    best = arb(0)
    for v in np.asarray(values, dtype=object).reshape(-1):
        u = v.upper()
        best = u if u > best else best
    return best


def inverse_certificate(A, X, rho, rho_hat, n: int | None = None, C: arb | None = None):
    """Bounds for the interpolated inverse X~ of a matrix function A.

    Returns (E, corr) with ||I - A X~||_rho <= E and
    ||A^{-1} - X~||_rho <= ||X~||_{F,rho_hat} E / (1 - E).
    """
    na = _norm_of(A, rho_hat, n)
    nx = _norm_of(X, rho_hat, n)
    if C is None:
        C = error_constant(rho, rho_hat, _grid_of(X, n) or _grid_of(A, n))
    e = (C * na * nx).upper()
    if not e < 1:
        raise NeumannFailure(f"||I - A X|| bound {e} is not < 1")
    corr = (nx * e / (1 - e)).upper()
    return e, corr
