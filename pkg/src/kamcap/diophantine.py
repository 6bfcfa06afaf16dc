"""Small divisors: Diophantine constants and Russmann estimates.

Frequencies are interval vectors (lists of arb). The Diophantine search over
all 0 < |k|_1 <= M uses a double precision sweep only to pick the handful of
k that can realize the minimum; the minimum itself is then taken in interval
arithmetic over those k, and every other k is excluded with an explicit
error margin on the double computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from flint import acb, arb, ctx

from .errors import GammaTooLarge, NearResonance, ResonantInterval, TailConditionViolated
from .fourier import wavenumbers

# relative slack on every double evaluated |k.w - m| |k|^tau; the true error
# is a few ulps times |k|_1, far below this
_FLOAT_SLACK = 1e-9
_FIX_BITS = 128


def as_arb(x) -> arb:
    if isinstance(x, arb):
        return x
    if isinstance(x, Fraction):
        return arb(x.numerator) / x.denominator
    if isinstance(x, str):
        return arb(x)
    return arb(x)


def omega_quadratic(a: int, b: int) -> arb:
    """(sqrt(b^2 + 4b/a) - b)/2."""
    a, b = arb(a), arb(b)
    return ((b * b + 4 * b / a).sqrt() - b) / 2


def omega_sqrt_frac(p: int) -> arb:
    """sqrt(p) - [sqrt(p)]."""
    s = arb(p).sqrt()
    return s - math.isqrt(p)


def cubic_golden() -> arb:
    """Real root of x^3 + x - 1, enclosed by interval bisection."""
    lo, hi = arb(0), arb(1)
    f = lambda x: x * x * x + x - 1
    for _ in range(400):
        m = (lo + hi).mid() / 2
        v = f(m)
        if v < 0:
            lo = m
        elif v > 0:
            hi = m
        else:
            return m
        if (hi - lo) < arb(2) ** (-arb(1) * 0 - 2 * 300):
            break
    return lo.union(hi)


def tight_interval(x: arb, radius_log2: int = -50) -> arb:
    """[mid(x) - 2^e, mid(x) + 2^e]; contains x whenever rad(x) < 2^e."""
    r = arb(2) ** radius_log2
    m = x.mid()
    if not x.rad() < r:
        raise ValueError("enclosure is wider than the requested radius")
    return (m - r).union(m + r)


def interval_with_radius(x: arb, r) -> arb:
    r = as_arb(r)
    return (x - r).union(x + r)


def box_constant(omega: list[arb]) -> arb:
    """C(iw, n) = 2^{2n}/(n-1)! diam(iw)^n / meas(iw), Euclidean diameter."""
    n = len(omega)
    # a ball is exactly [mid - rad, mid + rad]; upper() - lower() would round
    widths = [2 * arb(w.rad()) for w in omega]
    diam2 = arb(0)
    meas = arb(1)
    for w in widths:
        diam2 += w * w
        meas *= w
    diam = diam2.sqrt()
    return arb(4) ** n / math.factorial(n - 1) * diam ** n / meas


# -- Diophantine constants -------------------------------------------------------

def _half_lattice(n: int, M: int) -> np.ndarray:
    """All k with 0 < |k|_1 <= M, one of each pair {k, -k}."""
    if n == 1:
        return np.arange(1, M + 1).reshape(-1, 1)
    if n == 2:
        ks = []
        for k1 in range(0, M + 1):
            r = M - k1
            k2 = np.arange(-r, r + 1)
            if k1 == 0:
                k2 = k2[k2 > 0]
            ks.append(np.stack([np.full(k2.shape, k1), k2], axis=1))
        return np.concatenate(ks)
    out = []
    import itertools
    for k in itertools.product(range(-M, M + 1), repeat=n):
        s = sum(abs(v) for v in k)
        if 0 < s <= M:
            first = next(v for v in k if v != 0)
            if first > 0:
                out.append(k)
    return np.array(out)


@dataclass
class _Sweep:
    ks: np.ndarray
    k1: np.ndarray
    dist: np.ndarray  # double estimate of min_m |k.w - m|


_SWEEPS: dict = {}


def _sweep(omega: list[arb], M: int) -> _Sweep:
    key = (tuple((w.mid().str(40), w.rad().str(5)) for w in omega), M)
    if key in _SWEEPS:
        return _SWEEPS[key]
    ks = _half_lattice(len(omega), M)
    # k.w mod 1 in exact 128-bit fixed point, so the double distance below
    # is accurate to a relative 1e-15 plus |k|_1 2^-128 / dist
    scale = 1 << _FIX_BITS
    W = [int((w.mid() * scale).floor().unique_fmpz()) for w in omega]
    P = np.zeros(len(ks), dtype=object)
    for col, Wi in enumerate(W):
        P = P + ks[:, col].astype(object) * Wi
    P = np.mod(P, scale)
    half = scale // 2
    dist = np.array([float(p if p <= half else scale - p) for p in P]) / float(scale)
    sw = _Sweep(ks, np.sum(np.abs(ks), axis=1), dist)
    _SWEEPS[key] = sw
    return sw


def _dist_lower(x: arb, k) -> arb:
    """Lower bound of min_m |x - m| over members x; raises if x hits Z."""
    if x.contains_integer():
        raise ResonantInterval(k)
    f = x.lower().floor()
    a = (x - f).lower()
    b = (f + 1 - x).lower()
    return a if a < b else b


def _dot(k, omega) -> arb:
    s = arb(0)
    for kk, w in zip(k, omega):
        s += int(kk) * w
    return s


def _rigorous_term(k, omega, tau: arb) -> arb:
    d = _dist_lower(_dot(k, omega), k)
    k1 = sum(abs(int(v)) for v in k)
    return (d * arb(k1) ** tau).lower()


def gamma_lower(omega: list[arb], tau, M: int) -> arb:
    """Lower bound of min |k.w - m| |k|_1^tau over w in iw, 0 < |k|_1 <= M."""
    tau = as_arb(tau)
    sw = _sweep(omega, M)
    width = max(float(w.rad()) for w in omega) * 2
    k1 = sw.k1.astype(np.float64)
    est = sw.dist * k1 ** float(tau.mid())
    # relative error of est: double rounding, the fixed point truncation,
    # and the frequency interval moving k.w by up to |k|_1 width
    rel = _FLOAT_SLACK + k1 * (width + 2.0 ** -_FIX_BITS) / np.maximum(sw.dist, 1e-300)
    lower_est = est * (1 - rel)
    best = _rigorous_term(sw.ks[int(np.argmin(est))], omega, tau)
    cand = np.nonzero(lower_est <= float(best.upper()) * (1 + 1e-12))[0]
    for idx in cand:
        val = _rigorous_term(sw.ks[idx], omega, tau)
        if val < best:
            best = val
    return best


def gamma_lower_exhaustive(omega: list[arb], tau, M: int) -> arb:
    """Same bound with every k evaluated in interval arithmetic (slow)."""
    tau = as_arb(tau)
    best = None
    for k in _half_lattice(len(omega), M):
        v = _rigorous_term(k, omega, tau)
        if best is None or v < best:
            best = v
    return best


def _gamma_float(sw: _Sweep, tau: float) -> float:
    return float(np.min(sw.dist * sw.k1.astype(np.float64) ** tau))


def _phat(sw: _Sweep, tau: float, n: int, M: int, C: float) -> float:
    return 1 - C * _gamma_float(sw, tau) / ((tau - n) * M ** (tau - n))


@dataclass
class DiophantineCert:
    omega: list
    gamma: arb
    tau: Fraction
    M: int
    C: arb
    measure_lb: arb | None
    source: str = "given"

    @property
    def n(self) -> int:
        return len(self.omega)

    def tau_arb(self) -> arb:
        return as_arb(self.tau)


def tau_min(omega: list[arb], M: int, tol: float = 1e-3) -> tuple[Fraction, arb]:
    """Smallest tau (rounded up to 2 decimals) with positive measure bound.

    Bisection on p^(tau) = 1 - C gamma_M(tau)/((tau-n) M^{tau-n}), which is
    increasing in tau.
    """
    n = len(omega)
    if M < n:
        raise ValueError("need M >= n")
    sw = _sweep(omega, M)
    C = float(box_constant(omega).upper())
    a = n + 1e-9
    b = n + 0.5
    while _phat(sw, b, n, M, C) <= 0:
        b = n + 2 * (b - n)
        if b > n + 100:
            raise ValueError("no tau with positive measure bound found")
    assert _phat(sw, a, n, M, C) < 0
    while b - a > tol / 4:
        m = 0.5 * (a + b)
        if _phat(sw, m, n, M, C) > 0:
            b = m
        else:
            a = m
    # round up to two decimals, then nudge until the rigorous bound is >= 0
    t = Fraction(math.ceil(b * 100 - 1e-9), 100)
    for _ in range(50):
        g = gamma_lower(omega, t, M)
        lb = measure_bound(omega, g, t, M)
        if lb >= 0:
            return t, g
        t += Fraction(1, 100)
    raise ValueError("could not certify tau")


def measure_bound(omega: list[arb], gamma, tau, M: int) -> arb:
    n = len(omega)
    tau = as_arb(tau)
    C = box_constant(omega)
    return 1 - C * as_arb(gamma) / ((tau - n) * arb(M) ** (tau - n))


def certify(omega: list[arb], M: int = 1000, tau=None, gamma=None) -> DiophantineCert:
    """Diophantine certificate; tau defaults to tau_min, gamma to gamma_M.

    A supplied gamma that exceeds the certified lower bound of gamma_M only at
    rounding level (e.g. the exact (3 - sqrt 5)/2 of the golden mean at
    tau = 1) is replaced by that lower bound.
    The measure bound only exists for tau > n.
    """
    source = "given"
    if tau is None:
        tau, g = tau_min(omega, M)
        source = "tau_min"
    else:
        tau = Fraction(tau) if not isinstance(tau, Fraction) else tau
        g = gamma_lower(omega, tau, M)
    if gamma is None:
        gamma = g
    else:
        gamma = as_arb(gamma)
        if not gamma <= g:
            slack = abs(g) * arb(2) ** (16 - ctx.prec)
            if gamma > g + slack:
                raise GammaTooLarge(f"gamma {gamma} exceeds gamma_M {g}")
            gamma = g.lower()
    lb = measure_bound(omega, gamma, tau, M) if tau > len(omega) else None
    return DiophantineCert(list(omega), gamma, tau, M, box_constant(omega), lb, source)


def measure_lower_bound(cert: DiophantineCert) -> arb:
    if not cert.tau > cert.n:
        raise ValueError("the measure bound needs tau > n")
    g = gamma_lower(cert.omega, cert.tau, cert.M)
    if not cert.gamma <= g:
        raise GammaTooLarge(f"gamma {cert.gamma} exceeds gamma_M {g}")
    return measure_bound(cert.omega, cert.gamma, cert.tau, cert.M).lower()


# -- Russmann constant -------------------------------------------------------------

def hurwitz_zeta2_upper(b, rel: float = 1e-10, J: int | None = None) -> arb:
    """Upper bound of zeta(2, b) = sum_{j>=0} (b+j)^-2 for b > 1.

    J explicit terms plus the tail bound 1/(b+J-1). J is picked so that the
    slack of that tail bound, 1/(b+J-1) - 1/(b+J), is below rel times the
    partial sum.
    """
    b = as_arb(b)
    if not b > 1:
        raise ValueError("need b > 1")
    if J is None:
        bf = float(b.lower())
        # slack ~ 1/(b+J)^2 and the partial sum is at least 1/b^2
        J = max(16, int(math.ceil(math.sqrt(1.0 / rel) * (bf + 1))))
    s = arb(0)
    for j in range(J):
        t = b + j
        s += 1 / (t * t)
    return (s + 1 / (b + J - 1)).upper()


def tail_integral_upper(x: arb, y: arb) -> arb:
    """int_y^inf u^x e^{-u} du <= y/(y-x) y^x e^{-y}, for y > x."""
    if not y > x:
        raise TailConditionViolated(f"tail bound needs y > x, got y={y}, x={x}")
    return (y / (y - x) * y ** x * (-y).exp()).upper()


def _divisor_sum(omega: list[arb], delta: arb, L0: int, L1: int) -> arb:
    """sum over L0 < |k|_1 <= L1 of e^{-4 pi |k|_1 delta}/(4 sin^2(pi k.w))."""
    n = len(omega)
    s = arb(0)
    pi4d = 4 * arb.pi() * delta
    for shell in range(L0 + 1, L1 + 1):
        ks = _shell(n, shell)
        e = (-pi4d * shell).exp()
        acc = arb(0)
        for k in ks:
            x = _dot(k, omega)
            sn = x.sin_pi()
            if sn.contains(0):
                raise ResonantInterval(k)
            acc += 1 / (4 * sn * sn)
        # each k stands for the pair {k, -k}
        s += 2 * e * acc
    return s


def _shell(n: int, m: int) -> list:
    """Half of the k with |k|_1 == m (one of each +-k pair)."""
    if n == 1:
        return [(m,)]
    if n == 2:
        out = [(k1, m - k1) for k1 in range(1, m + 1)]
        out += [(k1, -(m - k1)) for k1 in range(1, m)]
        out.append((0, m))
        return out
    import itertools
    out = []
    for k in itertools.product(range(-m, m + 1), repeat=n):
        if sum(abs(v) for v in k) == m:
            first = next(v for v in k if v != 0)
            if first > 0:
                out.append(k)
    return out


ZETA_TERMS = 1000
L_TOLERANCE = 1e-8


def russmann_cR(omega: list[arb], gamma, tau, delta, L: int | None = 0,
                zeta_upper: arb | None = None, max_L: int = 100_000,
                tol: float = L_TOLERANCE) -> tuple[arb, int]:
    """Upper bound of c_R(delta); returns (c_R, L used).

    L=0 gives the classic uniform constant with Gamma(2 tau + 1). L=None
    picks L automatically: L0 = ceil(tau/(2 pi delta)) + 1, then j*L0 for
    j = 2, 3, ... until the relative change drops below ``tol``.
    zeta(2, 2^tau) is bounded with ZETA_TERMS explicit terms.
    """
    n = len(omega)
    gamma, tau, delta = as_arb(gamma), as_arb(tau), as_arb(delta)
    if not delta > 0:
        raise ValueError("delta must be positive")
    z = zeta_upper if zeta_upper is not None else hurwitz_zeta2_upper(arb(2) ** tau, J=ZETA_TERMS)
    base = arb(2) ** (n - 3) * z * (2 * arb.pi()) ** (-2 * tau)
    pref = gamma * gamma * delta ** (2 * tau) * arb(2) ** n
    if L == 0:
        return (base * (2 * tau + 1).gamma()).sqrt().upper(), 0

    def value(Lv: int, partial: arb) -> arb:
        y = 4 * arb.pi() * delta * (Lv + 1)
        tail = tail_integral_upper(2 * tau, y)
        return (pref * partial + base * tail).sqrt().upper()

    if L is not None:
        if L < 0:
            raise ValueError("L must be nonnegative")
        y = 4 * arb.pi() * delta * (L + 1)
        if not y > 2 * tau:
            raise TailConditionViolated("need 4 pi delta (L+1) > 2 tau")
        return value(L, _divisor_sum(omega, delta, 0, L)), L

    L0 = int(math.ceil(float(tau.upper()) / (2 * math.pi * float(delta.lower())))) + 1
    partial = _divisor_sum(omega, delta, 0, L0)
    prev = value(L0, partial)
    Lc = L0
    j = 2
    while True:
        Ln = j * L0
        if Ln > max_L:
            return prev, Lc
        partial = partial + _divisor_sum(omega, delta, Lc, Ln)
        cur = value(Ln, partial)
        rel = abs(float(prev.mid()) - float(cur.mid())) / float(cur.mid())
        if cur < prev:
            best, Lbest = cur, Ln
        else:
            best, Lbest = prev, Lc
        Lc = Ln
        if rel < tol:
            return best, Lbest
        prev = cur
        j += 1


# -- float cohomological solver ------------------------------------------------------

def small_divisors(omega, N, interval: bool = False) -> np.ndarray:
    """1 - exp(2 pi i k.w) on I_N (float, or acb when interval=True)."""
    ks = wavenumbers(N)
    if interval:
        from .fourier import shift_factors
        return 1 - shift_factors(omega, N, True)
    phase = sum(k * float(w) for k, w in zip(ks, omega))
    return 1 - np.exp(2j * np.pi * phase)


def solve_cohomological_float(v: np.ndarray, omega, n: int, guard: float = 1e-14) -> np.ndarray:
    """Zero-average u with u - u(. + w) = v - <v>, coefficient by coefficient.

    Works on complex128 coefficients or on acb object arrays (then ``omega``
    should be arb and the result is a ball enclosure of the truncated solve).
    """
    N = v.shape[v.ndim - n:]
    interval = v.dtype == object
    div = small_divisors(omega, N, interval)
    zero = (0,) * n
    if interval:
        out = np.empty(v.shape, dtype=object)
        lead = v.shape[: v.ndim - n]
        d = div.copy()
        d[zero] = acb(1)
        for idx in np.ndindex(*d.shape):
            if idx != zero and abs(d[idx]).upper() < guard:
                raise NearResonance(f"divisor at k-index {idx} below {guard}")
        inv = np.empty(d.shape, dtype=object)
        for idx in np.ndindex(*d.shape):
            inv[idx] = 1 / d[idx]
        inv[zero] = acb(0)
        return v * inv
    mag = np.abs(div)
    mag[zero] = 1.0
    if np.min(mag) < guard:
        raise NearResonance(f"smallest divisor {np.min(mag):.3e} below {guard}")
    d = div.copy()
    d[zero] = 1.0
    u = v / d
    u[(Ellipsis,) + zero] = 0
    return u
