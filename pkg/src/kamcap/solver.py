"""Parameterization-method Newton solver for invariant tori (non-rigorous).

The torus is K(theta) = (theta, 0) + K_p(theta) with K_p stored as Fourier
coefficients. Newton runs in double precision first (with continuation in
eps from the integrable torus) and is then polished with multiprecision
ball arithmetic, dropping the radii after every step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from flint import acb, arb, ctx

from . import fourier as fr
from .diophantine import small_divisors
from .errors import (DegenerateFrame, DegenerateTorsion, DivergenceDetected, NoConvergence,
                     PossiblySingular, ShapeMismatch)
from .interval import (apply, grid_inverse, mat_mul, mid_array, nearest, to_acb_array, transpose,
                       working_precision)
from .models import MapModel, default_strategy, n0_grid, omega0_apply

log = logging.getLogger(__name__)

TORSION_GUARD = 1e-14


@dataclass
class Parameterization:
    """K_p as coefficients of shape (2n, N_1, ..., N_n)."""

    n: int
    coeffs: np.ndarray
    omega: list
    digits: int = 40
    history: list = field(default_factory=list)

    @property
    def N(self) -> tuple[int, ...]:
        return tuple(self.coeffs.shape[1:])

    @property
    def hp(self) -> bool:
        return self.coeffs.dtype == object

    def grid_values(self) -> np.ndarray:
        return _backend(self.hp).real(_backend(self.hp).bwd(self.coeffs, self.n))

    def to_float(self) -> "Parameterization":
        if not self.hp:
            return self
        c = np.array([complex(z.mid()) for z in self.coeffs.reshape(-1)]).reshape(self.coeffs.shape)
        return Parameterization(self.n, c, [float(w.mid()) if isinstance(w, arb) else float(w) for w in self.omega],
                                self.digits, list(self.history))


# -- kind-generic helpers ------------------------------------------------------

class _Float:
    hp = False

    def fwd(self, v, n):
        axes = tuple(range(v.ndim - n, v.ndim))
        ntot = int(np.prod(v.shape[v.ndim - n:]))
        return np.fft.fftn(v, axes=axes) / ntot

    def bwd(self, c, n):
        axes = tuple(range(c.ndim - n, c.ndim))
        ntot = int(np.prod(c.shape[c.ndim - n:]))
        return np.fft.ifftn(c, axes=axes) * ntot

    def real(self, a):
        return np.real(a)

    def theta(self, N):
        return fr.grid_points(N)

    def omega(self, w):
        return [float(v.mid()) if isinstance(v, arb) else float(v) for v in w]

    def mean(self, a, n):
        return np.mean(a, axis=tuple(range(a.ndim - n, a.ndim)))

    def mid(self, c):
        return c

    def norm0(self, coeffs, n):
        return float(np.max(np.sum(np.abs(coeffs), axis=tuple(range(coeffs.ndim - n, coeffs.ndim)))))


class _Multi(_Float):
    hp = True

    def fwd(self, v, n):
        return fr.fft_forward(v, n)

    def bwd(self, c, n):
        return fr.fft_backward(c, n)

    def real(self, a):
        return apply(lambda z: z.real if isinstance(z, acb) else z, a)

    def theta(self, N):
        return fr.grid_points_arb(N)

    def omega(self, w):
        return [v.mid() if isinstance(v, arb) else nearest(repr(float(v))) for v in w]

    def mean(self, a, n):
        ntot = int(np.prod(a.shape[a.ndim - n:]))
        flat = a.reshape(a.shape[: a.ndim - n] + (-1,))
        out = np.empty(flat.shape[:-1], dtype=object)
        for idx in np.ndindex(*flat.shape[:-1]):
            acc = flat[idx + (0,)]
            for v in flat[idx][1:]:
                acc = acc + v
            out[idx] = acc / ntot
        return out

    def mid(self, c):
        return mid_array(c)

    def norm0(self, coeffs, n):
        # magnitudes in double are plenty for a stopping test
        return float(np.max(np.sum(np.abs(_as_complex(coeffs)), axis=tuple(range(coeffs.ndim - n, coeffs.ndim)))))


def _as_complex(a: np.ndarray) -> np.ndarray:
    if a.dtype != object:
        return a
    return np.array([complex(z.mid()) if isinstance(z, acb) else float(z.mid()) for z in a.reshape(-1)]
                    ).reshape(a.shape)


def _backend(hp: bool):
    return _Multi() if hp else _Float()


def _inv_divisors(omega, N, hp: bool):
    d = small_divisors(omega, N, interval=hp)
    zero = (0,) * len(N)
    if hp:
        d[zero] = acb(1)
        out = apply(lambda v: 1 / v, d)
        out[zero] = acb(0)
        return out
    d[zero] = 1.0
    out = 1 / d
    out[zero] = 0.0
    return out


def _R(v, inv_div, be, n):
    """Zero-average solution of u - u(.+w) = v - <v> on the grid."""
    return be.real(be.bwd(be.fwd(v, n) * inv_div, n))


# -- error and frame -------------------------------------------------------------------

def _compose(K: Parameterization, model: MapModel, be):
    n = K.n
    kp = be.real(be.bwd(K.coeffs, n))
    theta = be.theta(K.N)
    x = [theta[l] + kp[l] for l in range(n)]
    y = [kp[n + l] for l in range(n)]
    return kp, x, y


def _error_grid(K: Parameterization, model: MapModel, be, kp, x, y, sh, w):
    n = K.n
    fp = model.fp(x, y)
    kps = be.real(be.bwd(K.coeffs * sh, n))
    rows = [kp[l] + fp[l] - kps[l] - w[l] for l in range(n)]
    rows += [fp[n + l] - kps[n + l] for l in range(n)]
    E = np.empty((2 * n,) + K.N, dtype=kp.dtype)
    for i, r in enumerate(rows):
        E[i] = r
    return E


def invariance_error(K: Parameterization, model: MapModel):
    """Coefficients of E and ||E||_{F,0} (max over components)."""
    if model.n != K.n:
        raise ShapeMismatch("model and torus dimensions differ")
    be = _backend(K.hp)
    w = be.omega(K.omega)
    sh = fr.shift_factors(w, K.N, K.hp)
    kp, x, y = _compose(K, model, be)
    E = _error_grid(K, model, be, kp, x, y, sh, w)
    Ec = be.fwd(E, K.n)
    return fr.FourierSeries(Ec, K.n), be.norm0(Ec, K.n)


def _dk_coeffs(K: Parameterization) -> np.ndarray:
    n = K.n
    out = np.empty((2 * n, n) + K.N, dtype=K.coeffs.dtype)
    for i in range(2 * n):
        for l in range(n):
            out[i, l] = fr.series_derivative(K.coeffs[i], l, n)
    zero = (0,) * n
    for l in range(n):
        out[(l, l) + zero] = out[(l, l) + zero] + 1
    return out


@dataclass
class Frame:
    DK: np.ndarray
    N0: np.ndarray
    B: np.ndarray
    A: np.ndarray
    N: np.ndarray
    P: np.ndarray
    P_shift: np.ndarray
    T: np.ndarray
    T_avg: np.ndarray
    DF: np.ndarray


def _frame(K, model, strategy, be, x, y, sh):
    n = K.n
    dk = be.real(be.bwd(_dk_coeffs(K), n))
    n0 = n0_grid(strategy, dk, n)
    G = -mat_mul(transpose(dk), omega0_apply(n0))
    try:
        B = grid_inverse(G)
    except PossiblySingular as exc:
        raise DegenerateFrame(str(exc), step="frame") from None
    if n == 1:
        A = np.zeros((1, 1) + K.N, dtype=dk.dtype) if not be.hp else np.full((1, 1) + K.N, arb(0), dtype=object)
        Nf = mat_mul(n0, B)
    else:
        S = mat_mul(transpose(n0), omega0_apply(n0))
        A = mat_mul(mat_mul(transpose(B), S), B) * (-0.5 if not be.hp else arb(-1) / 2)
        Nf = mat_mul(dk, A) + mat_mul(n0, B)
    P = np.concatenate([dk, Nf], axis=1)
    Ps = be.real(be.bwd(be.fwd(P, n) * sh, n))
    DF = model.df(x, y)
    T = mat_mul(mat_mul(transpose(Ps[:, n:]), omega0_apply(DF)), Nf)
    T_avg = be.mean(T, n)
    return Frame(dk, n0, B, A, Nf, P, Ps, T, T_avg, DF)


def frame_and_torsion(K: Parameterization, model: MapModel, strategy: str | None = None) -> Frame:
    """Symplectic frame P = (DK, N), its shift and the torsion T on the grid."""
    be = _backend(K.hp)
    strategy = strategy or default_strategy(model)
    w = be.omega(K.omega)
    sh = fr.shift_factors(w, K.N, K.hp)
    _, x, y = _compose(K, model, be)
    return _frame(K, model, strategy, be, x, y, sh)


def reducibility_residual(K: Parameterization, model: MapModel, fr_: Frame) -> float:
    """max_j |P(theta+w)^{-1} DF P(theta) - [[I, T], [0, I]]| in double."""
    n = K.n
    P = _as_complex(fr_.P).real
    Ps = _as_complex(fr_.P_shift).real
    DF = _as_complex(fr_.DF).real
    T = _as_complex(fr_.T).real
    pts = P.reshape(2 * n, 2 * n, -1)
    out = 0.0
    for j in range(pts.shape[2]):
        Pj, Psj, Dj = pts[:, :, j], Ps.reshape(2 * n, 2 * n, -1)[:, :, j], DF.reshape(2 * n, 2 * n, -1)[:, :, j]
        L = np.linalg.solve(Psj, Dj @ Pj)
        Lam = np.eye(2 * n)
        Lam[:n, n:] = T.reshape(n, n, -1)[:, :, j]
        out = max(out, float(np.max(np.abs(L - Lam))))
    return out


def _inv_small(m: np.ndarray, hp: bool):
    n = m.shape[0]
    if hp:
        if n == 1:
            if abs(m[0, 0]) < TORSION_GUARD:
                raise DegenerateTorsion("average torsion is numerically singular", step="newton")
            return np.array([[1 / m[0, 0]]], dtype=object)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) < TORSION_GUARD:
            raise DegenerateTorsion("average torsion is numerically singular", step="newton")
        return np.array([[m[1, 1] / det, -m[0, 1] / det], [-m[1, 0] / det, m[0, 0] / det]], dtype=object)
    if abs(np.linalg.det(m)) < TORSION_GUARD:
        raise DegenerateTorsion("average torsion is numerically singular", step="newton")
    return np.linalg.inv(m)


def newton_step(K: Parameterization, model: MapModel, strategy: str | None = None,
                _cache: dict | None = None):
    """One Newton correction. Returns (K', ||E(K)||_{F,0}) -- the error before the step."""
    n = K.n
    be = _backend(K.hp)
    strategy = strategy or default_strategy(model)
    w = be.omega(K.omega)
    key = (K.N, K.hp, ctx.prec)
    cache = _cache if _cache is not None else {}
    if K.hp and not model.point:
        model = model.as_point()
    if cache.get("key") != key:
        cache.clear()
        cache["key"] = key
        cache["sh"] = fr.shift_factors(w, K.N, K.hp)
        cache["inv"] = _inv_divisors(w, K.N, K.hp)
    sh, inv = cache["sh"], cache["inv"]

    kp, x, y = _compose(K, model, be)
    E = _error_grid(K, model, be, kp, x, y, sh, w)
    err = be.norm0(be.fwd(E, n), n)
    f = _frame(K, model, strategy, be, x, y, sh)

    # eta = Omega_0 P(theta+w)^T Omega_0 E  (Omega = Omega_0 for all models)
    eta = omega0_apply(mat_mul(transpose(f.P_shift), omega0_apply(E[:, None]))) [:, 0]
    eta_L, eta_N = eta[:n], eta[n:]
    xiN = np.empty_like(eta_N)
    for i in range(n):
        xiN[i] = _R(eta_N[i], inv, be, n)
    rhs = eta_L - mat_mul(f.T, xiN[:, None])[:, 0]
    avg = be.mean(rhs, n)
    Tinv = _inv_small(f.T_avg, be.hp)
    xi0 = Tinv @ avg
    for i in range(n):
        xiN[i] = xiN[i] + xi0[i]
    src = eta_L - mat_mul(f.T, xiN[:, None])[:, 0]
    xiL = np.empty_like(eta_L)
    for i in range(n):
        xiL[i] = _R(src[i], inv, be, n)
    xi = np.concatenate([xiL, xiN], axis=0)
    dK = mat_mul(f.P, xi[:, None])[:, 0]
    new = K.coeffs + be.fwd(dK, n)
    new = band_limit(be.mid(hermitian(new, n)), n)
    return Parameterization(n, new, K.omega, K.digits, K.history + [err]), err


def band_mask(N) -> np.ndarray:
    """True on modes with some |k_l| >= N_l/4 (the band Step 0 discards)."""
    mask = np.zeros(tuple(N), dtype=bool)
    for k, m in zip(fr.wavenumbers(N), N):
        mask = mask | (4 * k >= m) | (4 * k <= -m)
    return mask


def band_limit(c: np.ndarray, n: int) -> np.ndarray:
    """Zero the discarded band. Newton then never sees aliased products."""
    mask = band_mask(c.shape[c.ndim - n:])
    if not mask.any():
        return c
    c = c.copy()
    c[:, mask] = acb(0) if c.dtype == object else 0
    return c


def hermitian(c: np.ndarray, n: int) -> np.ndarray:
    """Project onto coefficients of real functions: (c_k + conj c_{-k}) / 2."""
    axes = tuple(range(c.ndim - n, c.ndim))
    flipped = np.roll(np.flip(c, axis=axes), 1, axis=axes)
    if c.dtype == object:
        half = arb(1) / 2
        return (c + apply(lambda z: z.conjugate(), flipped)) * half
    return 0.5 * (c + np.conj(flipped))


# -- drivers ------------------------------------------------------------------------------

def integrable_seed(model: MapModel, omega, N: Sequence[int], branch: int = 1) -> Parameterization:
    n = model.n
    c = np.zeros((2 * n,) + tuple(N), dtype=np.complex128)
    kw = {"branch": branch} if model.name == "nontwist" else {}
    y0 = model.seed_action([float(w.mid()) if isinstance(w, arb) else float(w) for w in omega], **kw)
    for l in range(n):
        c[(n + l,) + (0,) * n] = y0[l]
    return Parameterization(n, c, list(omega))


def tail_mass(K: Parameterization) -> float:
    """sum |K~_k| over the top quarter of the retained modes.

    Retained modes have |k_l| < N_l/4; the top quarter is where some
    |k_l| >= 3 N_l/16.
    """
    c = _as_complex(K.coeffs)
    mask = np.zeros(K.N, dtype=bool)
    for k, m in zip(fr.wavenumbers(K.N), K.N):
        if m >= 16:
            mask = mask | (np.abs(k) >= (3 * m) // 16)
    mask &= ~band_mask(K.N)
    if not mask.any():
        return 0.0
    return float(np.max(np.sum(np.abs(c[:, mask]), axis=1)))


def resample(K: Parameterization, N_new: Sequence[int]) -> Parameterization:
    """Zero-pad (or truncate) the coefficients onto another grid."""
    N_new = tuple(N_new)
    obj = K.hp
    out = np.empty((2 * K.n,) + N_new, dtype=object) if obj else np.zeros((2 * K.n,) + N_new, dtype=np.complex128)
    if obj:
        out.fill(acb(0))
    src_k = [fr.freqs(m) for m in K.N]
    for idx in np.ndindex(*K.N):
        k = [int(src_k[a][i]) for a, i in enumerate(idx)]
        if all(-(m // 2) <= kk < m // 2 for kk, m in zip(k, N_new)):
            dst = tuple(kk % m for kk, m in zip(k, N_new))
            out[(slice(None),) + dst] = K.coeffs[(slice(None),) + idx]
    return Parameterization(K.n, out, K.omega, K.digits, list(K.history))


# -- seeds from orbits ---------------------------------------------------------

def birkhoff_weights(J: int) -> np.ndarray:
    """Bump weights exp(-1/(t(1-t))) normalised to sum 1.

    Weighted Birkhoff sums with these weights converge faster than any power
    of 1/J along quasi-periodic orbits.
    """
    t = (np.arange(J) + 0.5) / J
    g = np.exp(-1.0 / (t * (1.0 - t)))
    return g / g.sum()


def orbit(model: MapModel, z0: Sequence[float], J: int) -> np.ndarray:
    """Float orbit z_0..z_J of the lifted map, shape (J+1, 2n)."""
    n = model.n
    pm = model.as_point()
    out = np.empty((J + 1, 2 * n))
    out[0] = z0
    x, y = [float(v) for v in z0[:n]], [float(v) for v in z0[n:]]
    for j in range(J):
        f = pm.fp(x, y)
        x = [x[i] + float(f[i]) for i in range(n)]
        y = [float(f[n + i]) for i in range(n)]
        out[j + 1, :n], out[j + 1, n:] = x, y
    return out


def rotation_number(model: MapModel, z0: Sequence[float], J: int = 20000) -> np.ndarray:
    """Weighted Birkhoff average of the angle increments along the orbit of z0."""
    zs = orbit(model, z0, J)
    n = model.n
    return birkhoff_weights(J) @ np.diff(zs[:, :n], axis=0)


def orbit_seed(model: MapModel, z0: Sequence[float], N: Sequence[int], J: int = 200000,
               omega=None) -> Parameterization:
    """Fourier fit of K_p from the orbit of z0, taking K(j omega) = z_j.

    ``omega`` defaults to the orbit's rotation number. Coefficients in the
    band |k_l| < N_l/4 come from weighted Birkhoff averages of
    K_p(theta_j) exp(-2 pi i k.theta_j).
    """
    n = model.n
    N = tuple(int(m) for m in N)
    zs = orbit(model, z0, J)[:J]
    w = birkhoff_weights(J)
    om = rotation_number(model, z0, J) if omega is None else np.asarray(omega, dtype=float)
    theta = np.outer(np.arange(J), om)
    vals = zs.copy()
    vals[:, :n] -= theta
    g = vals * w[:, None]
    ks = [np.arange(-(m // 4) + 1, (m + 3) // 4) if m >= 4 else np.zeros(1, dtype=int) for m in N]
    c = np.zeros((2 * n,) + N, dtype=np.complex128)
    chunk = max(1, 2 ** 22 // max(1, int(np.prod([len(k) for k in ks]))))
    for a in range(0, J, chunk):
        th = theta[a:a + chunk] % 1.0
        acc = g[a:a + chunk].T.astype(np.complex128)
        phases = [np.exp(-2j * np.pi * np.outer(th[:, l], ks[l])) for l in range(n)]
        if n == 1:
            block = acc @ phases[0]
        else:
            sub = "".join(chr(ord("a") + l) for l in range(n))
            spec = "zj," + ",".join(f"j{s}" for s in sub) + f"->z{sub}"
            block = np.einsum(spec, acc, *phases)
        idx = np.ix_(range(2 * n), *[k % m for k, m in zip(ks, N)])
        c[idx] += block
    c = hermitian(c, n)
    return Parameterization(n, c, [float(v) for v in om])


def seed_on_line(model: MapModel, omega: float, fixed: Sequence[float], bracket: tuple[float, float],
                 N: Sequence[int], coord: int = -1, J: int = 20000, J_fit: int = 200000,
                 rtol: float = 1e-13) -> Parameterization:
    """Orbit seed for a 1-D frequency from a line of initial conditions.

    The initial condition is ``fixed`` with coordinate ``coord`` replaced by
    a value in ``bracket``; a secant search matches the orbit's rotation
    number to omega. The fit is relabelled with omega itself.
    """
    if model.n != 1:
        raise ValueError("line search seeds are for n = 1")

    def point(s):
        z = list(fixed)
        z[coord] = s
        return z

    def miss(s):
        return float(rotation_number(model, point(s), J)[0]) - omega

    a, b = bracket
    fa, fb = miss(a), miss(b)
    for _ in range(60):
        if abs(fb) < rtol or fb == fa:
            break
        a, fa, b = b, fb, b - fb * (b - a) / (fb - fa)
        fb = miss(b)
    if not abs(fb) < 1e-9:
        raise NoConvergence(f"rotation number misses omega by {fb:.2e}", step="seed")
    K = orbit_seed(model, point(b), N, J_fit)
    return Parameterization(K.n, K.coeffs, [omega])


def newton_loop(K: Parameterization, model: MapModel, tol: float, strategy=None, max_steps: int = 30,
                allow_stall: bool = False):
    """Iterate Newton until ||E||_{F,0} <= tol; returns (K, its error).

    With ``allow_stall`` the loop also returns the best iterate once the
    error stops halving (the discretization floor); otherwise growth in two
    consecutive steps raises DivergenceDetected.
    """
    cache: dict = {}
    prev, grow = math.inf, 0
    best = (math.inf, K)
    for _ in range(max_steps):
        K_new, err = newton_step(K, model, strategy, cache)
        log.debug("newton N=%s hp=%s err=%.3e", K.N, K.hp, err)
        if not math.isfinite(err):
            raise DivergenceDetected(f"error is {err}", step="newton")
        if err < best[0]:
            best = (err, K)
        if err <= tol:
            return K, err
        if allow_stall and err > 0.5 * prev and best[0] < 1e-6:
            return best[1], best[0]
        if err > prev:
            grow += 1
            if grow >= 2:
                raise DivergenceDetected(f"error grew twice in a row (now {err:.3e})", step="newton")
        else:
            grow = 0
        prev = err
        K = K_new
    _, err = invariance_error(K, model)
    if err < best[0]:
        best = (err, K)
    if best[0] <= tol or allow_stall:
        return best[1], best[0]
    raise NoConvergence(f"no convergence after {max_steps} steps, error {best[0]:.3e}", step="newton")


FLOAT_TOL = 1e-12


def continue_in_eps(model: MapModel, omega, N, seed: Parameterization | None = None, h0: float = 0.05,
                    strategy=None, branch: int = 1) -> Parameterization:
    """Float continuation from eps = 0 (or from ``seed``) to the model's eps."""
    target = float(model.params["eps"].mid())
    K = seed if seed is not None else integrable_seed(model, omega, N, branch)
    K = K.to_float()
    if K.N != tuple(N):
        K = resample(K, N)
    eps = 0.0 if seed is None else target
    h = min(h0, target) if target > 0 else 0.0
    scale = max(1.0, float(np.max(np.abs(K.coeffs))))
    while True:
        nxt = min(target, eps + h) if eps < target else target
        m = model.with_params(eps=repr(nxt))
        try:
            K2, err = newton_loop(K, m, FLOAT_TOL * scale, strategy, max_steps=40, allow_stall=True)
            if err > 1e-8 * scale:
                raise NoConvergence(f"float Newton stalled at {err:.2e}")
        except (DivergenceDetected, NoConvergence, DegenerateTorsion, DegenerateFrame, np.linalg.LinAlgError) as exc:
            if nxt == eps or h < 1e-6:
                raise NoConvergence(f"continuation failed at eps={nxt}: {exc}", step="continuation") from None
            h /= 2
            continue
        K, eps = K2, nxt
        if eps >= target:
            return K
        h = min(2 * h, h0)


def solver_precision(tol: float) -> int:
    return max(180, int(math.ceil(-math.log2(tol))) + 40)


def solve_torus(model: MapModel, omega, N: Sequence[int], tol: float = 1e-33, seed: Parameterization | None = None,
                max_grid: Sequence[int] | None = None, prec: int | None = None, strategy=None,
                branch: int = 1, digits: int | None = None) -> Parameterization:
    """Float continuation, then multiprecision Newton to ||E||_{F,0} <= tol.

    Newton works on the retained band |k_l| < N_l/4. The grid doubles while
    the error floor is above tol or the top quarter of the retained modes
    holds more than tol/100, up to ``max_grid``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    N = tuple(int(m) for m in N)
    max_grid = tuple(max_grid) if max_grid is not None else N
    prec = prec or solver_precision(tol)
    digits = digits or max(40, int(math.ceil(-math.log10(tol))) + 15)
    with working_precision(prec):
        omega_mid = [w.mid() if isinstance(w, arb) else nearest(str(w)) for w in omega]
    if seed is not None and float(model.params["eps"].mid()) != 0:
        Kf = continue_in_eps(model, omega_mid, N, seed=seed, strategy=strategy)
    elif seed is not None:
        Kf = seed.to_float()
    else:
        Kf = continue_in_eps(model, omega_mid, N, strategy=strategy, branch=branch)
    with working_precision(prec):
        Kh = Parameterization(Kf.n, band_limit(to_acb_array(Kf.coeffs), Kf.n), omega_mid, digits,
                              list(Kf.history))
    while True:
        with working_precision(prec):
            Kh, err = newton_loop(Kh, model, tol, strategy, max_steps=40, allow_stall=True)
        tail = tail_mass(Kh)
        Kh.history.append(err)
        Kh.digits = digits
        if err <= tol and tail <= 1e-2 * tol:
            return Kh
        if all(a >= b for a, b in zip(Kh.N, max_grid)):
            if err <= tol:
                log.warning("tail %.2e exceeds tol/100 at the largest grid %s", tail, Kh.N)
                return Kh
            exc = NoConvergence(f"error floor {err:.3e} above tol {tol:.1e} at grid {Kh.N} "
                                f"(tail {tail:.2e}); raise max_grid", step="solve")
            exc.partial = Kh
            raise exc
        Nn = tuple(min(2 * a, b) for a, b in zip(Kh.N, max_grid))
        log.info("error %.2e / tail %.2e: doubling grid to %s", err, tail, Nn)
        with working_precision(prec):
            Kh = resample(Kh, Nn)


# -- torus sampling files ------------------------------------------------------------------

def _fmt_decimal(v: arb, digits: int) -> str:
    s = v.mid().str(digits, radius=False)
    return s


def write_torus(path, K: Parameterization, digits: int | None = None) -> None:
    """Text file: n / N_1..N_n / digits / one line of 2n values per grid point."""
    digits = digits or K.digits
    with working_precision(max(ctx.prec, int(digits * 3.33) + 64)):
        vals = K.grid_values() if K.hp else to_acb_array(K.grid_values())
        vals = apply(lambda z: z.real if isinstance(z, acb) else z, vals)
        n = K.n
        lines = [str(n), " ".join(str(m) for m in K.N), str(digits)]
        flat = vals.reshape(2 * n, -1)
        for j in range(flat.shape[1]):
            lines.append(" ".join(_fmt_decimal(flat[i, j], digits) for i in range(2 * n)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class TorusSampling:
    n: int
    N: tuple[int, ...]
    digits: int
    values: np.ndarray  # (2n, *N) exact arb points


def read_torus(path) -> TorusSampling:
    """Each decimal is read as the nearest number at the working precision."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    try:
        n = int(lines[0])
        N = tuple(int(v) for v in lines[1].split())
        digits = int(lines[2])
    except (IndexError, ValueError) as exc:
        raise ShapeMismatch(f"bad torus header: {exc}") from None
    if len(N) != n:
        raise ShapeMismatch(f"header declares n={n} but {len(N)} grid sizes")
    ntot = int(np.prod(N))
    body = lines[3:]
    if len(body) != ntot:
        raise ShapeMismatch(f"expected {ntot} samples, found {len(body)}")
    vals = np.empty((2 * n, ntot), dtype=object)
    for j, ln in enumerate(body):
        parts = ln.split()
        if len(parts) != 2 * n:
            raise ShapeMismatch(f"line {j + 4}: expected {2 * n} values")
        for i, s in enumerate(parts):
            vals[i, j] = nearest(s)
    return TorusSampling(n, N, digits, vals.reshape((2 * n,) + N))


def sampling_to_parameterization(s: TorusSampling, omega) -> Parameterization:
    c = fr.fft_forward(s.values, s.n)
    return Parameterization(s.n, mid_array(c), list(omega), s.digits)
