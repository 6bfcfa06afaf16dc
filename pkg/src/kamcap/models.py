"""Exact symplectic maps on T^n x R^n with the standard structure.

Every model exposes F_p(z) = F(z) - (x, 0), DF and D^2F on grids, closed-form
bounds over complex boxes, and the ambient constants. Grid arguments are
lists ``x``, ``y`` of n arrays (float, complex, or object arrays of arb/acb);
outputs keep the same kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from flint import acb, arb

from .errors import ShapeMismatch, StrategyMismatch
from .interval import apply, iv, max_upper

# c_Omega, c_DOmega, c_Da, c_D2a, c_hat_Omega for Omega_0, a_0
STRUCTURE = {"c_Omega": 1, "c_DOmega": 0, "c_Da": 1, "c_D2a": 0, "c_hat_Omega": 1}


def _obj(a) -> bool:
    return isinstance(a, np.ndarray) and a.dtype == object


def sin2pi(a):
    if _obj(a):
        return apply(lambda v: (2 * v).sin_pi(), a)
    if isinstance(a, (arb, acb)):
        return (2 * a).sin_pi()
    return np.sin(2 * np.pi * a)


def cos2pi(a):
    if _obj(a):
        return apply(lambda v: (2 * v).cos_pi(), a)
    if isinstance(a, (arb, acb)):
        return (2 * a).cos_pi()
    return np.cos(2 * np.pi * a)


def omega0_apply(v: np.ndarray) -> np.ndarray:
    """Omega_0 v for v with a leading axis of length 2n; Omega_0 = [[0,-I],[I,0]]."""
    n = v.shape[0] // 2
    return np.concatenate([-v[n:], v[:n]], axis=0)


def omega0_matrix(n: int) -> np.ndarray:
    m = np.zeros((2 * n, 2 * n))
    m[:n, n:] = -np.eye(n)
    m[n:, :n] = np.eye(n)
    return m


@dataclass
class DomainBox:
    """Radii of B (2n values) and of B^ (2n values); d_B is the margin."""

    r: list
    r_hat: list
    d_B: arb = field(default_factory=lambda: arb(0))

    @classmethod
    def from_norms(cls, kx, ky, kx_hat, ky_hat, rho, rho_hat, d_B) -> "DomainBox":
        """Radii from component norms of K_p at rho (kx, ky) and rho_hat."""
        r = [d_B + rho + v for v in kx] + [d_B + v for v in ky]
        r_hat = [rho_hat + v for v in kx_hat] + list(ky_hat)
        return cls([x.upper() for x in r], [x.upper() for x in r_hat], d_B)


@dataclass
class GlobalBounds:
    c_DF: arb
    c_D2F: arb
    c_Fp_hat: arb


class MapModel:
    """Uniform interface for the validator and the solver."""

    name = "abstract"
    n = 1
    param_names: tuple[str, ...] = ()

    def __init__(self, **params):
        missing = [p for p in self.param_names if p not in params]
        if missing:
            raise ValueError(f"{self.name}: missing parameters {missing}")
        extra = set(params) - set(self.param_names)
        if extra:
            raise ValueError(f"{self.name}: unknown parameters {sorted(extra)}")
        # kept raw so enclosures are rebuilt at the working precision in use
        self.raw = {k: (v if isinstance(v, (arb, str)) else repr(v)) for k, v in params.items()}
        self.point = False
        self.structure = dict(STRUCTURE)

    @property
    def params(self) -> dict:
        """Enclosures of the parameters at the current working precision."""
        return {k: v if isinstance(v, arb) else iv(v) for k, v in self.raw.items()}

    def as_point(self) -> "MapModel":
        """Copy whose multiprecision evaluators use parameter midpoints."""
        m = type(self)(**self.raw)
        m.point = True
        return m

    def p(self, name: str, like):
        """Parameter as an interval for interval grids, else as a float."""
        v = self.raw[name]
        v = v if isinstance(v, arb) else iv(v)
        if _obj(like) or isinstance(like, (arb, acb)):
            return v.mid() if self.point else v
        return float(v.mid())

    def fp(self, x: Sequence, y: Sequence) -> list:
        raise NotImplementedError

    def df(self, x: Sequence, y: Sequence) -> np.ndarray:
        raise NotImplementedError

    def d2f(self, x: Sequence, y: Sequence) -> np.ndarray:
        raise NotImplementedError

    def global_bounds(self, box: DomainBox) -> GlobalBounds:
        raise NotImplementedError

    def seed_action(self, omega) -> list[float]:
        """Action values of the integrable (eps = 0) torus with frequency omega."""
        return [float(w) for w in omega]

    def with_params(self, **changes) -> "MapModel":
        merged = dict(self.raw)
        merged.update(changes)
        m = type(self)(**merged)
        m.point = self.point
        return m

    def describe(self) -> str:
        items = ", ".join(f"{k}={self.params[k].mid().str(12, radius=False)}" for k in self.param_names)
        return f"{self.name}({items})"

    # pointwise helpers used by tests
    def eval_map(self, z):
        x, y = _split_point(z, self.n)
        f = self.fp(x, y)
        return [x[i] + f[i] for i in range(self.n)] + [f[self.n + i] for i in range(self.n)]


def _split_point(z, n):
    z = list(z)
    if len(z) != 2 * n:
        raise ShapeMismatch(f"expected {2 * n} coordinates, got {len(z)}")
    return z[:n], z[n:]


def _stack(rows, like) -> np.ndarray:
    """Assemble a nested list of equally shaped arrays/scalars into one array."""
    shape = np.broadcast_shapes(*[np.shape(v) for row in rows for v in (row if isinstance(row, list) else [row])])
    obj = any(_obj(v) or isinstance(v, (arb, acb)) for row in rows for v in (row if isinstance(row, list) else [row]))
    dims = (len(rows), len(rows[0])) if isinstance(rows[0], list) else (len(rows),)
    out = np.empty(dims + shape, dtype=object if obj else np.result_type(*[np.asarray(like).dtype, float]))
    for idx in np.ndindex(*dims):
        v = rows[idx[0]][idx[1]] if len(idx) == 2 else rows[idx[0]]
        if obj and not _obj(v):
            v = np.full(shape, v if isinstance(v, (arb, acb)) else arb(float(v)), dtype=object) if shape else v
        out[idx] = v
    return out


def _zero_like(a):
    if _obj(a):
        return np.full(a.shape, arb(0), dtype=object)
    return np.zeros(np.shape(a))


def _one_like(a):
    if _obj(a):
        return np.full(a.shape, arb(1), dtype=object)
    return np.ones(np.shape(a))


def _maxu(*vals) -> arb:
    return max_upper(vals)


def _ub(x) -> arb:
    return x.upper() if isinstance(x, arb) else arb(x)


def _cosh2pi(r) -> arb:
    return (2 * arb.pi() * r).cosh()


class StandardMap(MapModel):
    """x' = x + y', y' = y - (eps/2pi) sin(2 pi x)."""

    name = "standard"
    n = 1
    param_names = ("eps",)

    def _ybar(self, x, y):
        eps = self.p("eps", x)
        two_pi = 2 * arb.pi() if _obj(x) else 2 * np.pi
        return y - (eps / two_pi) * sin2pi(x)

    def fp(self, x, y):
        yb = self._ybar(x[0], y[0])
        return [yb, yb]

    def df(self, x, y):
        eps = self.p("eps", x[0])
        d = -eps * cos2pi(x[0])
        one = _one_like(d)
        return _stack([[one + d, one], [d, one]], d)

    def d2f(self, x, y):
        eps = self.p("eps", x[0])
        two_pi = 2 * arb.pi() if _obj(x[0]) else 2 * np.pi
        dd = two_pi * eps * sin2pi(x[0])
        z = _zero_like(dd)
        blk = [[dd, z], [z, z]]
        return _stack([blk, blk], dd)

    def global_bounds(self, box):
        eps = abs(self.params["eps"]).upper()
        ch = _cosh2pi(box.r[0])
        c_df = 2 + eps * ch
        c_d2f = 2 * arb.pi() * eps * ch
        c_fp = box.r_hat[1] + eps / (2 * arb.pi()) * _cosh2pi(box.r_hat[0])
        return GlobalBounds(_ub(c_df), _ub(c_d2f), _ub(c_fp))


class NontwistMap(MapModel):
    """x' = x + (y'+l1)(y'+l2), y' = y - (eps/2pi) sin(2 pi x)."""

    name = "nontwist"
    n = 1
    param_names = ("eps", "lambda1", "lambda2")

    def _ybar(self, x, y):
        eps = self.p("eps", x)
        two_pi = 2 * arb.pi() if _obj(x) else 2 * np.pi
        return y - (eps / two_pi) * sin2pi(x)

    def fp(self, x, y):
        l1, l2 = self.p("lambda1", x[0]), self.p("lambda2", x[0])
        yb = self._ybar(x[0], y[0])
        return [(yb + l1) * (yb + l2), yb]

    def df(self, x, y):
        l1, l2 = self.p("lambda1", x[0]), self.p("lambda2", x[0])
        eps = self.p("eps", x[0])
        yb = self._ybar(x[0], y[0])
        dy = -eps * cos2pi(x[0])
        s = 2 * yb + (l1 + l2)
        one = _one_like(dy)
        return _stack([[one + s * dy, s], [dy, one]], dy)

    def d2f(self, x, y):
        l1, l2 = self.p("lambda1", x[0]), self.p("lambda2", x[0])
        eps = self.p("eps", x[0])
        two_pi = 2 * arb.pi() if _obj(x[0]) else 2 * np.pi
        yb = self._ybar(x[0], y[0])
        dy = -eps * cos2pi(x[0])
        dyy = two_pi * eps * sin2pi(x[0])
        s = 2 * yb + (l1 + l2)
        z = _zero_like(dy)
        two = 2 * _one_like(dy)
        top = [[2 * dy * dy + s * dyy, 2 * dy], [2 * dy, two]]
        bot = [[dyy, z], [z, z]]
        return _stack([top, bot], dy)

    def global_bounds(self, box):
        eps = abs(self.params["eps"]).upper()
        l1, l2 = self.params["lambda1"], self.params["lambda2"]
        lsum = abs(l1 + l2).upper()
        pi = arb.pi()
        ch = _cosh2pi(box.r[0])
        yb = box.r[1] + eps / (2 * pi) * ch
        dy = eps * ch
        dyy = 2 * pi * eps * ch
        c_df = _maxu(1 + dy, 1 + (2 * yb + lsum) * (1 + dy))
        c_d2f = _maxu(dyy, 2 + 2 * dy + 2 * dy * dy + (2 * yb + lsum) * dyy)
        w = box.r_hat[1] + eps * _cosh2pi(box.r_hat[0])
        c_fp = _maxu(w, (w + abs(l1).upper()) * (w + abs(l2).upper()))
        return GlobalBounds(_ub(c_df), _ub(c_d2f), _ub(c_fp))

    def seed_action(self, omega, branch: int = 1):
        # (y + l1)(y + l2) = omega, root chosen by branch sign
        l1, l2 = float(self.params["lambda1"].mid()), float(self.params["lambda2"].mid())
        w = float(omega[0])
        b, c = l1 + l2, l1 * l2 - w
        disc = b * b - 4 * c
        if disc < 0:
            raise ValueError("no integrable torus with this frequency")
        return [(-b + branch * np.sqrt(disc)) / 2]


class FroeschleMap(MapModel):
    """Two standard maps coupled through eps sin(2 pi (x1 + x2))."""

    name = "froeschle"
    n = 2
    param_names = ("eps", "lambda1", "lambda2")

    def _ybar(self, x, y):
        like = x[0]
        eps, l1, l2 = self.p("eps", like), self.p("lambda1", like), self.p("lambda2", like)
        two_pi = 2 * arb.pi() if _obj(like) else 2 * np.pi
        c = (eps / two_pi) * sin2pi(x[0] + x[1])
        y1 = y[0] - (l1 / two_pi) * sin2pi(x[0]) - c
        y2 = y[1] - (l2 / two_pi) * sin2pi(x[1]) - c
        return y1, y2

    def fp(self, x, y):
        y1, y2 = self._ybar(x, y)
        return [y1, y2, y1, y2]

    def df(self, x, y):
        like = x[0]
        eps, l1, l2 = self.p("eps", like), self.p("lambda1", like), self.p("lambda2", like)
        c = -eps * cos2pi(x[0] + x[1])
        a11 = -l1 * cos2pi(x[0]) + c
        a22 = -l2 * cos2pi(x[1]) + c
        a12 = c
        one = _one_like(a11)
        z = _zero_like(a11)
        # rows of (x1', x2', y1', y2') w.r.t. (x1, x2, y1, y2)
        return _stack([
            [one + a11, a12, one, z],
            [a12, one + a22, z, one],
            [a11, a12, one, z],
            [a12, a22, z, one],
        ], a11)

    def d2f(self, x, y):
        like = x[0]
        eps, l1, l2 = self.p("eps", like), self.p("lambda1", like), self.p("lambda2", like)
        two_pi = 2 * arb.pi() if _obj(like) else 2 * np.pi
        s = two_pi * eps * sin2pi(x[0] + x[1])
        h11 = two_pi * l1 * sin2pi(x[0]) + s
        h22 = two_pi * l2 * sin2pi(x[1]) + s
        z = _zero_like(s)

        def hess(a, b, c):
            return [[a, b, z, z], [b, c, z, z], [z, z, z, z], [z, z, z, z]]

        h1 = hess(h11, s, s)
        h2 = hess(s, s, h22)
        return _stack([h1, h2, h1, h2], s)

    def global_bounds(self, box):
        pi = arb.pi()
        eps = abs(self.params["eps"]).upper()
        l1 = abs(self.params["lambda1"]).upper()
        l2 = abs(self.params["lambda2"]).upper()
        r, rh = box.r, box.r_hat
        c1, c2, c3 = _cosh2pi(r[0]), _cosh2pi(r[1]), _cosh2pi(r[0] + r[1])
        ch1, ch2, ch3 = _cosh2pi(rh[0]), _cosh2pi(rh[1]), _cosh2pi(rh[0] + rh[1])
        c_df = _maxu(2 + l1 * c1 + 2 * eps * c3, 2 + l2 * c2 + 2 * eps * c3)
        c_d2f = _maxu(2 * pi * l1 * c1 + 4 * pi * eps * c3, 2 * pi * l2 * c2 + 4 * pi * eps * c3)
        c_fp = _maxu(rh[2] + l1 / (2 * pi) * ch1 + eps / (2 * pi) * ch3,
                   rh[3] + l2 / (2 * pi) * ch2 + eps / (2 * pi) * ch3)
        return GlobalBounds(_ub(c_df), _ub(c_d2f), _ub(c_fp))


MODELS = {"standard": StandardMap, "nontwist": NontwistMap, "froeschle": FroeschleMap}


def make_model(name: str, **params) -> MapModel:
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown map {name!r}; choose from {sorted(MODELS)}") from None
    params = {k: v for k, v in params.items() if k in cls.param_names}
    return cls(**params)


def global_bounds(model: MapModel, box: DomainBox) -> GlobalBounds:
    return model.global_bounds(box)


def eval_map(model: MapModel, z):
    return model.eval_map(z)


def eval_DF(model: MapModel, z) -> np.ndarray:
    x, y = _split_point(z, model.n)
    return model.df(x, y)


def eval_D2F(model: MapModel, z) -> np.ndarray:
    x, y = _split_point(z, model.n)
    return model.d2f(x, y)


def d2f_norm(h: np.ndarray):
    """max over (i, j) of sum_k |d_j d_k F_i|, the norm the closed forms bound."""
    if h.dtype == object:
        best = arb(0)
        for i in range(h.shape[0]):
            for j in range(h.shape[1]):
                s = arb(0)
                for k in range(h.shape[2]):
                    s = s + abs(h[i, j, k])
                s = s.upper()
                best = s if s > best else best
        return best
    return float(np.max(np.sum(np.abs(h), axis=2)))


# -- transversal vectors N_0 -------------------------------------------------

STRATEGIES = ("constant_vertical", "omega0_dk")


@dataclass
class N0Frame:
    strategy: str
    c_N0: arb
    c_N0T: arb
    c_hat_N0: arb
    c_hat_N0T: arb
    c_N0TOmegaN0: arb


def default_strategy(model: MapModel) -> str:
    return "constant_vertical" if model.name == "standard" else "omega0_dk"


def n0_grid(strategy: str, dk: np.ndarray, n: int) -> np.ndarray:
    """N_0 on the grid, shape (2n, n, *grid), given DK on the grid."""
    if strategy == "constant_vertical":
        grid = dk.shape[2:]
        obj = dk.dtype == object
        out = np.empty((2 * n, n) + grid, dtype=object if obj else dk.dtype)
        for i in range(2 * n):
            for j in range(n):
                v = 1 if i == n + j else 0
                out[i, j] = np.full(grid, arb(v), dtype=object) if obj else v
        return out
    if strategy == "omega0_dk":
        return omega0_apply(dk)
    raise StrategyMismatch(f"unknown N0 strategy {strategy!r}")


def n0_frame(model: MapModel, dk_coeffs: np.ndarray | None, strategy: str, rho=None, rho_hat=None,
             C=None) -> N0Frame:
    """Norm constants of N_0 for the given strategy.

    ``dk_coeffs`` are the interval Fourier coefficients of DK, shape
    (2n, n, *N); they are only used by ``omega0_dk``.
    """
    from .fourier import fourier_norm, matrix_norm, error_constant  # local: avoid cycle
    from .interval import mat_mul, transpose, to_acb_array
    from .fourier import fft_backward, fft_forward

    n = model.n
    if strategy not in STRATEGIES:
        raise StrategyMismatch(f"unknown N0 strategy {strategy!r}")
    if strategy == "constant_vertical":
        one, zero = arb(1), arb(0)
        return N0Frame(strategy, one, one, one, one, zero)
    if dk_coeffs is None:
        raise StrategyMismatch("omega0_dk needs the coefficients of DK")
    if dk_coeffs.shape[:2] != (2 * n, n):
        raise StrategyMismatch(f"DK has shape {dk_coeffs.shape[:2]}, model needs {(2 * n, n)}")
    rho = rho if isinstance(rho, arb) else arb(rho)
    rho_hat = rho_hat if isinstance(rho_hat, arb) else arb(rho_hat)
    dkt = transpose(dk_coeffs)
    c_n0 = matrix_norm(fourier_norm(dk_coeffs, rho, n))
    c_n0t = matrix_norm(fourier_norm(dkt, rho, n))
    ch_n0 = matrix_norm(fourier_norm(dk_coeffs, rho_hat, n))
    ch_n0t = matrix_norm(fourier_norm(dkt, rho_hat, n))
    if n == 1:
        # every curve in the plane is Lagrangian: N0^T Omega N0 = 0 identically
        c_sym = arb(0)
    else:
        dk_grid = fft_backward(dk_coeffs, n)
        prod = mat_mul(transpose(dk_grid), omega0_apply(dk_grid))
        coeffs = fft_forward(prod, n)
        if C is None:
            C = error_constant(rho, rho_hat, coeffs.shape[2:])
        c_sym = (matrix_norm(fourier_norm(coeffs, rho, n)) + C * ch_n0t * ch_n0).upper()
    return N0Frame(strategy, c_n0, c_n0t, ch_n0, ch_n0t, c_sym)
