"""Arbitrary precision interval arithmetic on top of arb balls.

Scalars are ``flint.arb`` (real) and ``flint.acb`` (complex) values. A ball
m +/- r is the interval [m - r, m + r]; every operation returns a ball that
encloses the exact result for all members of the inputs, with the rounding
error of the midpoint folded into the radius. ``lo``/``hi`` expose the
endpoints.

Grids of intervals are numpy object arrays of arb/acb, so elementwise numpy
arithmetic stays rigorous. The same helpers accept plain float/complex
arrays, which is how the non-rigorous solver shares code with the validator.
"""

from __future__ import annotations

import contextlib
from typing import Iterator

import numpy as np
from flint import acb, arb, ctx

from .errors import DivisionByZeroInterval, DomainError, PossiblySingular, ShapeMismatch

DEFAULT_PREC = 267

IntervalScalar = arb


@contextlib.contextmanager
def working_precision(bits: int) -> Iterator[int]:
    """Run a block at ``bits`` of working precision, restoring the old value."""
    old = ctx.prec
    ctx.prec = int(bits)
    try:
        yield int(bits)
    finally:
        ctx.prec = old


def current_precision() -> int:
    return ctx.prec


# -- construction -----------------------------------------------------------

def _as_arb(v) -> arb:
    if isinstance(v, arb):
        return v
    if isinstance(v, (int, np.integer)):
        return arb(int(v))
    if isinstance(v, (float, np.floating)):
        if not np.isfinite(v):
            raise DomainError(f"non-finite endpoint {v!r}")
        return arb(float(v))
    if isinstance(v, str):
        return arb(v.strip())
    raise TypeError(f"cannot build an interval from {type(v).__name__}")


def iv(lo, hi=None) -> arb:
    """Interval [lo, hi]. Decimal strings are enclosed, not rounded."""
    a = _as_arb(lo)
    b = a if hi is None else _as_arb(hi)
    if a.is_nan() or b.is_nan() or not (a.is_finite() and b.is_finite()):
        raise DomainError("interval endpoints must be finite numbers")
    if hi is not None and a > b:
        raise DomainError(f"empty interval: lo={lo!r} > hi={hi!r}")
    return a.union(b) if hi is not None else a


def parse_decimal(s: str) -> arb:
    """Tight enclosure of a decimal string at working precision."""
    return iv(s)


def nearest(s: str) -> arb:
    """Exact point: the representable number nearest to the decimal ``s``."""
    return arb(s.strip()).mid()


def lo(x: arb) -> arb:
    return x.lower()


def hi(x: arb) -> arb:
    return x.upper()


def upper(x) -> float:
    """Float that is >= every member (rounded up)."""
    if isinstance(x, acb):
        x = x.real
    if isinstance(x, arb):
        u = float(x.upper())
        return float(np.nextafter(u, np.inf)) if u != float("inf") else u
    return float(x)


def lower(x) -> float:
    if isinstance(x, arb):
        u = float(x.lower())
        return float(np.nextafter(u, -np.inf))
    return float(x)


def width(x: arb) -> arb:
    return 2 * x.rad()


def nonneg_upper(x: arb) -> arb:
    """Point interval holding an upper bound of max(x, 0)."""
    u = x.upper()
    return u if u > 0 else arb(0)


def contains_zero(x) -> bool:
    return bool(x.contains(0))


def fmt(x, digits: int = 17) -> str:
    """``[lo, hi]`` with ``digits`` significant digits, rounded outward."""
    if isinstance(x, acb):
        return f"{fmt(x.real, digits)} + i{fmt(x.imag, digits)}"
    a, b = x.lower(), x.upper()
    return f"[{_round_str(a, digits, -1)}, {_round_str(b, digits, +1)}]"


def endpoints(x: arb, digits: int = 17) -> tuple[str, str]:
    """Decimal strings (lo, hi) rounded outward."""
    return _round_str(x.lower(), digits, -1), _round_str(x.upper(), digits, +1)


def _round_str(p: arb, digits: int, direction: int) -> str:
    # arb prints a decimal ball; pick the outer endpoint of that ball
    s = p.str(digits, radius=False)
    d = arb(s)
    if direction < 0 and not d <= p:
        s = (p - abs(p) * arb(10) ** (1 - digits)).str(digits, radius=False)
    elif direction > 0 and not d >= p:
        s = (p + abs(p) * arb(10) ** (1 - digits)).str(digits, radius=False)
    return s


# -- scalar operations --------------------------------------------------------

def iv_arith(op: str, a, b) -> arb:
    a, b = _as_arb(a), _as_arb(b)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return _endpoint_hull(a, b, lambda u, v: u * v)
    if op == "div":
        if b.contains(0):
            raise DivisionByZeroInterval(f"divisor {b} contains 0")
        return _endpoint_hull(a, b, lambda u, v: u / v)
    raise ValueError(f"unknown op {op!r}")


def _endpoint_hull(a: arb, b: arb, f) -> arb:
    # midpoint-radius products overestimate (e.g. [-1,2]*[-3,1] -> [-6,5]);
    # the hull of the endpoint results is the exact range for * and /
    if a.rad() == 0 and b.rad() == 0:
        return f(a, b)
    vals = [f(u, v) for u in (a.lower(), a.upper()) for v in (b.lower(), b.upper())]
    out = vals[0]
    for v in vals[1:]:
        out = out.union(v)
    return out


def _monotone(x: arb, f) -> arb:
    if x.rad() == 0:
        return f(x)
    return f(x.lower()).union(f(x.upper()))


def iv_elem(fn: str, x, extra=None) -> arb:
    x = _as_arb(x)
    if fn == "exp":
        return _monotone(x, arb.exp)
    if fn == "log":
        if not x > 0:
            raise DomainError("log needs lo > 0")
        return _monotone(x, arb.log)
    if fn == "sqrt":
        if not x >= 0:
            raise DomainError("sqrt needs lo >= 0")
        return _monotone(x, arb.sqrt)
    if fn in ("sin", "cos", "cosh", "sinh"):
        return getattr(x, fn)()
    if fn == "pow":
        if extra is None:
            raise ValueError("pow needs an exponent")
        e = _as_arb(extra)
        if e.is_exact() and e.is_integer():
            return x ** int(e.unique_fmpz())
        if not x > 0:
            if x >= 0 and e > 0:
                # x^e on [0, hi] with e > 0 is monotone
                top = x.upper() ** e if x.upper() > 0 else arb(0)
                return arb(0).union(top)
            raise DomainError("real power needs lo > 0")
        return x ** e
    raise ValueError(f"unknown function {fn!r}")


def pi() -> arb:
    return arb.pi()


def max_upper(values) -> arb:
    """Point interval bounding the maximum of a collection from above."""
    best = None
    for v in values:
        u = v.upper() if isinstance(v, arb) else arb(v)
        if best is None or u > best:
            best = u
    if best is None:
        return arb(0)
    return best


def iv_max(*values) -> arb:
    """Enclosure of max over members: [max lo, max hi]."""
    los = [v.lower() for v in values]
    his = [v.upper() for v in values]
    a = los[0]
    for x in los[1:]:
        a = x if x > a else a
    b = his[0]
    for x in his[1:]:
        b = x if x > b else b
    return a.union(b)


# -- vectorized grid helpers ---------------------------------------------------

def is_interval(a) -> bool:
    return isinstance(a, np.ndarray) and a.dtype == object


def to_arb_array(a) -> np.ndarray:
    a = np.asarray(a)
    out = np.empty(a.shape, dtype=object)
    flat = out.reshape(-1)
    for i, v in enumerate(a.reshape(-1)):
        flat[i] = _as_arb(v) if not isinstance(v, arb) else v
    return out


def to_acb_array(a) -> np.ndarray:
    a = np.asarray(a)
    out = np.empty(a.shape, dtype=object)
    flat = out.reshape(-1)
    for i, v in enumerate(a.reshape(-1)):
        if isinstance(v, acb):
            flat[i] = v
        elif isinstance(v, arb):
            flat[i] = acb(v)
        else:
            z = complex(v)
            flat[i] = acb(z.real, z.imag)
    return out


def apply(fn, a: np.ndarray) -> np.ndarray:
    """Elementwise ``fn`` over an object array, keeping its shape."""
    out = np.empty(a.shape, dtype=object)
    o, s = out.reshape(-1), a.reshape(-1)
    for i in range(s.size):
        o[i] = fn(s[i])
    return out


def real_part(a: np.ndarray) -> np.ndarray:
    if is_interval(a):
        return apply(lambda z: z.real if isinstance(z, acb) else z, a)
    return np.real(a)


def mid_array(a: np.ndarray) -> np.ndarray:
    """Drop radii: midpoints as exact balls (used by the float solver)."""
    return apply(lambda z: z.mid(), a)


def to_float(a: np.ndarray) -> np.ndarray:
    if not is_interval(a):
        return np.asarray(a)
    flat = a.reshape(-1)
    if flat.size and isinstance(flat[0], acb):
        return np.array([complex(z.mid()) for z in flat]).reshape(a.shape)
    return np.array([float(z.mid()) for z in flat]).reshape(a.shape)


def array_contains_zero(a: np.ndarray) -> bool:
    return any(v.contains(0) for v in a.reshape(-1))


def sum_array(a: np.ndarray, axis=None):
    """Sum with a fixed left-to-right association order."""
    if axis is None:
        flat = a.reshape(-1)
        acc = flat[0] if flat.size else 0
        for v in flat[1:]:
            acc = acc + v
        return acc
    return np.sum(a, axis=axis)


# -- small dense matrices ------------------------------------------------------

class IntervalMatrix:
    """Immutable k x m matrix of interval entries."""

    __slots__ = ("_a",)

    def __init__(self, entries):
        a = np.array(entries, dtype=object)
        if a.ndim != 2:
            raise ShapeMismatch("IntervalMatrix needs a 2-d array")
        a = apply(lambda v: v if isinstance(v, (arb, acb)) else _as_arb(v), a)
        a.setflags(write=False)
        object.__setattr__(self, "_a", a)

    def __setattr__(self, name, value):
        raise AttributeError("IntervalMatrix is immutable")

    @property
    def shape(self):
        return self._a.shape

    @property
    def rows(self) -> int:
        return self._a.shape[0]

    @property
    def cols(self) -> int:
        return self._a.shape[1]

    @property
    def entries(self) -> np.ndarray:
        return self._a

    def __getitem__(self, ij):
        return self._a[ij]

    def __matmul__(self, other: "IntervalMatrix") -> "IntervalMatrix":
        if self.cols != other.rows:
            raise ShapeMismatch("inner dimensions differ")
        return IntervalMatrix(mat_mul(self._a, other._a))

    def __repr__(self):
        return f"IntervalMatrix({self.rows}x{self.cols})"

    @classmethod
    def identity(cls, k: int) -> "IntervalMatrix":
        return cls([[arb(1) if i == j else arb(0) for j in range(k)] for i in range(k)])


def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of (r,k,...) and (k,c,...) arrays of matrices, grid-wise."""
    r, k = a.shape[:2]
    k2, c = b.shape[:2]
    if k != k2:
        raise ShapeMismatch("inner dimensions differ")
    rest = np.broadcast_shapes(a.shape[2:], b.shape[2:])
    out = np.empty((r, c) + rest, dtype=np.result_type(a.dtype, b.dtype))
    for i in range(r):
        for j in range(c):
            acc = a[i, 0] * b[0, j]
            for m in range(1, k):
                acc = acc + a[i, m] * b[m, j]
            out[i, j] = acc
    return out


def transpose(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, 0, 1)


def _is_singular_pivot(p) -> bool:
    if isinstance(p, (arb, acb)):
        return bool(p.contains(0))
    return bool(np.any(np.abs(p) < 1e-300))


def grid_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse of a (k,k,...) array of matrices, k <= 4, grid-wise.

    Cramer's rule for k <= 2; otherwise Gaussian elimination run pointwise
    with the pivot chosen farthest from zero. Raises PossiblySingular when a
    determinant or pivot may vanish.
    """
    k = m.shape[0]
    if m.shape[1] != k:
        raise ShapeMismatch("matrix must be square")
    if k > 4:
        raise ShapeMismatch("only k <= 4 is supported")
    obj = m.dtype == object
    if k == 1:
        d = m[0, 0]
        _check_det(d, obj)
        out = np.empty(m.shape, dtype=m.dtype)
        out[0, 0] = _recip(d) if obj else 1 / d
        return out
    if k == 2:
        d = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        _check_det(d, obj)
        inv_d = _recip(d) if obj else 1 / d
        out = np.empty(m.shape, dtype=m.dtype)
        out[0, 0] = m[1, 1] * inv_d
        out[1, 1] = m[0, 0] * inv_d
        out[0, 1] = -m[0, 1] * inv_d
        out[1, 0] = -m[1, 0] * inv_d
        return out
    grid = m.shape[2:]
    out = np.empty(m.shape, dtype=m.dtype)
    for idx in np.ndindex(*grid) if grid else [()]:
        sub = m[(slice(None), slice(None)) + idx]
        out[(slice(None), slice(None)) + idx] = _gauss_inverse(sub)
    return out


def _recip(d):
    if isinstance(d, np.ndarray):
        return apply(lambda v: 1 / v, d)
    return 1 / d


def _check_det(d, obj: bool) -> None:
    if obj:
        vals = d.reshape(-1) if isinstance(d, np.ndarray) else [d]
        for v in vals:
            if v.contains(0):
                raise PossiblySingular("determinant interval contains 0")
    elif np.any(np.abs(d) < 1e-300):
        raise PossiblySingular("determinant vanishes")


def _magnitude_lower(v) -> float:
    if isinstance(v, arb):
        return 0.0 if v.contains(0) else float(abs(v).lower())
    if isinstance(v, acb):
        return float(v.abs_lower())
    return abs(v)


def _gauss_inverse(a: np.ndarray) -> np.ndarray:
    k = a.shape[0]
    obj = a.dtype == object
    one = arb(1) if obj else 1.0
    zero = arb(0) if obj else 0.0
    work = np.empty((k, 2 * k), dtype=a.dtype)
    work[:, :k] = a
    for i in range(k):
        for j in range(k):
            work[i, k + j] = one if i == j else zero
    for col in range(k):
        piv = max(range(col, k), key=lambda r: _magnitude_lower(work[r, col]))
        p = work[piv, col]
        if _is_singular_pivot(p) if obj else abs(p) == 0:
            raise PossiblySingular(f"pivot in column {col} may vanish")
        if piv != col:
            work[[col, piv]] = work[[piv, col]]
        inv_p = 1 / p
        work[col] = work[col] * inv_p
        for r in range(k):
            if r != col:
                work[r] = work[r] - work[r, col] * work[col]
    return work[:, k:].copy()


def iv_mat_inverse(m: IntervalMatrix | np.ndarray, k: int | None = None) -> IntervalMatrix:
    a = m.entries if isinstance(m, IntervalMatrix) else np.asarray(m, dtype=object)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch("matrix must be square")
    if k is not None and k != a.shape[0]:
        raise ShapeMismatch(f"expected dimension {k}, got {a.shape[0]}")
    if a.shape[0] > 4:
        raise ShapeMismatch("only k <= 4 is supported")
    if a.shape[0] <= 2:
        return IntervalMatrix(grid_inverse(a))
    return IntervalMatrix(_gauss_inverse(a))


def iv_rowsum_norm(m: IntervalMatrix | np.ndarray) -> arb:
    """Upper bound of max_i sum_j |m_ij| (returned as a point interval)."""
    a = m.entries if isinstance(m, IntervalMatrix) else np.asarray(m, dtype=object)
    best = arb(0)
    for i in range(a.shape[0]):
        s = arb(0)
        for j in range(a.shape[1]):
            v = a[i, j]
            v = v if isinstance(v, (arb, acb)) else _as_arb(v)
            s = s + abs(v)
        u = s.upper()
        if u > best:
            best = u
    return best
