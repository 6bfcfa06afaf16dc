import random

import numpy as np
import pytest
from flint import arb

from kamcap.errors import DivisionByZeroInterval, DomainError, PossiblySingular
from kamcap.interval import (
    IntervalMatrix, endpoints, iv, iv_arith, iv_elem, iv_mat_inverse, iv_rowsum_norm, working_precision,
)


# arb keeps radii with a 30-bit mantissa: each hull or ball operation may
# push endpoints out by ~2^-30 of the width, and a few of them compound
SLACK = arb(2) ** -26


def _tight(x: arb, lo, hi) -> bool:
    w = arb(hi) - arb(lo)
    return x.contains(iv(lo, hi)) and x.lower() >= arb(lo) - SLACK * w and x.upper() <= arb(hi) + SLACK * w


def test_endpoint_examples():
    assert _tight(iv_arith("add", iv(1, 2), iv(3, 4)), 4, 6)
    assert _tight(iv_arith("mul", iv(-1, 2), iv(-3, 1)), -6, 3)
    assert _tight(iv_arith("div", 1, iv(2, 4)), "0.25", "0.5")


def test_division_by_zero_interval():
    with pytest.raises(DivisionByZeroInterval):
        iv_arith("div", 1, iv(-1, 1))


def test_construction_rejects_bad_endpoints():
    with pytest.raises(DomainError):
        iv(2, 1)
    with pytest.raises(DomainError):
        iv(float("nan"))
    with pytest.raises(DomainError):
        iv_elem("log", iv(-1, 1))


def test_elementary_examples():
    with working_precision(128):
        c = iv_elem("cosh", iv(0))
        assert c.contains(1) and c.rad() <= arb(2) ** -126
        s = iv_elem("sin", iv(0).union(arb.pi() / 2))
        assert s.contains(iv(0, 1))
        e = iv_elem("exp", iv(0, 1))
        assert e.contains(iv(1, arb(1).exp()))
        assert 2 * e.rad() <= (arb(1).exp() - 1) * (1 + SLACK)


def test_fuzz_isotonicity():
    """Results contain the exact result for sampled members of the inputs."""
    rng = random.Random(7)
    ops = ["add", "sub", "mul", "div"]
    fns = ["exp", "sin", "cos", "cosh", "sqrt"]
    with working_precision(96):
        for case in range(10_000):
            a0 = rng.uniform(-5, 5)
            a = iv(a0, a0 + rng.uniform(0, 1))
            t = rng.random()
            x = a.lower() + (a.upper() - a.lower()) * arb(t)
            x = x.mid()
            if case % 2:
                b0 = rng.uniform(0.5, 3) * rng.choice([-1, 1])
                b = iv(min(b0, b0 + 0.2), max(b0, b0 + 0.2))
                yv = (b.lower() + (b.upper() - b.lower()) * arb(rng.random())).mid()
                op = rng.choice(ops)
                r = iv_arith(op, a, b)
                with working_precision(300):
                    exact = {"add": x + yv, "sub": x - yv, "mul": x * yv, "div": x / yv}[op]
                assert r.contains(exact), (op, a, b)
                # monotone in the inputs: the subinterval's result is inside
                assert r.contains(iv_arith(op, x, b))
            else:
                fn = rng.choice(fns)
                if fn == "sqrt":
                    a = iv(abs(a0), abs(a0) + 1)
                    x = (a.lower() + arb(t)).mid()
                r = iv_elem(fn, a)
                with working_precision(300):
                    exact = getattr(x, fn)()
                assert r.contains(exact), (fn, a)


def test_identity_and_diag_inverse():
    I = iv_mat_inverse(IntervalMatrix.identity(2))
    for i in range(2):
        for j in range(2):
            assert I[i, j].contains(1 if i == j else 0)
    D = iv_mat_inverse(IntervalMatrix([[2, 0], [0, 4]]))
    assert D[0, 0] == arb("0.5") and D[1, 1] == arb("0.25")
    assert D[0, 1].contains(0) and D[1, 0].contains(0)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_random_inverse_contains_identity(k):
    rng = np.random.default_rng(k)
    for _ in range(20):
        m = rng.normal(size=(k, k)) + 3 * np.eye(k)
        M = IntervalMatrix([[iv(v, v + 1e-12) for v in row] for row in m])
        P = M @ iv_mat_inverse(M)
        for i in range(k):
            for j in range(k):
                assert P[i, j].contains(1 if i == j else 0)


def test_singular_matrix():
    with pytest.raises(PossiblySingular):
        iv_mat_inverse(IntervalMatrix([[1, 2], [iv("0.4", "0.6"), 1]]))


def test_rowsum_norm():
    assert iv_rowsum_norm(IntervalMatrix([[1, -2], [0, 3]])) == 3
    assert iv_rowsum_norm(IntervalMatrix([[0, 0], [0, 0]])) == 0
    rng = np.random.default_rng(1)
    m = rng.normal(size=(3, 3))
    M = IntervalMatrix([[iv(v, v + 0.1) for v in row] for row in m])
    hi = float(iv_rowsum_norm(M).upper())
    for _ in range(200):
        s = m + 0.1 * rng.random(size=m.shape)
        assert np.max(np.sum(np.abs(s), axis=1)) <= hi


def test_matrix_is_immutable():
    M = IntervalMatrix([[1, 2], [3, 4]])
    with pytest.raises((AttributeError, ValueError)):
        M.entries[0, 0] = arb(5)


def test_higher_precision_is_tighter():
    with working_precision(64):
        a = arb(1).exp()
    with working_precision(256):
        b = arb(1).exp()
        assert a.contains(b) and b.rad() < a.rad()


def test_endpoints_round_outward():
    with working_precision(128):
        x = arb(1) / 3
        lo_s, hi_s = endpoints(x, 10)
        assert arb(lo_s) <= x.lower() and arb(hi_s) >= x.upper()
