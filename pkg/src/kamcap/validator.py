"""Rigorous a-posteriori validation of an invariant torus (Steps 0 to 4).

Every quantity is a ball at the precision given in ``KamParams``. The torus
being validated is the trigonometric polynomial obtained from the sampling
after zeroing the upper half of the spectrum, so DK is known exactly and
only grid products and grid inverses need the DFT error constants.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Sequence

import numpy as np
from flint import acb, arb

from . import fourier as fr
from .diophantine import DiophantineCert, russmann_cR
from .errors import (InvalidStrip, KamError, NeumannFailure, PossiblySingular, ShapeMismatch,
                     TorsionDegenerate)
from .interval import (DEFAULT_PREC, apply, endpoints, grid_inverse, iv, iv_mat_inverse, iv_rowsum_norm,
                       mat_mul, max_upper, to_arb_array, transpose, working_precision)
from .models import DomainBox, GlobalBounds, MapModel, default_strategy, n0_frame, n0_grid, omega0_apply
from .solver import band_mask, read_torus

PARAM_KEYS = ("rho", "delta", "sigma", "d_B", "rho_hat", "a2", "precision")


# -- parameters -------------------------------------------------------------------------

def _dec(v) -> str:
    if isinstance(v, str):
        return v.strip()
    if isinstance(v, arb):
        return v.mid().str(40, radius=False)
    return repr(float(v)) if not isinstance(v, int) else str(v)


@dataclass
class KamParams:
    """Widths of the validation; decimal strings so parsing is exact-ish at any precision."""

    rho: str
    delta: str
    sigma: str
    d_B: str
    rho_hat: str
    a2: str = "1000"
    precision: int = DEFAULT_PREC
    L: int | None = None  # None: automatic choice in c_R

    def __post_init__(self):
        for k in ("rho", "delta", "sigma", "d_B", "rho_hat", "a2"):
            setattr(self, k, _dec(getattr(self, k)))
        self.precision = int(self.precision)

    def value(self, name: str) -> arb:
        return iv(getattr(self, name))

    @property
    def a2_infinite(self) -> bool:
        return self.a2.lower() in ("inf", "infinity")

    def a3(self) -> arb:
        return self.value("rho") / self.value("delta")

    def a1(self) -> arb:
        """Root of a3 = 3 a1 a2 / ((a1 - 1)(a2 - 1))."""
        a3 = self.a3()
        if self.a2_infinite:
            return a3 / (a3 - 3)
        a2 = self.value("a2")
        return a3 / (a3 - 3 * a2 / (a2 - 1))

    def rho_inf(self) -> arb:
        if self.a2_infinite:
            return arb(0)
        return self.value("rho") / self.value("a2")

    def check(self) -> None:
        rho, delta = self.value("rho"), self.value("delta")
        if not (delta > 0 and 3 * delta < rho):
            raise InvalidStrip("need 0 < delta < rho/3")
        if not (rho > 0 and rho < self.value("rho_hat")):
            raise InvalidStrip("need 0 < rho < rho_hat")
        if not self.value("sigma") > 1:
            raise InvalidStrip("need sigma > 1")
        if not self.value("d_B") > 0:
            raise InvalidStrip("need d_B > 0")
        if not self.a2_infinite and not self.value("a2") > 1:
            raise InvalidStrip("need a2 > 1")
        if not self.a1() > 1:
            raise InvalidStrip("delta too large for a2: a1 must exceed 1")

    def to_text(self) -> str:
        lines = [f"{k} = {getattr(self, k)}" for k in PARAM_KEYS]
        if self.L is not None:
            lines.append(f"L = {self.L}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "KamParams":
        kv = {}
        for ln in text.splitlines():
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            if "=" not in ln:
                raise ValueError(f"bad params line {ln!r}")
            k, v = (s.strip() for s in ln.split("=", 1))
            kv[k] = v
        missing = [k for k in ("rho", "delta", "sigma", "d_B", "rho_hat") if k not in kv]
        if missing:
            raise ValueError(f"params file lacks {missing}")
        unknown = set(kv) - set(PARAM_KEYS) - {"L"}
        if unknown:
            raise ValueError(f"unknown params keys {sorted(unknown)}")
        L = kv.pop("L", None)
        prec = int(kv.pop("precision", DEFAULT_PREC))
        return cls(precision=prec, L=None if L in (None, "auto") else int(L), **kv)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "KamParams":
        with open(path) as fh:
            return cls.from_text(fh.read())


# -- ledger -------------------------------------------------------------------------------

@dataclass
class LedgerInputs:
    """Everything the Step 4 chain consumes. Missing model constants default to Omega_0."""

    n: int
    gamma: arb
    tau: arb
    rho: arb
    delta: arb
    sigma: arb
    d_B: arb
    a1: arb
    a3: arb
    c_R: arb
    b_E: arb
    b_DK: arb
    b_DKT: arb
    b_B: arb
    b_T: arb
    c_N0: arb
    c_N0T: arb
    c_N0TOmegaN0: arb
    c_DF: arb
    c_D2F: arb
    b_A: arb = field(default_factory=lambda: arb(0))
    b_N: arb = field(default_factory=lambda: arb(0))
    b_NT: arb = field(default_factory=lambda: arb(0))
    t_B: arb = field(default_factory=lambda: arb(0))
    t_T: arb = field(default_factory=lambda: arb(0))
    c_Omega: arb = field(default_factory=lambda: arb(1))
    c_DOmega: arb = field(default_factory=lambda: arb(0))
    c_Da: arb = field(default_factory=lambda: arb(1))
    c_D2a: arb = field(default_factory=lambda: arb(0))


@dataclass
class ConstantLedger:
    b_E: arb
    b_DK: arb
    b_DKT: arb
    b_B: arb
    b_A: arb
    b_N: arb
    b_NT: arb
    b_T: arb
    t_B: arb
    t_T: arb
    sigma_DK: arb
    sigma_DKT: arb
    sigma_B: arb
    sigma_T: arb
    c_A: arb
    c_N: arb
    c_NT: arb
    c_P: arb
    c_T: arb
    beta1: arb
    beta2: arb
    beta3: arb
    beta4: arb
    beta5: arb
    sigma_star: arb
    C1: arb
    C2: arb
    C3: arb
    C4: arb
    C5: arb
    C6: arb
    C7: arb
    C8: arb
    C9: arb
    C10: arb
    C2_hat: arb
    C15: arb
    C5_hat: arb
    lagrangian: arb
    frak_c1: arb
    frak_c2: arb
    frak_c3: arb
    frak_c4: arb
    frak_c5: arb
    lhs: arb
    closeness: arb

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


def _arb(v) -> arb:
    if isinstance(v, arb):
        return v
    if isinstance(v, Fraction):
        return arb(v.numerator) / v.denominator
    return arb(v)


def step4_ledger(inp: LedgerInputs) -> ConstantLedger:
    """The full constant chain; every entry is a ball, its upper end is the bound."""
    g = {f.name: (_arb(getattr(inp, f.name)) if f.name != "n" else inp.n) for f in fields(inp)}
    n = inp.n
    gam, tau, rho, dlt = g["gamma"], g["tau"], g["rho"], g["delta"]
    sig = g["sigma"]
    cO, cDO, cDa, cD2a = g["c_Omega"], g["c_DOmega"], g["c_Da"], g["c_D2a"]
    cDF, cD2F, cR = g["c_DF"], g["c_D2F"], g["c_R"]
    cN0, cN0T, csym = g["c_N0"], g["c_N0T"], g["c_N0TOmegaN0"]
    a1, a3 = g["a1"], g["a3"]
    mx = lambda *v: max_upper(v)

    s_DK, s_DKT = g["b_DK"] * sig, g["b_DKT"] * sig
    s_B, s_T = g["b_B"] * sig, g["b_T"] * sig
    zero = arb(0)
    lagrangian_plane = n == 1  # every curve in the plane is Lagrangian
    if lagrangian_plane:
        csym = zero
    c_A = zero if lagrangian_plane else n * csym * s_B ** 2 / 2
    c_N = s_DK * c_A + cN0 * s_B
    c_NT = c_A * s_DKT + n * s_B * cN0T

    beta1 = 2 * s_B ** 2 * cN0 * (s_DKT * cDO * dlt + 2 * n * cO)
    beta2 = zero if lagrangian_plane else n * s_B ** 2 * cDO * dlt / 2 + (n + 1) * csym * beta1 / 2
    beta3 = s_DK * beta2 + n * c_A + cN0 * beta1
    beta4 = s_DKT * beta2 + 2 * n * c_A + n * cN0T * beta1
    beta5 = 2 * s_T ** 2 * (c_NT * c_N * (cO * cD2F + cDO * cDF) * dlt
                            + cO * cDF * (c_NT * beta3 + c_N * beta4))
    sigma_star = mx(n / g["b_DK"], 2 * n / g["b_DKT"], beta1 / g["b_B"], beta5 / g["b_T"])

    gdt = gam * dlt ** tau
    c_P = s_DK + c_N
    c_T = c_NT * cO * cDF * c_N
    C1 = zero if lagrangian_plane else (s_DKT * s_DK * cDO * dlt + n * s_DKT * cO + 2 * n * cO * cDF * s_DK)
    C2 = cR * C1
    C3 = (1 + c_A) * mx(1, c_A) * C2
    C4 = n * c_NT * cO * gdt + c_A * C2
    C5 = C2 + n * s_DKT * cO * gdt
    C6 = c_A * C2 + s_DKT * cDO * cDF * c_N * gdt * dlt + 2 * n * cO * cDF * c_N * gdt
    C7 = mx(C4, C5 + C6)
    C8 = 2 * cR * s_DKT * cO
    C9 = C8 + s_T * (c_NT * cO * gdt + c_T * C8)
    C10 = cR * (c_NT * cO * gdt + c_T * C9)
    C2h = s_DK * C10 + c_N * C9 * gdt
    g3 = gam ** 3 * dlt ** (3 * tau)
    C15 = (C3 + C7) * mx(C9 * gdt, C10) + 2 * n * cDa * g3 + cD2a * g3 * dlt / 2
    C5h = 2 * c_P * C15 * gam * dlt ** (tau - 1) + cD2F * C2h ** 2 / 2

    q1 = 1 - a1 ** (1 - 2 * tau)
    q0 = 1 - a1 ** (-2 * tau)
    k3 = (a1 * a3) ** (4 * tau) * C5h
    k4 = sigma_star * a3 ** (2 * tau + 1) * gam ** 2 * rho ** (2 * tau - 1) * C2h / ((sig - 1) * q1)
    k5 = a3 ** (2 * tau) * gam ** 2 * rho ** (2 * tau) * C2h / (g["d_B"] * q0)
    lag = 2 * a3 ** (tau + 1) * gam ** 3 * rho ** (3 * tau - 1) * C3
    k1 = mx(lag, k3, k4, k5)
    k2 = a3 ** (2 * tau) * C2h / q1
    lhs = k1 * g["b_E"] / (gam ** 4 * rho ** (4 * tau))
    close = k2 * g["b_E"] / (gam ** 2 * rho ** (2 * tau))
    return ConstantLedger(
        g["b_E"], g["b_DK"], g["b_DKT"], g["b_B"], g["b_A"], g["b_N"], g["b_NT"], g["b_T"], g["t_B"], g["t_T"],
        s_DK, s_DKT, s_B, s_T, c_A, c_N, c_NT, c_P, c_T,
        beta1, beta2, beta3, beta4, beta5, sigma_star,
        C1, C2, C3, C4, C5, C6, C7, C8, C9, C10, C2h, C15, C5h,
        lag, k1, k2, k3, k4, k5, lhs, close)


# -- Steps 0 to 3 -------------------------------------------------------------------------

@dataclass
class Prepared:
    n: int
    N: tuple
    coeffs: np.ndarray       # band-limited K~_p, acb (2n, *N)
    grid: np.ndarray         # K_p on the grid, arb (2n, *N)
    x: list
    y: list
    norms_rho: list          # ||K_p^i||_{F,rho}
    norms_rho_hat: list      # ||K_p^i||_{F,rho_hat}
    box: DomainBox
    bounds: GlobalBounds
    C_N: arb
    omega: list


def _real(a: np.ndarray) -> np.ndarray:
    return apply(lambda z: z.real if isinstance(z, acb) else z, a)


def step0_prepare(values: np.ndarray, params: KamParams, model: MapModel, omega: Sequence[arb]) -> Prepared:
    """Zero the upper half band, rebuild the sampling, domains and global bounds."""
    values = values if values.dtype == object else to_arb_array(values)
    n = model.n
    if values.shape[0] != 2 * n or values.ndim != n + 1:
        raise ShapeMismatch(f"sampling of shape {values.shape} does not fit n={n}")
    N = tuple(values.shape[1:])
    if len(omega) != n:
        raise ShapeMismatch("frequency and model dimensions differ")
    c = fr.fft_forward(values, n)
    mask = band_mask(N)
    c[:, mask] = acb(0)
    grid = _real(fr.fft_backward(c, n))
    theta = fr.grid_points_arb(N)
    x = [theta[l] + grid[l] for l in range(n)]
    y = [grid[n + l] for l in range(n)]
    rho, rho_hat, d_B = params.value("rho"), params.value("rho_hat"), params.value("d_B")
    nr = list(fr.fourier_norm(c, rho, n))
    nh = list(fr.fourier_norm(c, rho_hat, n))
    box = DomainBox.from_norms(nr[:n], nr[n:], nh[:n], nh[n:], rho, rho_hat, d_B)
    bounds = model.global_bounds(box)
    C_N = fr.error_constant(rho, rho_hat, N).upper()
    return Prepared(n, N, c, grid, x, y, nr, nh, box, bounds, C_N, list(omega))


@dataclass
class ErrorBound:
    b_E: arb
    E_norm: arb          # ||E~||_{F,rho}
    E_norm0: arb         # ||E~||_{F,0}
    correction: arb


def _shift_spread(c: np.ndarray, rad: Sequence[arb], rho, n: int) -> list:
    """Bounds on ||K_p(. + w) - K_p(. + w_mid)||_{F,rho} per component.

    |exp(2 pi i k.D) - 1| <= 2 pi sum_l |k_l| r_l when |D_l| <= r_l.
    """
    N = c.shape[1:]
    f = np.zeros(N, dtype=object)
    f.fill(arb(0))
    for k, r in zip(fr.wavenumbers(N), rad):
        f = f + apply(lambda v: abs(arb(int(v))) * r, np.broadcast_to(k, N))
    f = f * (2 * arb.pi())
    return list(fr.fourier_norm(c * f, rho, n))


def step1_error_bound(prep: Prepared, model: MapModel, params: KamParams) -> ErrorBound:
    """b_E from the sampled error at the midpoint frequency.

    E is evaluated at the exact midpoint w_m of the frequency enclosure; the
    spread over |w - w_m| <= r is added afterwards as r (x rows) plus the
    shift bound of K_p. Putting the radius into every sample instead would
    smear it over all N Fourier modes.
    """
    n, N = prep.n, prep.N
    w = [arb(v.mid()) for v in prep.omega]
    rad = [arb(v.rad()) for v in prep.omega]
    fp = model.fp(prep.x, prep.y)
    sh = fr.shift_factors(w, N, True)
    kps = _real(fr.fft_backward(prep.coeffs * sh, n))
    E = np.empty((2 * n,) + N, dtype=object)
    for l in range(n):
        E[l] = prep.grid[l] + fp[l] - kps[l] - w[l]
        E[n + l] = fp[n + l] - kps[n + l]
    Ec = fr.fft_forward(E, n)
    rho = params.value("rho")
    e_rho, e_0 = fr.fourier_norm(Ec, rho, n), fr.fourier_norm(Ec, 0, n)
    if any(r != 0 for r in rad):
        s_rho, s_0 = _shift_spread(prep.coeffs, rad, rho, n), _shift_spread(prep.coeffs, rad, 0, n)
        for i in range(2 * n):
            extra = rad[i] if i < n else arb(0)
            e_rho[i] = (e_rho[i] + s_rho[i] + extra).upper()
            e_0[i] = (e_0[i] + s_0[i] + extra).upper()
    e_rho, e_0 = fr.max_of(e_rho), fr.max_of(e_0)
    cf = prep.bounds.c_Fp_hat
    absw = max_upper([abs(v) for v in prep.omega])
    nh = prep.norms_rho_hat
    corr = prep.C_N * max_upper([cf + 2 * nh[l] + absw for l in range(n)]
                                + [cf + nh[n + l] for l in range(n)])
    return ErrorBound((e_rho + corr).upper(), e_rho, e_0, corr.upper())


@dataclass
class FrameBounds:
    b_DK: arb
    b_DKT: arb
    b_B: arb
    b_A: arb
    b_N: arb
    b_NT: arb
    t_B: arb
    strategy: str
    c_N0: arb
    c_N0T: arb
    c_hat_N0: arb
    c_N0TOmegaN0: arb
    DK: np.ndarray = field(repr=False)
    N_grid: np.ndarray = field(repr=False)


def _dk_coeffs(c: np.ndarray, n: int) -> np.ndarray:
    N = c.shape[1:]
    out = np.empty((2 * n, n) + N, dtype=object)
    for i in range(2 * n):
        for l in range(n):
            out[i, l] = fr.series_derivative(c[i], l, n)
    zero = (0,) * n
    for l in range(n):
        out[(l, l) + zero] = out[(l, l) + zero] + 1
    return out


def step2_frame_bounds(prep: Prepared, model: MapModel, params: KamParams,
                       strategy: str | None = None) -> FrameBounds:
    n = prep.n
    strategy = strategy or default_strategy(model)
    rho, rho_hat = params.value("rho"), params.value("rho_hat")
    dkc = _dk_coeffs(prep.coeffs, n)
    dktc = transpose(dkc)
    b_dk = fr.matrix_fourier_norm(dkc, rho, n)
    b_dkt = fr.matrix_fourier_norm(dktc, rho, n)
    h_dkt = fr.matrix_fourier_norm(dktc, rho_hat, n)
    frame0 = n0_frame(model, dkc, strategy, rho, rho_hat, prep.C_N)

    dk = _real(fr.fft_backward(dkc, n))
    n0 = n0_grid(strategy, dk, n)
    G = -mat_mul(transpose(dk), omega0_apply(n0))
    try:
        B = grid_inverse(G)
    except PossiblySingular as exc:
        raise PossiblySingular(f"G is possibly singular on the grid: {exc}", step="step2") from None
    Bc = fr.fft_forward(B, n)
    nb = fr.matrix_fourier_norm(Bc, rho, n)
    nb_hat = fr.matrix_fourier_norm(Bc, rho_hat, n)
    c_hat_omega = arb(model.structure["c_hat_Omega"])
    t_B = (prep.C_N * c_hat_omega * frame0.c_hat_N0 * h_dkt * nb_hat).upper()
    if not t_B < 1:
        raise NeumannFailure(f"t_B = {t_B.str(5)} is not < 1", step="step2")
    b_B = (nb + t_B * nb_hat / (1 - t_B)).upper()
    csym = arb(0) if n == 1 else frame0.c_N0TOmegaN0
    b_A = (arb(n) / 2 * csym * b_B ** 2).upper()
    b_N = (b_dk * b_A + frame0.c_N0 * b_B).upper()
    b_NT = (b_A * b_dkt + n * b_B * frame0.c_N0T).upper()

    if n == 1:
        Ngrid = mat_mul(n0, B)
    else:
        S = mat_mul(transpose(n0), omega0_apply(n0))
        A = mat_mul(mat_mul(transpose(B), S), B) * (arb(-1) / 2)
        Ngrid = mat_mul(dk, A) + mat_mul(n0, B)
    return FrameBounds(b_dk, b_dkt, b_B, b_A, b_N, b_NT, t_B, strategy, frame0.c_N0, frame0.c_N0T,
                       frame0.c_hat_N0, csym, dk, Ngrid)


@dataclass
class TorsionBounds:
    b_T: arb
    t_T: arb
    T0: np.ndarray
    T0_inv_norm: arb


def step3_torsion(prep: Prepared, model: MapModel, frame: FrameBounds, params: KamParams) -> TorsionBounds:
    n = prep.n
    sh = fr.shift_factors(prep.omega, prep.N, True)
    Ns = _real(fr.fft_backward(fr.fft_forward(frame.N_grid, n) * sh, n))
    DF = model.df(prep.x, prep.y)
    T = mat_mul(mat_mul(transpose(Ns), omega0_apply(DF)), frame.N_grid)
    ntot = int(np.prod(prep.N))
    T0 = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            acc = arb(0)
            for v in T[i, j].reshape(-1):
                acc = acc + v
            T0[i, j] = acc / ntot
    try:
        inv = iv_mat_inverse(T0)
    except PossiblySingular:
        raise TorsionDegenerate("average torsion is possibly singular", step="step3") from None
    inv_norm = iv_rowsum_norm(inv)
    s0 = fr.alias_coeff_bound((0,) * n, params.value("rho"), prep.N)
    c_omega = arb(model.structure["c_Omega"])
    t_T = (s0 * c_omega * prep.bounds.c_DF * frame.b_N * frame.b_NT).upper()
    q = inv_norm * t_T
    if not q < 1:
        raise TorsionDegenerate(f"|T0^-1| t_T = {q.str(5)} is not < 1", step="step3")
    b_T = (inv_norm / (1 - q)).upper()
    return TorsionBounds(b_T, t_T, T0, inv_norm)


# -- driver ---------------------------------------------------------------------------------

@dataclass
class ValidationReport:
    verdict: str                 # "validated" or "failed"
    reason: str
    failed_step: str | None
    lhs: arb | None
    closeness: arb | None
    rho_inf: arb | None
    cert: DiophantineCert
    pbound: arb | None
    timing: dict
    precision: int
    grid: tuple
    model: str
    params: KamParams
    ledger: ConstantLedger | None = None
    extras: dict = field(default_factory=dict)

    @property
    def validated(self) -> bool:
        return self.verdict == "validated"

    def to_dict(self) -> dict:
        def ep(v):
            return list(endpoints(v)) if isinstance(v, arb) else v

        d = {
            "verdict": self.verdict,
            "reason": self.reason,
            "failed_step": self.failed_step,
            "model": self.model,
            "grid": list(self.grid),
            "precision": self.precision,
            "params": {k: getattr(self.params, k) for k in PARAM_KEYS},
            "lhs": ep(self.lhs),
            "closeness": ep(self.closeness),
            "rho_inf": ep(self.rho_inf),
            "measure_bound": ep(self.pbound),
            "cert": {
                "omega": [list(endpoints(w, 25)) for w in self.cert.omega],
                "gamma": ep(self.cert.gamma),
                "tau": str(self.cert.tau),
                "M": self.cert.M,
                "source": self.cert.source,
            },
            "ledger": {k: ep(v) for k, v in self.ledger.items()} if self.ledger else None,
            "extras": {k: ep(v) for k, v in self.extras.items()},
            "timing": {k: round(v, 3) for k, v in self.timing.items()},
        }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        d = self.to_dict()
        out = [f"verdict      {self.verdict}" + (f" ({self.reason})" if self.reason else "")]
        if self.failed_step:
            out.append(f"failed step  {self.failed_step}")
        out.append(f"model        {self.model}")
        out.append(f"grid         {' x '.join(str(m) for m in self.grid)}, {self.precision} bits")
        out.append(f"gamma, tau   {d['cert']['gamma']}, {d['cert']['tau']} (M={self.cert.M}, {self.cert.source})")
        out.append("params       " + ", ".join(f"{k}={v}" for k, v in d["params"].items()))
        for key in ("lhs", "closeness", "rho_inf", "measure_bound"):
            if d[key] is not None:
                out.append(f"{key:<12} [{d[key][0]}, {d[key][1]}]")
        if d["extras"]:
            out.append("")
            for k, v in d["extras"].items():
                out.append(f"  {k:<14} {_show(v)}")
        if d["ledger"]:
            out.append("")
            for k, v in d["ledger"].items():
                out.append(f"  {k:<14} [{v[0]}, {v[1]}]")
        out.append("")
        out.append("timing (s)   " + ", ".join(f"{k} {v}" for k, v in d["timing"].items()))
        return "\n".join(out) + "\n"


def _show(v):
    return f"[{v[0]}, {v[1]}]" if isinstance(v, list) else str(v)


def measure_pbound(cert: DiophantineCert, frak_c1: arb, b_E: arb, rho: arb) -> arb | None:
    """1 - C (c1 b_E)^(1/4) / ((tau - n) M^(tau - n) rho^tau), only for tau > n."""
    n = cert.n
    tau = _arb(cert.tau)
    if not cert.tau > n:
        return None
    return 1 - cert.C * (frak_c1 * b_E).root(4) / ((tau - n) * arb(cert.M) ** (tau - n) * rho ** tau)


def validate_sampling(values: np.ndarray, model: MapModel, cert: DiophantineCert, params: KamParams,
                      strategy: str | None = None) -> ValidationReport:
    """Steps 0 to 4 on a sampling (2n, *N) already at the working precision."""
    timing: dict = {}
    N = tuple(values.shape[1:])
    report = ValidationReport("failed", "", None, None, None, None, cert, None, timing,
                              params.precision, N, model.describe(), params)
    step = "step0"
    t0 = time.perf_counter()
    try:
        params.check()
        if cert.n != model.n:
            raise ShapeMismatch("certificate and model dimensions differ")
        prep = step0_prepare(values, params, model, cert.omega)
        timing["step0"] = time.perf_counter() - t0
        step = "step1"
        t = time.perf_counter()
        err = step1_error_bound(prep, model, params)
        timing["step1"] = time.perf_counter() - t
        step = "step2"
        t = time.perf_counter()
        frame = step2_frame_bounds(prep, model, params, strategy)
        timing["step2"] = time.perf_counter() - t
        step = "step3"
        t = time.perf_counter()
        tors = step3_torsion(prep, model, frame, params)
        timing["step3"] = time.perf_counter() - t
        step = "step4"
        t = time.perf_counter()
        tau = _arb(cert.tau)
        delta = params.value("delta")
        c_R, L = russmann_cR(cert.omega, cert.gamma, cert.tau, delta, L=params.L)
        st = model.structure
        inp = LedgerInputs(
            n=model.n, gamma=cert.gamma, tau=tau, rho=params.value("rho"), delta=delta,
            sigma=params.value("sigma"), d_B=params.value("d_B"), a1=params.a1(), a3=params.a3(), c_R=c_R,
            b_E=err.b_E, b_DK=frame.b_DK, b_DKT=frame.b_DKT, b_B=frame.b_B, b_T=tors.b_T,
            c_N0=frame.c_N0, c_N0T=frame.c_N0T, c_N0TOmegaN0=frame.c_N0TOmegaN0,
            c_DF=prep.bounds.c_DF, c_D2F=prep.bounds.c_D2F, b_A=frame.b_A, b_N=frame.b_N, b_NT=frame.b_NT,
            t_B=frame.t_B, t_T=tors.t_T, c_Omega=arb(st["c_Omega"]), c_DOmega=arb(st["c_DOmega"]),
            c_Da=arb(st["c_Da"]), c_D2a=arb(st["c_D2a"]))
        ledger = step4_ledger(inp)
        timing["step4"] = time.perf_counter() - t
    except KamError as exc:
        timing["total"] = time.perf_counter() - t0
        report.reason = f"{type(exc).__name__}: {exc}"
        report.failed_step = exc.step or step
        return report
    timing["total"] = time.perf_counter() - t0
    report.ledger = ledger
    report.lhs = ledger.lhs
    report.closeness = ledger.closeness
    report.rho_inf = params.rho_inf()
    if cert.source == "tau_min":
        report.pbound = measure_pbound(cert, ledger.frak_c1, ledger.b_E, params.value("rho"))
    report.extras = {
        "E_norm_F0": err.E_norm0, "E_norm_F_rho": err.E_norm, "C_N": prep.C_N, "c_R": c_R, "L": L,
        "c_DF": prep.bounds.c_DF, "c_D2F": prep.bounds.c_D2F, "c_Fp_hat": prep.bounds.c_Fp_hat,
        "T0_inv_norm": tors.T0_inv_norm, "N0": frame.strategy, "a1": params.a1(), "a3": params.a3(),
    }
    if ledger.lhs.upper() < 1:
        report.verdict = "validated"
    else:
        report.failed_step = "final"
        report.reason = "KAM condition lhs < 1 does not hold"
    return report


def validate(torus_path, model: MapModel, cert: DiophantineCert, params: KamParams,
             strategy: str | None = None) -> ValidationReport:
    """Read a torus sampling file and run the whole pipeline at params.precision."""
    with working_precision(params.precision):
        s = read_torus(torus_path)
        if s.n != model.n:
            raise ShapeMismatch(f"torus has n={s.n}, model {model.name} has n={model.n}")
        t = time.perf_counter()
        rep = validate_sampling(s.values, model, cert, params, strategy)
        rep.timing["read+total"] = time.perf_counter() - t
        return rep
