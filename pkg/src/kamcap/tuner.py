"""Heuristic choice of the validation widths (rho, delta, sigma, d_B, rho_hat).

Everything here is non-rigorous: norms are doubles and the ledger chain is
evaluated with low precision balls. The validator re-derives every bound, so
a poor choice can only make validation fail, never make it unsound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from flint import arb

from . import fourier as fr
from .diophantine import DiophantineCert, russmann_cR
from .errors import DegenerateTorsion, InvalidError, NoFixedPoint, TorusTooRough
from .interval import DEFAULT_PREC, working_precision
from .models import DomainBox, MapModel, default_strategy, omega0_apply
from .interval import mat_mul, transpose
from .solver import Parameterization, band_limit, frame_and_torsion, invariance_error, _dk_coeffs
from .validator import KamParams, LedgerInputs, step4_ledger

log = logging.getLogger(__name__)

RHO_FACTOR = 0.85
N_DELTA = 9
N_RHO_HAT = 16
RHO_HAT_RANGE = (1.5, 200.0)
TUNE_PREC = 64


def initial_rho(E_norm_F0: float, N) -> float:
    """rho_0 = -log ||E||_{F,0} / (2 pi max N_i)."""
    if not E_norm_F0 < 1:
        raise InvalidError(f"||E||_F0 = {E_norm_F0:.3e} is not < 1")
    E_norm_F0 = max(float(E_norm_F0), 1e-300)
    Nmax = max(N) if hasattr(N, "__iter__") else int(N)
    return -math.log(E_norm_F0) / (2 * math.pi * Nmax)


# -- float data of one torus ------------------------------------------------------------

def _complex(a: np.ndarray) -> np.ndarray:
    if a.dtype != object:
        return a
    return np.array([complex(z.mid()) for z in a.reshape(-1)]).reshape(a.shape)


def _log_abs(c: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(c))


class TorusData:
    """Float Fourier data of a candidate torus (band-limited like Step 0)."""

    def __init__(self, K: Parameterization, model: MapModel, strategy: str | None = None):
        self.model = model
        self.n = n = K.n
        self.N = K.N
        self.strategy = strategy or default_strategy(model)
        if K.hp:
            Kh = Parameterization(n, band_limit(K.coeffs, n), K.omega, K.digits)
            E, e0 = invariance_error(Kh, model)
            Ec = _complex(E.coeffs)
            Kf = Kh.to_float()
            # frame data at full precision: float noise in B~ would dominate its rho_hat norm
            f = frame_and_torsion(Kh, model.as_point(), self.strategy)
        else:
            Kf = Parameterization(n, band_limit(K.coeffs, n), K.omega, K.digits)
            E, e0 = invariance_error(Kf, model)
            Ec = E.coeffs
            f = frame_and_torsion(Kf, model, self.strategy)
        self.E_norm0 = float(e0)
        self.omega = [float(w.mid()) if isinstance(w, arb) else float(w) for w in K.omega]
        self.absk = fr.abs_k1(self.N).astype(float).reshape(-1)
        ntot = int(np.prod(self.N))
        flat = lambda a: _log_abs(a).reshape(a.shape[: a.ndim - n] + (ntot,))
        self.lK = flat(Kf.coeffs)
        self.lE = flat(Ec)
        dk = _dk_coeffs(Kf)
        self.lDK = flat(dk)
        self.lDKT = flat(np.swapaxes(dk, 0, 1))
        axes = tuple(range(2, 2 + n))
        B = _complex(f.B).real
        self.lB = flat(np.fft.fftn(B, axes=axes) / ntot if not K.hp else _complex(fr.fft_forward(f.B, n)))
        t0 = _complex(f.T_avg).real
        if abs(np.linalg.det(t0)) < 1e-14:
            raise DegenerateTorsion("average torsion is numerically singular", step="tune")
        self.T0_inv = float(np.max(np.sum(np.abs(np.linalg.inv(t0)), axis=1)))
        self.lsym = None
        if self.strategy == "omega0_dk" and n > 1:
            prod = mat_mul(transpose(f.DK), omega0_apply(f.DK))
            sym = fr.fft_forward(prod, n) if K.hp else np.fft.fftn(prod, axes=axes) / ntot
            self.lsym = flat(_complex(sym))
        self._cache: dict = {}

    def norms(self, la: np.ndarray, rho: float) -> np.ndarray:
        """||.||_{F,rho} per leading index, computed in the log domain (inf on overflow)."""
        v = np.logaddexp.reduce(la + 2 * math.pi * rho * self.absk, axis=-1)
        with np.errstate(over="ignore"):
            return np.exp(v)

    def mnorm(self, la: np.ndarray, rho: float) -> float:
        return float(np.max(np.sum(self.norms(la, rho), axis=1)))

    def at(self, rho: float, rho_hat: float) -> dict:
        key = (rho, rho_hat)
        if key in self._cache:
            return self._cache[key]
        n = self.n
        kr, kh = self.norms(self.lK, rho), self.norms(self.lK, rho_hat)
        d = {
            "K_rho": kr, "K_hat": kh, "E_rho": float(np.max(self.norms(self.lE, rho))),
            "b_DK": self.mnorm(self.lDK, rho), "b_DKT": self.mnorm(self.lDKT, rho),
            "h_DK": self.mnorm(self.lDK, rho_hat), "h_DKT": self.mnorm(self.lDKT, rho_hat),
            "B_rho": self.mnorm(self.lB, rho), "B_hat": self.mnorm(self.lB, rho_hat),
        }
        if self.strategy == "omega0_dk":
            d["c_N0"], d["c_N0T"], d["ch_N0"] = d["b_DK"], d["b_DKT"], d["h_DK"]
            d["sym"] = self.mnorm(self.lsym, rho) if self.lsym is not None else 0.0
        else:
            d["c_N0"] = d["c_N0T"] = d["ch_N0"] = 1.0
            d["sym"] = 0.0
        self._cache = {key: d}
        return d


# -- the (sigma, d_B) system ------------------------------------------------------------

@dataclass
class Candidate:
    rho: float
    delta: float
    sigma_minus_1: float
    d_B: float
    rho_hat: float
    objective: float
    lhs: float = math.nan
    history: list = field(default_factory=list)


def _f(x: arb) -> float:
    return float(x.mid())


def _ledger(data: TorusData, cert: DiophantineCert, rho, delta, s1, d_B, rho_hat, c_R, a2, with_CN: bool):
    """Float-fed ledger. Without C_N the terms t_B and the b_E correction vanish (t_T depends on rho only)."""
    n = data.n
    d = data.at(rho, rho_hat)
    vals = [d["K_rho"], d["K_hat"], d["E_rho"], d["b_DK"], d["B_rho"], d["B_hat"]]
    if not all(np.all(np.isfinite(v)) for v in vals):
        return None, math.inf
    r, rh, dB = arb(rho), arb(rho_hat), arb(d_B)
    kr = [arb(float(v)) for v in d["K_rho"]]
    kh = [arb(float(v)) for v in d["K_hat"]]
    box = DomainBox.from_norms(kr[:n], kr[n:], kh[:n], kh[n:], r, rh, dB)
    gb = data.model.global_bounds(box)
    CN = fr.error_constant(r, rh, data.N) if with_CN else arb(0)
    s0 = fr.alias_coeff_bound((0,) * n, r, data.N)
    t_B = CN * data.model.structure["c_hat_Omega"] * arb(d["ch_N0"]) * arb(d["h_DKT"]) * arb(d["B_hat"])
    if not t_B < 1:
        return None, math.inf
    b_B = arb(d["B_rho"]) + t_B * arb(d["B_hat"]) / (1 - t_B)
    sym = arb(0) if n == 1 else arb(d["sym"]) + CN * arb(d["h_DKT"]) * arb(d["h_DK"])
    b_A = arb(n) / 2 * sym * b_B ** 2
    b_N = arb(d["b_DK"]) * b_A + arb(d["c_N0"]) * b_B
    b_NT = b_A * arb(d["b_DKT"]) + n * b_B * arb(d["c_N0T"])
    t_T = s0 * gb.c_DF * b_N * b_NT
    q = data.T0_inv * t_T
    if not q < 1:
        return None, math.inf
    b_T = arb(data.T0_inv) / (1 - q)
    cf = gb.c_Fp_hat
    absw = max(abs(w) for w in data.omega)
    corr = CN * max(max(_f(cf) + 2 * float(d["K_hat"][l]) + absw for l in range(n)),
                    max(_f(cf) + float(d["K_hat"][n + l]) for l in range(n)))
    spread = max(_f(v.rad()) for v in cert.omega) * (1 + float(d["b_DK"]))
    b_E = arb(d["E_rho"]) + corr + spread
    a3 = r / arb(delta)
    a1 = a3 / (a3 - 3) if math.isinf(a2) else a3 / (a3 - 3 * arb(a2) / (arb(a2) - 1))
    st = data.model.structure
    inp = LedgerInputs(
        n=n, gamma=cert.gamma, tau=cert.tau_arb(), rho=r, delta=arb(delta), sigma=1 + arb(s1), d_B=dB,
        a1=a1, a3=a3, c_R=c_R, b_E=b_E, b_DK=arb(d["b_DK"]), b_DKT=arb(d["b_DKT"]), b_B=b_B, b_T=b_T,
        c_N0=arb(d["c_N0"]), c_N0T=arb(d["c_N0T"]), c_N0TOmegaN0=sym, c_DF=gb.c_DF, c_D2F=gb.c_D2F,
        b_A=b_A, b_N=b_N, b_NT=b_NT, t_B=t_B, t_T=t_T, c_Omega=arb(st["c_Omega"]),
        c_DOmega=arb(st["c_DOmega"]), c_Da=arb(st["c_Da"]), c_D2a=arb(st["c_D2a"]))
    L = step4_ledger(inp)
    return L, _f(b_E)


def _system(L, rho, delta, tau, gamma, a1, a3):
    """Right-hand sides of the two balance conditions: (sigma - 1, d_B)."""
    sstar, C2h, C5h = _f(L.sigma_star), _f(L.C2_hat), _f(L.C5_hat)
    q1 = 1 - a1 ** (1 - 2 * tau)
    q0 = 1 - a1 ** (-2 * tau)
    if C5h <= 0:
        return 0.0, 0.0
    s1 = sstar * a3 ** (2 * tau + 1) * gamma ** 2 * rho ** (2 * tau - 1) * C2h / (q1 * (a1 * a3) ** (4 * tau) * C5h)
    dB = s1 * delta * q1 / (sstar * q0)
    return s1, dB


def solve_sigma_dB(data: TorusData, cert: DiophantineCert, rho: float, delta: float, rho_hat: float,
                   c_R=None, a2: float = math.inf, with_CN: bool = False, max_iter: int = 200,
                   rel: float = 1e-6):
    """Damped fixed point for the balance conditions; returns (sigma - 1, d_B, ledger, b_E)."""
    tau, gamma = float(cert.tau), _f(cert.gamma)
    a3 = rho / delta
    a1 = a3 / (a3 - 3) if math.isinf(a2) else a3 / (a3 - 3 * a2 / (a2 - 1))
    if c_R is None:
        c_R, _ = russmann_cR(cert.omega, cert.gamma, cert.tau, arb(delta), L=None)
    s1 = 1e-6
    _, dB = 0.0, 1e-6 * delta
    L, bE = _ledger(data, cert, rho, delta, s1, dB, rho_hat, c_R, a2, with_CN)
    if L is None:
        raise NoFixedPoint("bounds are not finite at this rho", step="tune")
    s1n, dBn = _system(L, rho, delta, tau, gamma, a1, a3)
    dB = dBn if dBn > 0 else dB
    for _ in range(max_iter):
        L, bE = _ledger(data, cert, rho, delta, s1, dB, rho_hat, c_R, a2, with_CN)
        if L is None:
            raise NoFixedPoint("bounds are not finite at this rho", step="tune")
        s1n, dBn = _system(L, rho, delta, tau, gamma, a1, a3)
        if not (s1n > 0 and dBn > 0 and math.isfinite(s1n) and math.isfinite(dBn)):
            raise NoFixedPoint("balance conditions have no positive solution", step="tune")
        ns1 = 0.5 * (s1 + s1n)
        ndB = 0.5 * (dB + dBn)
        done = abs(ns1 - s1) <= rel * ns1 and abs(ndB - dB) <= rel * ndB
        s1, dB = ns1, ndB
        if done:
            L, bE = _ledger(data, cert, rho, delta, s1, dB, rho_hat, c_R, a2, with_CN)
            return s1, dB, L, bE
    raise NoFixedPoint(f"no fixed point after {max_iter} iterations", step="tune")


def _objective(L) -> float:
    """c1 without the Lagrangian term, times b_E / (gamma^4 rho^4tau)."""
    c1 = max(_f(L.frak_c3), _f(L.frak_c4), _f(L.frak_c5))
    return c1 * _f(L.lhs) / _f(L.frak_c1) if _f(L.frak_c1) > 0 else 0.0


def _best_delta(data, cert, rho, rho_hat, a2, with_CN) -> Candidate | None:
    best = None
    for delta in np.linspace(rho / 6.5, rho / 4.5, N_DELTA):
        delta = float(delta)
        try:
            s1, dB, L, bE = solve_sigma_dB(data, cert, rho, delta, rho_hat, a2=a2, with_CN=with_CN)
        except NoFixedPoint as exc:
            log.debug("rho=%.4e delta=%.4e: %s", rho, delta, exc)
            continue
        obj = _objective(L)
        if best is None or obj < best.objective:
            best = Candidate(rho, delta, s1, dB, rho_hat, obj, _f(L.lhs))
    return best


def tune(K: Parameterization, model: MapModel, cert: DiophantineCert, a2: str = "1000",
         precision: int = DEFAULT_PREC, strategy: str | None = None, max_rho_steps: int = 200) -> KamParams:
    """Search rho (geometric decrease to a local minimum), delta, then rho_hat."""
    with working_precision(max(precision, 128) if K.hp else TUNE_PREC):
        data = TorusData(K, model, strategy)
    with working_precision(TUNE_PREC):
        rho = initial_rho(data.E_norm0, data.N)
        trail = []
        best = None
        for _ in range(max_rho_steps):
            cand = _best_delta(data, cert, rho, 2 * rho, math.inf, False)
            if cand is not None:
                trail.append(cand)
                log.info("rho=%.4e delta=%.4e objective=%.3e", rho, cand.delta, cand.objective)
                if best is not None and cand.objective >= best.objective:
                    break
                best = cand
            elif best is not None:
                break
            rho *= RHO_FACTOR
        if best is None:
            raise TorusTooRough("no admissible (rho, delta) found", step="tune")
        if not best.objective < 1:
            raise TorusTooRough(f"best objective {best.objective:.3e} is not < 1; "
                                "a better approximation of the torus is needed", step="tune")
        # rho_hat scan with the aliasing terms back in
        lo_f, hi_f = RHO_HAT_RANGE
        a2f = math.inf if a2.lower() in ("inf", "infinity") else float(a2)
        final = None
        c_R, _ = russmann_cR(cert.omega, cert.gamma, cert.tau, arb(best.delta), L=None)
        for i in range(1, N_RHO_HAT + 1):
            rh = best.rho * lo_f * (hi_f / lo_f) ** (i / N_RHO_HAT)
            try:
                s1, dB, L, bE = solve_sigma_dB(data, cert, best.rho, best.delta, rh, c_R=c_R, a2=a2f,
                                               with_CN=True)
            except NoFixedPoint:
                continue
            lhs = _f(L.lhs)
            if math.isfinite(lhs) and (final is None or lhs < final.lhs):
                final = Candidate(best.rho, best.delta, s1, dB, rh, _objective(L), lhs)
        if final is None or not final.lhs < 1:
            raise TorusTooRough("no rho_hat makes the KAM condition hold", step="tune")
        sigma = (1 + arb(repr(final.sigma_minus_1))).str(30, radius=False)
    return KamParams(rho=_round(final.rho), delta=_round(final.delta), sigma=sigma, d_B=_round(final.d_B),
                     rho_hat=_round(final.rho_hat), a2=a2, precision=precision)


def _round(x: float) -> str:
    return f"{x:.6e}"
