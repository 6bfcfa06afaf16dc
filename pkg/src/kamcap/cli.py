"""Command-line front end: solve, tune, validate, plus Diophantine/Russmann tables.

A run is described by a flat ``key = value`` config file; ``--set key=value``
overrides single entries. Numbers stay decimal strings until they reach the
interval layer.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from flint import arb, ctx

from . import fourier as fr
from .diophantine import (certify, cubic_golden, interval_with_radius, omega_quadratic, omega_sqrt_frac,
                          russmann_cR, tight_interval)
from .errors import KamError
from .interval import DEFAULT_PREC, endpoints, iv, working_precision
from .models import MODELS, make_model
from .solver import (Parameterization, read_torus, sampling_to_parameterization, seed_on_line, solve_torus,
                     write_torus)
from .tuner import tune
from .validator import KamParams, validate

ENV_PREC = "KAMCAP_PRECISION"

CONFIG_KEYS = (
    "map", "eps", "lambda1", "lambda2", "omega", "omega_radius", "N", "max_grid", "tol", "precision",
    "strategy", "branch", "seed_point", "seed_bracket", "torus", "params", "report", "tau", "gamma", "M",
    "a2",
)

log = logging.getLogger("kamcap")


class UsageError(Exception):
    pass


def default_precision() -> int:
    v = os.environ.get(ENV_PREC)
    if v is None:
        return DEFAULT_PREC
    try:
        return int(v)
    except ValueError:
        raise UsageError(f"{ENV_PREC} must be an integer, got {v!r}") from None


# -- config ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Ordered key/value pairs. Canonical text is one ``key = value`` per line."""

    items: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        items = {}
        for no, ln in enumerate(text.splitlines(), 1):
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            if "=" not in ln:
                raise UsageError(f"config line {no}: expected key = value")
            k, v = (s.strip() for s in ln.split("=", 1))
            if k not in CONFIG_KEYS:
                raise UsageError(f"config line {no}: unknown key {k!r}")
            items[k] = v
        return cls(items)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.parse(fh.read())

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items.items())

    def override(self, pairs) -> "RunConfig":
        items = dict(self.items)
        for p in pairs or ():
            if "=" not in p:
                raise UsageError(f"--set expects key=value, got {p!r}")
            k, v = (s.strip() for s in p.split("=", 1))
            if k not in CONFIG_KEYS:
                raise UsageError(f"unknown config key {k!r}")
            items[k] = v
        return RunConfig(items)

    def get(self, key, default=None):
        return self.items.get(key, default)

    def need(self, key) -> str:
        if key not in self.items:
            raise UsageError(f"config lacks {key!r}")
        return self.items[key]

    @property
    def precision(self) -> int:
        return int(self.items.get("precision", default_precision()))

    def grid(self, key="N") -> tuple[int, ...]:
        return tuple(int(v) for v in self.need(key).lower().replace("x", " ").split())

    def model(self):
        name = self.need("map")
        if name not in MODELS:
            raise UsageError(f"unknown map {name!r}; choose from {sorted(MODELS)}")
        params = {k: self.items[k] for k in MODELS[name].param_names if k in self.items}
        try:
            return make_model(name, **params)
        except ValueError as exc:
            raise UsageError(str(exc)) from None


# -- frequencies ----------------------------------------------------------------------

def _term(t: str) -> arb:
    t = t.strip()
    div = None
    if "/" in t:
        t, d = t.split("/", 1)
        div = iv(d.strip())
        t = t.strip()
    parts = t.split()
    if not parts:
        raise UsageError("empty frequency term")
    head = parts[0].lower()
    try:
        if head == "golden" and len(parts) == 1:
            w = omega_quadratic(1, 1)
        elif head == "quadratic" and len(parts) == 3:
            w = omega_quadratic(int(parts[1]), int(parts[2]))
        elif head == "sqrt" and len(parts) == 2:
            w = omega_sqrt_frac(int(parts[1]))
        elif head == "nu" and len(parts) == 1:
            w = cubic_golden()
        elif head == "nu2" and len(parts) == 1:
            w = cubic_golden() ** 2
        elif len(parts) == 3 and parts[1] in ("+-", "±"):
            w = interval_with_radius(iv(parts[0]), iv(parts[2]))
        elif len(parts) == 1:
            w = iv(parts[0])
        else:
            raise UsageError(f"cannot read frequency term {t!r}")
    except ValueError as exc:
        raise UsageError(f"bad frequency term {t!r}: {exc}") from None
    return w / div if div is not None else w


def parse_omega(spec: str, radius: str | None = None) -> list[arb]:
    """Frequency vector from a spec; call inside the working precision.

    Components are comma separated. Terms: ``golden``, ``quadratic a b``,
    ``sqrt p``, ``nu`` / ``nu2`` (cubic golden number and its square), a
    decimal, or ``decimal +- radius``; any term may end in ``/ d``. The
    whole spec ``cubic`` means ``nu, nu2``. With ``radius`` every component
    is widened to that radius around its enclosure.
    """
    spec = spec.strip()
    if spec.lower() == "cubic":
        spec = "nu, nu2"
    ws = [_term(t) for t in spec.split(",")]
    if radius is not None:
        if radius.strip().lower() == "tight":
            ws = [tight_interval(w) for w in ws]
        else:
            ws = [interval_with_radius(w, iv(radius)) for w in ws]
    return ws


def _cert(cfg: RunConfig, omega):
    tau = cfg.get("tau")
    if tau is None:
        raise UsageError("config lacks 'tau' (a number or 'min'); a Diophantine certificate is required")
    M = int(cfg.get("M", "1000"))
    gamma = cfg.get("gamma")
    return certify(omega, M=M, tau=None if tau == "min" else Fraction(tau), gamma=gamma)


# -- commands ------------------------------------------------------------------------

def cmd_solve(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model = cfg.model()
    prec = cfg.precision
    N = cfg.grid()
    if len(N) != model.n:
        raise UsageError(f"grid {N} does not match n={model.n}")
    tol = float(cfg.get("tol", "1e-33"))
    max_grid = cfg.grid("max_grid") if "max_grid" in cfg.items else None
    with working_precision(max(prec, 128)):
        omega = parse_omega(cfg.need("omega"))
        mids = [w.mid() for w in omega]
    seed = None
    if "seed_point" in cfg.items:
        z0 = [float(v) for v in cfg.need("seed_point").split()]
        br = [float(v) for v in cfg.need("seed_bracket").split()]
        seed = seed_on_line(model, float(mids[0]), z0, (br[0], br[1]), N)
    t = time.perf_counter()
    K = solve_torus(model, mids, N, tol=tol, seed=seed, max_grid=max_grid, prec=max(prec, 128),
                    strategy=cfg.get("strategy"), branch=int(cfg.get("branch", "1")))
    path = cfg.need("torus")
    write_torus(path, K)
    err = K.history[-1] if K.history else float("nan")
    print(f"grid {'x'.join(map(str, K.N))}  ||E||_F0 = {err:.3e}  ({time.perf_counter() - t:.1f} s) -> {path}",
          file=out)
    return 0


def _load_K(cfg: RunConfig, prec: int, omega_mid) -> Parameterization:
    s = read_torus(cfg.need("torus"))
    return sampling_to_parameterization(s, omega_mid)


def cmd_tune(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model = cfg.model()
    prec = cfg.precision
    with working_precision(prec):
        omega = parse_omega(cfg.need("omega"), cfg.get("omega_radius"))
        cert = _cert(cfg, omega)
        K = _load_K(cfg, prec, [w.mid() for w in omega])
    p = tune(K, model, cert, a2=cfg.get("a2", "1000"), precision=prec, strategy=cfg.get("strategy"))
    p.save(cfg.need("params"))
    out.write(p.to_text())
    return 0


def cmd_validate(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model = cfg.model()
    params = KamParams.load(cfg.need("params"))
    if "precision" in cfg.items:
        params.precision = cfg.precision
    with working_precision(params.precision):
        omega = parse_omega(cfg.need("omega"), cfg.get("omega_radius"))
        cert = _cert(cfg, omega)
    rep = validate(cfg.need("torus"), model, cert, params, strategy=cfg.get("strategy"))
    text = rep.to_text()
    path = cfg.get("report")
    if path:
        with open(path, "w") as fh:
            fh.write(rep.to_json() if path.endswith(".json") else text)
    out.write(text)
    return 0 if rep.validated else 1


def _pairs(values, label):
    out = []
    for v in values or ():
        try:
            a, b = (int(s) for s in v.split(","))
        except ValueError:
            raise UsageError(f"--{label} expects two integers like 1,1; got {v!r}") from None
        out.append((a, b))
    return out


def _omega_ab(a, b):
    return [tight_interval(omega_quadratic(a, b))]


def _omega_pq(p, q):
    return [tight_interval(omega_sqrt_frac(p)), tight_interval(omega_sqrt_frac(q))]


def _freq_rows(args):
    rows = [(f"{a} {b}", (lambda a=a, b=b: _omega_ab(a, b))) for a, b in _pairs(args.ab, "ab")]
    rows += [(f"{p} {q}", (lambda p=p, q=q: _omega_pq(p, q))) for p, q in _pairs(args.pq, "pq")]
    return rows


def cmd_dioph(args, out=None) -> int:
    out = out or sys.stdout
    rows = _freq_rows(args)
    print(f"{'freq':<8} {'gamma <=':<20} tau >=", file=out)
    with working_precision(args.precision):
        for label, make in rows:
            try:
                c = certify(make(), M=args.M, tau=None if args.tau is None else Fraction(args.tau))
                print(f"{label:<8} {endpoints(c.gamma, 16)[1]:<20} {float(c.tau):.2f}", file=out)
            except KamError as exc:
                print(f"{label:<8} {type(exc).__name__}: {exc}", file=out)
    return 0


def _deltas(s: str | None) -> list[str]:
    return [d.strip() for d in (s or "").split(",") if d.strip()]


def cmd_russmann(args, out=None) -> int:
    out = out or sys.stdout
    deltas = _deltas(args.delta)
    rows = _freq_rows(args)
    print(f"{'freq':<8} {'L=0':<16}" + "".join(f" {'d=' + d:<16}" for d in deltas), file=out)
    with working_precision(args.precision):
        for label, make in rows:
            try:
                c = certify(make(), M=args.M)
                cells = [russmann_cR(c.omega, c.gamma, c.tau, iv(deltas[0] if deltas else "0.1"), L=0)[0]]
                cells += [russmann_cR(c.omega, c.gamma, c.tau, iv(d), L=None)[0] for d in deltas]
                print(f"{label:<8} " + " ".join(f"{endpoints(v, 9)[1]:<16}" for v in cells), file=out)
            except KamError as exc:
                print(f"{label:<8} {type(exc).__name__}: {exc}", file=out)
    return 0


def cmd_plot(args, out=None) -> int:
    """|K_{p,k}| per |k|_1 shell, max over the components of x and of y."""
    out = out or sys.stdout
    with working_precision(args.precision):
        s = read_torus(args.torus)
        c = fr.fft_forward(s.values, s.n)
        mags = np.vectorize(lambda z: float(abs(z).upper()), otypes=[float])(c)
    n = s.n
    shell = fr.abs_k1(s.N)
    print("# |k|_1  max|Kx_k|  max|Ky_k|", file=out)
    for k in range(int(shell.max()) + 1):
        sel = shell == k
        if not sel.any():
            continue
        x = max(float(mags[i][sel].max()) for i in range(n))
        y = max(float(mags[n + i][sel].max()) for i in range(n))
        print(f"{k} {x:.6e} {y:.6e}", file=out)
    return 0


GOLDEN_SWEEP_N = {"0.06": 128, "0.16": 256, "0.26": 256, "0.36": 512, "0.46": 512, "0.56": 512, "0.66": 1024,
            "0.76": 1024, "0.86": 2048, "0.96": 32768}


def cmd_table(args, out=None) -> int:
    out = out or sys.stdout
    which = args.which
    if which in (1, 2):
        ns = argparse.Namespace(ab=args.ab, pq=args.pq, M=args.M, tau=None, precision=args.precision)
        if which == 1 and not args.ab:
            ns.ab = [f"{a},{b}" for a in range(1, 7) for b in range(1, 7)]
        if which == 2 and not args.pq:
            ps = (2, 3, 5, 7, 11, 13)
            ns.pq = [f"{p},{q}" for i, p in enumerate(ps) for q in ps[i + 1:]]
        return cmd_dioph(ns, out)
    if which in (3, 4):
        d = args.delta or ("0.1,0.01,0.001,0.0001,0.00001" if which == 3 else "0.1,0.05,0.01,0.005,0.001")
        ns = argparse.Namespace(ab=args.ab, pq=args.pq, M=args.M, delta=d, precision=args.precision)
        if which == 3 and not args.ab:
            ns.ab = ["1,1"]
        if which == 4 and not args.pq:
            ns.pq = ["2,3"]
        return cmd_russmann(ns, out)
    # kind 5: golden curve of the standard map over eps
    eps_list = _deltas(args.eps) or ["0.06"]
    print(f"{'eps':<6} {'N':>6} {'rho':>13} {'delta':>13} {'sigma-1':>13} {'d_B':>13} {'rho_hat':>13} "
          f"{'lhs':>10} {'closeness':>10}", file=out)
    prec = args.precision
    for eps in eps_list:
        N = GOLDEN_SWEEP_N.get(eps, 256)
        model = make_model("standard", eps=eps)
        with working_precision(prec):
            w = omega_quadratic(1, 1)
            cert = certify([w], M=1000, tau=1, gamma=(3 - arb(5).sqrt()) / 2)
        K = solve_torus(model, [w], (N,), tol=1e-33, prec=prec)
        path = os.path.join(args.workdir, f"golden_{eps}.txt")
        write_torus(path, K)
        p = tune(K, model, cert, precision=prec)
        rep = validate(path, model, cert, p)
        sig = float(p.value("sigma").mid()) - 1
        lhs = endpoints(rep.lhs, 3)[1] if rep.lhs is not None else "-"
        cl = endpoints(rep.closeness, 3)[1] if rep.closeness is not None else "-"
        print(f"{eps:<6} {N:>6} {p.rho:>13} {p.delta:>13} {sig:13.6e} {p.d_B:>13} {p.rho_hat:>13} "
              f"{lhs:>10} {cl:>10}", file=out)
    return 0


# -- argument parsing ------------------------------------------------------------------

def _config_from(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    pairs = list(args.set or [])
    for key in ("torus", "params", "report"):
        v = getattr(args, key, None)
        if v is not None:
            pairs.append(f"{key}={v}")
    return cfg.override(pairs)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kamcap", description="Rigorous KAM validation of invariant tori.")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads for arb kernels")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, helptext in (("solve", "compute a candidate torus and write its sampling"),
                           ("tune", "choose rho, delta, sigma, d_B, rho_hat for a torus"),
                           ("validate", "run the validation; exit 0 iff validated")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", nargs="?", help="key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config entry")
        p.add_argument("--torus")
        if name != "solve":
            p.add_argument("--params")
        if name == "validate":
            p.add_argument("--report")

    def freq_opts(p):
        p.add_argument("--ab", action="append", metavar="A,B", help="omega_{a,b} (1-D)")
        p.add_argument("--pq", action="append", metavar="P,Q", help="(omega_p, omega_q) (2-D)")
        p.add_argument("-M", type=int, default=1000)
        p.add_argument("--precision", type=int, default=None)

    p = sub.add_parser("dioph", help="Diophantine constants (gamma, tau)")
    freq_opts(p)
    p.add_argument("--tau", help="fixed tau instead of the minimal one")
    p = sub.add_parser("russmann", help="bounds on c_R(delta)")
    freq_opts(p)
    p.add_argument("--delta", help="comma separated deltas")
    p = sub.add_parser("plot", help="coefficient decay of a torus as columns")
    p.add_argument("torus")
    p.add_argument("--precision", type=int, default=None)
    p = sub.add_parser("table", help="reference tables: 1/2 Diophantine constants in 1-D/2-D, 3/4 c_R bounds in 1-D/2-D, 5 golden-curve sweep")
    p.add_argument("which", type=int, choices=(1, 2, 3, 4, 5))
    freq_opts(p)
    p.add_argument("--delta")
    p.add_argument("--eps", help="kind 5: comma separated eps values")
    p.add_argument("--workdir", default=".")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.threads = max(1, args.threads)
    try:
        if getattr(args, "precision", 0) is None:
            args.precision = default_precision()
        if args.command in ("solve", "tune", "validate"):
            cfg = _config_from(args)
            return {"solve": cmd_solve, "tune": cmd_tune, "validate": cmd_validate}[args.command](cfg)
        return {"dioph": cmd_dioph, "russmann": cmd_russmann, "plot": cmd_plot,
                "table": cmd_table}[args.command](args)
    except UsageError as exc:
        ap.error(str(exc))
    except KamError as exc:
        step = f" [{exc.step}]" if exc.step else ""
        print(f"error{step}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
