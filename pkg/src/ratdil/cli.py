"""Command line entry point and the end-to-end pipeline.

Every subcommand prints or writes a report.  Exit codes: 0 on success, 2 when
the input fails validation, 3 when a numerical stage fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .domain import (CircularDomain, DomainError, boundary_grid, build_domain, fixed_points,
                     interior_points, reference_domain)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
STAGES = ("domain", "harmonic", "testfn", "matinner", "diag", "cone")

DEFAULT_TOLERANCES = {
    "harmonic": 1e-8,
    "unitarity": 1e-6,
    "diag": 1e-6,
    "pick": 1e-8,
    "cone": 1e-6,
    "bisection_width": 0.005,
}


class ValidationError(ValueError):
    """Bad configuration or arguments."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage, self.cause = stage, cause


# --- configuration -------------------------------------------------------------

@dataclass
class PipelineConfig:
    domain: str | None = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    grid: int = 8
    nodes: int | None = None
    t_max: float = 0.1
    t_step: float = 0.01
    seed: int = 7
    output: str = "ratdil_out"

    def __post_init__(self):
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.tolerances or {})
        self.tolerances = tol
        bad = {k: v for k, v in tol.items() if not (isinstance(v, (int, float)) and v > 0)}
        if bad:
            raise ValidationError(f"tolerances must be positive: {bad}")
        if self.grid < 1:
            raise ValidationError("grid must be a positive integer")
        if not 0 < self.t_step <= self.t_max:
            raise ValidationError("need 0 < t_step <= t_max")

    @classmethod
    def load(cls, path: str | Path | None, **overrides) -> "PipelineConfig":
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ValidationError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(data, dict):
                raise ValidationError("config must be a JSON object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def build_domain(self) -> CircularDomain:
        return reference_domain() if self.domain is None else build_domain(self.domain)


# --- serialization -------------------------------------------------------------

def to_jsonable(obj):
    """Numpy and complex values to plain JSON types; complex numbers become [re, im]."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def dumps(report) -> str:
    return json.dumps(to_jsonable(report), indent=2, sort_keys=True) + "\n"


def emit(text: str, out: str | None, kind: str) -> None:
    """Print for ``--out json|csv`` (or nothing), otherwise write the file."""
    if out is None or out == kind:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ValidationError(f"expected numbers, got {text!r}") from exc


# --- stage helpers -------------------------------------------------------------

def domain_report(D: CircularDomain) -> dict:
    fp = fixed_points(D)
    return {"n": D.n, "geometry": D.to_config(), "base_point": fp.base_point,
            "curve_gaps": [D.curve_gap(i) for i in range(D.n + 1)]}


def harmonic_report(D: CircularDomain, seed: int, degree: int | None = None) -> dict:
    from .harmonic import DEFAULT_DEGREE, harmonic_char, poisson, q_functions

    degree = degree or DEFAULT_DEGREE
    z = interior_points(D, 200, seed=seed)
    total = sum(harmonic_char(D, j, degree)(z) for j in range(D.n + 1))
    b = complex(fixed_points(D).base_point) * 0.8
    P = poisson(D, b)
    q = q_functions(D, degree).matrix(P.grid.point, P.grid.curve)
    return {"degree": degree, "sum_residual": float(np.max(np.abs(total - 1))),
            "poisson_base": b, "poisson_mass": P.mass(), "poisson_min": float(P.values.min()),
            "q_signs_ok": _q_signs_ok(q, P.grid.curve)}


def _q_signs_ok(q: np.ndarray, curve: np.ndarray) -> bool:
    """Q_j > 0 on B_j and < 0 elsewhere for j >= 1 (j = 0 mirrors this)."""
    on = curve[None, :] == np.arange(len(q))[:, None]
    return bool(np.all(q[on] > 0) and np.all(q[~on] < 0))


def testfn_report(psi) -> dict:
    from .domain import boundary_grid as bg

    grid = bg(psi.domain, 256, offset=0.5)
    vals = np.abs(psi(grid.point))
    return {"b": psi.b, "p": list(psi.p.points), "angles": psi.p.angles(psi.domain),
            "zeros": psi.zeros, "winding": psi.winding,
            "unimodularity": float(np.max(np.abs(vals - 1))),
            "value_at_b": abs(complex(psi(np.array([psi.b]))[0]))}


def diag_samples(D: CircularDomain, seed: int) -> np.ndarray:
    return interior_points(D, 20, seed=seed)


def psi0_split_error(D, F0, p, b) -> float:
    """max |Psi_0 - diag(psi_p, psi_mirror(p))| at interior points."""
    from .testfn import test_function

    z = interior_points(D, 50, seed=5)
    tp = test_function(D, p, b, locate_zeros=False)
    tq = test_function(D, p.mirror(), b, locate_zeros=False)
    target = np.zeros((len(z), 2, 2), dtype=complex)
    target[:, 0, 0], target[:, 1, 1] = tp(z), tq(z)
    return float(np.max(np.abs(F0(z) - target)))


def cone_setup(D, sel, F, grid: int, nodes: int | None):
    from .cone import build_discretization, default_nodes
    from .testfn import test_function

    tp = test_function(D, sel.p, sel.b, locate_zeros=False)
    tq = test_function(D, sel.p.mirror(), sel.b, locate_zeros=False)
    S = default_nodes(D, F.zero_report.zeros, sel.b, nodes)
    disc = build_discretization(D, sel.b, S, grid, [tp, tq], ["psi_p", "psi_mp"])
    return disc, tp


# --- pipeline ------------------------------------------------------------------

def run_pipeline(cfg: PipelineConfig, stage: str = "cone") -> dict:
    """Run the stages in order up to ``stage``; a failure raises StageError."""
    if stage not in STAGES:
        raise ValidationError(f"unknown stage {stage!r}; choose from {STAGES}")
    last = STAGES.index(stage)
    report = {"config": asdict(cfg), "seed": cfg.seed, "stages": {}, "verdicts": {}}
    st, ver = report["stages"], report["verdicts"]
    ctx: dict = {}
    timings: dict = {}

    def run(name, fn):
        t0 = time.perf_counter()
        try:
            st[name] = fn()
        except (DomainError, ValidationError):
            raise
        except Exception as exc:  # tag any numerical failure with its stage
            raise StageError(name, exc) from exc
        timings[name] = time.perf_counter() - t0

    try:
        D = cfg.build_domain()
    except (DomainError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"[domain] {exc}") from exc
    run("domain", lambda: domain_report(D))

    if last >= 1:
        def harmonic():
            rep = harmonic_report(D, cfg.seed)
            if rep["sum_residual"] > cfg.tolerances["harmonic"]:
                raise ArithmeticError(f"sum of harmonic measures off by {rep['sum_residual']:.2e}")
            return rep
        run("harmonic", harmonic)

    if last >= 2:
        def testfn():
            from .testfn import select_offX, test_function

            sel = select_offX(D)
            ctx["sel"] = sel
            psi = test_function(D, sel.p, sel.b)
            rep = testfn_report(psi)
            rep.update({"offaxis_margin": sel.margin, "rebase_error": sel.rebase_error})
            return rep
        run("testfn", testfn)

    if last >= 3:
        def matinner():
            from .fay import critical_points, fay_theta
            from .matinner import pick_matrix, psi, select_t, trivial_team, unitarity_residual

            sel = ctx["sel"]
            F0 = psi(D, trivial_team(D.n), sel.p, sel.b)
            crit = critical_points(D, sel.b)
            kernel = fay_theta(D, sel.b)
            t, Ft, szs, scan = select_t(D, sel.p, sel.b, crit.points, kernel,
                                        t_max=cfg.t_max, step=cfg.t_step)
            ctx.update(F0=F0, Ft=Ft, t=t, szs=szs)
            pts = np.concatenate([[sel.b], szs.points])
            from .matinner import extra_nodes
            pick_pts = np.concatenate([pts, extra_nodes(D, pts, 2)])
            pk = pick_matrix(Ft, kernel, pick_pts, cfg.tolerances["pick"])
            rep = {"psi0_split_error": psi0_split_error(D, F0, sel.p, sel.b),
                   "psi0_unitarity": unitarity_residual(F0),
                   "t": t, "scan": scan, "psit_unitarity": unitarity_residual(Ft),
                   "det_zeros": Ft.zero_report.expanded(),
                   "szs_points": szs.points, "szs_gammas": szs.gammas, "szs_report": szs.report,
                   "critical_points": crit.points, "theta_fit_error": kernel.fit_error,
                   "pick_rank": pk.rank, "pick_min_eigenvalue": pk.min_eigenvalue}
            if rep["psi0_unitarity"] > cfg.tolerances["unitarity"]:
                raise ArithmeticError("Psi_0 is not unitary on the boundary")
            return rep
        run("matinner", matinner)
        ver["szs"] = "pass"
        ver["eps"] = "pass" if all(e.get("eps", True) for e in st["matinner"]["scan"]
                                   if e.get("t") == ctx["t"]) else "fail"

    if last >= 4:
        def diag():
            from .matinner import attempt_diagonalize

            z = diag_samples(D, cfg.seed)
            d0 = attempt_diagonalize(ctx["F0"], z, cfg.tolerances["diag"])
            dt = attempt_diagonalize(ctx["Ft"], z, cfg.tolerances["diag"])
            return {"psi0": {"success": d0.success, "residual": d0.residual},
                    "psit": {"success": dt.success, "residual": dt.residual,
                             "witness": dt.witness}}
        run("diag", diag)
        ver["diag"] = "witness" if not st["diag"]["psit"]["success"] else "diagonalizable"

    if last >= 5:
        def cone():
            from .cone import rho_estimate

            disc, _ = cone_setup(D, ctx["sel"], ctx["Ft"], cfg.grid, cfg.nodes)
            est = rho_estimate(ctx["Ft"], disc, width=cfg.tolerances["bisection_width"],
                               seed=cfg.seed, tol=cfg.tolerances["cone"])
            ctx["est"] = est
            rep = est.to_dict()
            rep.update({"nodes": disc.nodes, "generators": disc.K,
                        "certificate_residual": None if est.certificate is None
                        else est.certificate.relative_residual})
            return rep
        run("cone", cone)
        up = st["cone"]["rho_upper"]
        ver["rho_upper_lt_1"] = up is not None and up < 1

    report["completed"] = list(st)
    ctx["timings"] = timings
    report["_ctx"] = ctx
    return report


def write_pipeline(report: dict, outdir: str | Path) -> list[Path]:
    """JSON summary, CSV traces and SVG plots into ``outdir``."""
    ctx = report.pop("_ctx", {})
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "report.json"]
    files[0].write_text(dumps(report))
    timings = out / "timings.json"
    timings.write_text(dumps(ctx.get("timings", {})))
    files.append(timings)
    st = report["stages"]
    if "cone" in st:
        p = out / "bisection.csv"
        p.write_text(csv_text(["rho", "feasible", "residual", "floor_bound"],
                              [(r["rho"], r["feasible"], r["residual"], r["floor_bound"])
                               for r in st["cone"]["residual_trace"]]))
        files.append(p)
    if "matinner" in st:
        p = out / "t_scan.csv"
        p.write_text(csv_text(["t", "szs", "eps", "cond"],
                              [(e["t"], e["szs"], e.get("eps", ""), e.get("cond", ""))
                               for e in st["matinner"]["scan"]]))
        files.append(p)
    from . import plots

    D = PipelineConfig(domain=report["config"]["domain"]).build_domain()
    sel = ctx.get("sel")
    files.append(plots.domain_svg(D, out / "domain.svg",
                                  zeros=None if "Ft" not in ctx else ctx["Ft"].zero_report.zeros,
                                  base=None if sel is None else sel.b))
    if sel is not None:
        from .testfn import test_function

        psi = test_function(D, sel.p, sel.b, locate_zeros=False)
        files.append(plots.modulus_svg(D, psi, out / "psi_modulus.svg"))
    if "cone" in st:
        files.append(plots.bisection_svg(st["cone"]["residual_trace"], out / "bisection.svg"))
    return files


# --- subcommands ---------------------------------------------------------------

def _domain(args) -> CircularDomain:
    return reference_domain() if args.domain is None else build_domain(args.domain)


def cmd_domain(args) -> int:
    emit(dumps(domain_report(_domain(args))), args.out, "json")
    return EXIT_OK


def cmd_harmonic(args) -> int:
    from .harmonic import harmonic_char, poisson, q_functions, solve_dirichlet

    D = _domain(args)
    grid = boundary_grid(D, args.grid, offset=0.5)
    theta = np.angle(grid.point - np.array([c.center for c in D.circles])[grid.curve])
    if args.action == "solve":
        if args.curve is None:
            u = solve_dirichlet(D, lambda z: np.real(z), args.degree)
        else:
            u = harmonic_char(D, args.curve, args.degree)
        vals = u(grid.point)
    elif args.action == "green":
        b = complex(args.b if args.b is not None else 0.8 * fixed_points(D).base_point)
        vals = poisson(D, b, degree=args.degree).density(grid.point, grid.normal)
    else:
        j = 1 if args.curve is None else args.curve
        vals = q_functions(D, args.degree)(j, grid.point, grid.curve)
    rows = zip(grid.curve.tolist(), theta, np.real(vals))
    emit(csv_text(["curve", "angle", "value"], rows), args.out, "csv")
    return EXIT_OK


def _resolve_p(D, args):
    from .testfn import PiPoint

    if args.p is None:
        from .testfn import select_offX

        sel = select_offX(D)
        return sel.p, sel.b if args.b is None else args.b
    angles = parse_floats(args.p)
    constrained = len(angles) == D.n
    p = PiPoint.from_angles(D, angles, constrained)
    b = args.b if args.b is not None else fixed_points(D).base_point * 0.8
    return p, b


def cmd_testfn(args) -> int:
    from .testfn import select_offX, test_function

    D = _domain(args)
    if args.action == "select":
        sel = select_offX(D)
        rep = testfn_report(test_function(D, sel.p, sel.b))
        rep.update({"offaxis_margin": sel.margin, "rebase_error": sel.rebase_error})
    else:
        p, b = _resolve_p(D, args)
        rep = testfn_report(test_function(D, p, b))
    emit(dumps(rep), args.out, "json")
    return EXIT_OK


def cmd_jacobian(args) -> int:
    from .jacobian import ThetaContext, odd_half_period, period_matrix, theta, theta_char

    D = _domain(args)
    pm = period_matrix(D)
    rep = {"omega": pm.omega, "a_period_error": pm.a_period_error,
           "symmetry_error": pm.symmetry_error,
           "imag_eigenvalues": np.linalg.eigvalsh(0.5 * (pm.omega.imag + pm.omega.imag.T))}
    if args.action == "theta":
        ctx = ThetaContext(pm.omega, args.tol)
        rng = np.random.default_rng(args.seed)
        n = D.n
        z = rng.uniform(-0.5, 0.5, (n, 20)) + 1j * rng.uniform(-0.5, 0.5, (n, 20))
        base = theta(z, ctx)
        errs = []
        for j in range(n):
            e = np.eye(n)[:, j:j + 1]
            errs.append(np.max(np.abs(theta(z + e, ctx) - base) / np.abs(base)))
            col = pm.omega[:, j:j + 1]
            fac = np.exp(-1j * np.pi * pm.omega[j, j] - 2j * np.pi * z[j])
            errs.append(np.max(np.abs(theta(z + col, ctx) - fac * base) / np.abs(fac * base)))
        ohp = odd_half_period(ctx)
        rep.update({"M": ctx.M, "tail_bound": ctx.tail,
                    "quasi_periodicity_error": float(max(errs)),
                    "odd_characteristic": {"u": ohp.u, "v": ohp.v},
                    "theta_star_at_0": abs(complex(np.ravel(theta_char(ohp.e, np.zeros(n), ctx))[0]))})
    emit(dumps(rep), args.out, "json")
    return EXIT_OK


def cmd_fay(args) -> int:
    from .fay import fay_gram, fay_theta

    D = _domain(args)
    b = args.b if args.b is not None else float(fixed_points(D).base_point) * 0.8
    gram = fay_gram(D, b, args.degree)
    rng = np.random.default_rng(args.seed)
    z = interior_points(D, 5, seed=args.seed)
    rep = {"backend": args.backend, "b": b, "degree": args.degree}
    one = gram.kernel(z, np.full(len(z), complex(b)))
    rep["kernel_at_b_error"] = float(np.max(np.abs(one - 1)))
    if args.backend == "theta":
        k = fay_theta(D, b, gram)
        rep.update({"fit_error": k.fit_error, "e": k.e})
        if args.action == "check":
            x = interior_points(D, 20, seed=args.seed + 1)
            y = x[rng.permutation(len(x))]
            kg, kt = gram.kernel(x, y), k.kernel(x, y)
            rep["gram_vs_theta"] = float(np.max(np.abs(kg - kt) / np.abs(kg)))
    emit(dumps(rep), args.out, "json")
    return EXIT_OK


def cmd_matinner(args) -> int:
    from .fay import critical_points, fay_theta
    from .matinner import (attempt_diagonalize, extra_nodes, perturb_team, pick_matrix, psi,
                           standard_zero_set, unitarity_residual)
    from .testfn import select_offX

    D = _domain(args)
    sel = select_offX(D)
    F = psi(D, perturb_team(args.t, D.n), sel.p, sel.b)
    rep = {"t": args.t, "b": sel.b, "p": list(sel.p.points)}
    if args.action == "build":
        rep.update({"unitarity": unitarity_residual(F),
                    "value_at_b": float(np.max(np.abs(F(np.array([sel.b]))[0])))})
    elif args.action == "zeros":
        zr = F.zero_report
        rep.update({"zeros": zr.expanded(), "winding": zr.winding,
                    "moment_error": zr.moment_error})
    elif args.action == "szs":
        crit = critical_points(D, sel.b)
        szs = standard_zero_set(F, crit.points)
        kernel = fay_theta(D, sel.b)
        from .fay import epsilon_matrices

        eps = epsilon_matrices(kernel, szs.points, szs.gammas)
        rep.update({"szs": "pass", "points": szs.points, "gammas": szs.gammas,
                    "margins": szs.report, "eps": eps.holds, "cond": eps.cond_F})
    elif args.action == "diag":
        d = attempt_diagonalize(F, diag_samples(D, args.seed), args.tol)
        rep.update({"success": d.success, "residual": d.residual, "witness": d.witness})
    else:
        kernel = fay_theta(D, sel.b)
        pts = np.concatenate([[sel.b], np.unique(np.round(F.zero_report.zeros, 10))])
        pts = np.concatenate([pts, extra_nodes(D, pts, 2)])
        pk = pick_matrix(F, kernel, pts, args.tol)
        rep.update({"rank": pk.rank, "singular_values": pk.singular_values,
                    "min_eigenvalue": pk.min_eigenvalue})
    emit(dumps(rep), args.out, "json")
    return EXIT_OK


def cmd_cone(args) -> int:
    from .cone import rho_estimate
    from .matinner import perturb_team, psi
    from .testfn import select_offX

    D = _domain(args)
    sel = select_offX(D)
    t = 0.0 if args.f in ("psi_0", "psi_p") else args.t
    F = psi(D, perturb_team(t, D.n), sel.p, sel.b)
    nodes = None if args.nodes == "auto" else int(args.nodes)
    disc, tp = cone_setup(D, sel, F, args.grid, nodes)
    target = tp if args.f == "psi_p" else F
    est = rho_estimate(target, disc, seed=args.seed, width=args.width, tol=args.tol)
    emit(dumps(est.to_dict()), args.out, "json")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = PipelineConfig.load(args.config, domain=args.domain, seed=args.seed,
                              output=args.out if args.out not in (None, "json") else None)
    if args.tol is not None:
        cfg.tolerances = {**cfg.tolerances, "cone": args.tol}
    report = run_pipeline(cfg, args.stage)
    if args.out == "json":
        report.pop("_ctx", None)
        sys.stdout.write(dumps(report))
    else:
        write_pipeline(report, cfg.output)
        sys.stdout.write(dumps({"output": cfg.output, "verdicts": report["verdicts"],
                                "completed": report["completed"]}))
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--domain", help="domain geometry JSON (default: reference domain)")
    common.add_argument("--out", help="'json'/'csv' for stdout, else an output path")
    common.add_argument("--seed", type=int, default=7)
    common.add_argument("--tol", type=float, default=None)

    ap = argparse.ArgumentParser(prog="ratdil", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("domain", parents=[common], help="validate and describe a domain")

    h = sub.add_parser("harmonic", parents=[common], help="boundary values as CSV")
    h.add_argument("action", choices=["solve", "green", "qfuncs"])
    h.add_argument("--degree", type=int, default=None)
    h.add_argument("--grid", type=int, default=64, help="samples per curve")
    h.add_argument("--curve", type=int, default=None)
    h.add_argument("--b", type=complex, default=None)

    t = sub.add_parser("testfn", parents=[common], help="test functions")
    t.add_argument("action", choices=["build", "select"])
    t.add_argument("--p", help="hole angles (n values) or all curve angles (n + 1 values)")
    t.add_argument("--b", type=float, default=None)

    j = sub.add_parser("jacobian", parents=[common], help="period matrix and theta checks")
    j.add_argument("action", choices=["omega", "theta"])

    f = sub.add_parser("fay", parents=[common], help="Fay kernel backends")
    f.add_argument("action", choices=["build", "check"])
    f.add_argument("--backend", choices=["gram", "theta"], default="gram")
    f.add_argument("--degree", type=int, default=128)
    f.add_argument("--b", type=float, default=None)

    m = sub.add_parser("matinner", parents=[common], help="matrix inner functions")
    m.add_argument("action", choices=["build", "zeros", "szs", "diag", "pick"])
    m.add_argument("--t", type=float, default=0.1)

    c = sub.add_parser("cone", parents=[common], help="cone feasibility radius")
    c.add_argument("action", choices=["rho"])
    c.add_argument("--f", choices=["psi_p", "psi_0", "psi_t"], default="psi_t")
    c.add_argument("--t", type=float, default=0.1)
    c.add_argument("--grid", type=int, default=8)
    c.add_argument("--nodes", default="auto")
    c.add_argument("--width", type=float, default=0.005)

    p = sub.add_parser("pipeline", parents=[common], help="full run with emitted artifacts")
    p.add_argument("--stage", choices=STAGES, default="cone", help="last stage to run")
    return ap


COMMANDS = {"domain": cmd_domain, "harmonic": cmd_harmonic, "testfn": cmd_testfn,
            "jacobian": cmd_jacobian, "fay": cmd_fay, "matinner": cmd_matinner,
            "cone": cmd_cone, "pipeline": cmd_pipeline}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command != "pipeline":
        if args.config is not None and args.domain is None:
            try:
                args.domain = PipelineConfig.load(args.config).domain
            except ValidationError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_VALIDATION
        if args.tol is None:
            args.tol = {"cone": 1e-6, "jacobian": 1e-12}.get(args.command, 1e-6)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (DomainError, ValidationError)):
            return EXIT_VALIDATION
        return EXIT_NUMERICAL
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
