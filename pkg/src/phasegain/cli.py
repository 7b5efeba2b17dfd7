"""Command-line front end.

Subcommands::

    phasegain analyze --theorem NAME --plant P.json --controller C.json [...]
    phasegain sweep --system P.json --out sweep.csv
    phasegain constrained-phase --matrix A.json [--r-grid 0:8:50] --out psi.csv
    phasegain constrained-gain --matrix A.json [--theta-grid 0:1.5:30] --out gam.csv
    phasegain robust-eps --k K.json --delta 0.5 --eta 2 --gamma 1 --omega-c 0.2

Exit status: 0 Stable/Certified (or success), 1 ConditionFailed/NotCertified,
2 Unknown, 3 usage or input error.
"""

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import __version__, _kernels, _rng, dwshell, kyp, lti, stability
from .documents import parse_fan_vase, parse_matrix, parse_system
from .errors import PhaseGainError, SolverTroubleError
from .matnum import singular_values

EXIT_OK, EXIT_FAILED, EXIT_UNKNOWN, EXIT_USAGE = 0, 1, 2, 3

THEOREMS = ("small-gain", "small-phase", "mixed-cutoff", "frequencywise-mixed",
            "small-vase", "dw-phase", "dw-gain", "kyp")

_VERDICT_EXIT = {
    stability.Verdict.STABLE: EXIT_OK,
    stability.Verdict.CONDITION_FAILED: EXIT_FAILED,
    stability.Verdict.UNKNOWN: EXIT_UNKNOWN,
    kyp.KypStatus.CERTIFIED: EXIT_OK,
    kyp.KypStatus.NOT_CERTIFIED: EXIT_FAILED,
    kyp.KypStatus.UNKNOWN: EXIT_UNKNOWN,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 by default, which here means Unknown
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x):
    """Shortest exact text for a float; empty for None."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _angle(x, degrees):
    return None if x is None or not np.isfinite(x) else (np.degrees(x) if degrees else x)


def parse_range(text, name):
    """``start:stop:count`` (inclusive, linear) into an array."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise UsageError(f"{name} must look like start:stop:count, got {text!r}") from None
    if n < 1 or not (np.isfinite(a) and np.isfinite(b)):
        raise UsageError(f"{name} needs finite ends and count >= 1")
    return np.linspace(a, b, n)


def _grid(args):
    return lti.FrequencyGrid(n_points=args.grid_points, omega_min=args.omega_min,
                             omega_max=args.omega_max)


def _json_default(o):
    if isinstance(o, np.ndarray):
        if np.iscomplexobj(o):
            return [[float(z.real), float(z.imag)] for z in o.ravel()]
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o).__name__)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _write_json(path, report):
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default,
                      allow_nan=False)
    if path == "-":
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _meta(args, seed=None):
    return {"tool": "phasegain", "version": __version__, "backend": _kernels.backend(),
            "seed": _rng.resolve_seed(seed), "command": args.command}


def _clean(obj):
    """Replace non-finite floats so the JSON mirror stays valid."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isfinite(x):
            return x
        return None if np.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


# ----------------------------------------------------------------- analyze


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required for {args.theorem}")


def _system(path):
    return parse_system(path).system


def _constant_schedule(value):
    return None if value is None else (lambda omega: value)


def _run_theorem(args):
    t = args.theorem
    kw = {"grid": _grid(args), "margin_floor": args.margin_floor}
    if t == "kyp":
        _require(args, "plant", "omega_c", "alpha", "beta", "gamma")
        g = _system(args.plant)
        return kyp.bounded_sectored_check(g, args.omega_c, args.alpha, args.beta, args.gamma,
                                          tol_rel=args.tol)
    if t == "small-vase":
        _require(args, "controller", "weight_g", "weight_h")
        return stability.small_vase_necessity_check(
            _system(args.controller), _system(args.weight_g), _system(args.weight_h), **kw)
    _require(args, "plant", "controller")
    p, c = _system(args.plant), _system(args.controller)
    if t == "small-gain":
        return stability.small_gain_check(p, c, **kw)
    if t == "dw-gain":
        return stability.dw_gain_stability_check(
            p, c, theta_schedule=_constant_schedule(args.theta), **kw)
    kw["eps"] = args.eps
    if t == "small-phase":
        return stability.small_phase_check(p, c, **kw)
    if t == "mixed-cutoff":
        _require(args, "omega_c")
        return stability.mixed_cutoff_check(p, c, args.omega_c, **kw)
    if t == "frequencywise-mixed":
        if args.spec is None and args.omega_c is None:
            raise UsageError("frequencywise-mixed needs --spec or --omega-c")
        spec = (parse_fan_vase(args.spec) if args.spec is not None
                else stability.cutoff_spec(p, args.omega_c))
        return stability.frequencywise_mixed_check(p, c, spec, **kw)
    if t == "dw-phase":
        return stability.dw_phase_stability_check(
            p, c, r_schedule=_constant_schedule(args.r), **kw)
    raise UsageError(f"unknown theorem {t!r}")  # pragma: no cover - argparse choices


def _point_rows(result, floor):
    rows = []
    for pr in result.points:
        pt = pr.point
        worst = min(pr.checks, key=lambda c: c.margin, default=None)
        conds = ";".join(f"{c.condition}={fmt(c.margin)}" for c in pr.checks)
        rows.append([pt.omega, pt.s.real, pt.s.imag, pt.kind.value,
                     pr.margin if np.isfinite(pr.margin) else None,
                     pr.loop_slack if np.isfinite(pr.loop_slack) else None,
                     pr.status(floor), worst.condition if worst else "", conds])
    return rows


def _analyze_report(args, result):
    rep = {"meta": _meta(args), "theorem": args.theorem}
    if isinstance(result, kyp.BoundedSectoredResult):
        rep["verdict"] = result.status.value
        rep["reason"] = result.reason
        rep["objectives"] = list(result.objectives)
        if result.certificate is not None:
            cert = result.certificate
            rep["certificate"] = {
                "residuals": list(cert.residuals),
                "p": [np.asarray(p).real.tolist() if np.allclose(np.imag(p), 0)
                      else _json_default(np.asarray(p)) for p in cert.p],
                "q": [np.asarray(q).real.tolist() if np.allclose(np.imag(q), 0)
                      else _json_default(np.asarray(q)) for q in cert.q],
            }
        return rep
    rep["verdict"] = result.verdict.value
    rep["margin_min"] = result.margins_min
    rep["n_points"] = len(result.points)
    rep["failures"] = [{"omega": f.omega, "s": [f.s.real, f.s.imag], "condition": f.condition,
                        "margin": f.margin, "kind": f.kind} for f in result.failures]
    return rep


def cmd_analyze(args):
    result = _run_theorem(args)
    if isinstance(result, stability.StabilityVerdict):
        status = result.verdict
        print(f"{args.theorem}: {status.value}")
        print(f"minimum margin: {fmt(result.margins_min)}")
        print(f"contour points: {len(result.points)}")
        for f in result.failures[:10]:
            print(f"  {f.kind} at omega={fmt(f.omega)}: {f.condition} margin={fmt(f.margin)}")
        if len(result.failures) > 10:
            print(f"  ... {len(result.failures) - 10} more")
        if args.out:
            _write_csv(args.out, ["omega", "s_re", "s_im", "kind", "margin", "loop_slack",
                                  "status", "worst_condition", "conditions"],
                       _point_rows(result, args.margin_floor))
    else:
        status = result.status
        print(f"kyp: {status.value}")
        if result.objectives:
            print("block optima: " + ", ".join(fmt(t) for t in result.objectives))
        if result.reason:
            print(f"reason: {result.reason}")
        if result.certificate is not None:
            print(f"max residual: {fmt(result.certificate.max_residual)}")
    if args.json:
        _write_json(args.json, _clean(_analyze_report(args, result)))
    return _VERDICT_EXIT[status]


# ------------------------------------------------------------------- sweep


def cmd_sweep(args):
    g = _system(args.system)
    n = g.require_square()
    poles = lti.imaginary_axis_poles(g)
    grid = _grid(args)
    eps = args.eps
    if poles.imag_axis_freqs and eps is None:
        eps = lti.default_eps(poles, 0.0, grid.omega_max)
    contour = lti.build_indented_contour(poles, eps=eps, grid=grid)
    samples = lti.frequency_sweep(g, contour)
    rows = []
    for smp in samples:
        ph = smp.phases
        hi = lo = ctr = None
        if ph is not None:
            hi, lo, ctr = (_angle(v, args.degrees) for v in (ph.hi, ph.lo, ph.center))
        rows.append([smp.omega] + [float(v) for v in smp.gains] + [hi, lo, ctr])
    header = ["omega"] + [f"sigma_{k + 1}" for k in range(n)] + ["phi_max", "phi_min",
                                                                    "phi_center"]
    _write_csv(args.out, header, rows)
    if args.json:
        _write_json(args.json, _clean({"meta": _meta(args), "columns": header,
                                       "rows": rows}))
    return EXIT_OK


# -------------------------------------------------------- matrix commands


def cmd_constrained_phase(args):
    a = parse_matrix(args.matrix)
    smax = float(singular_values(a)[0])
    rs = parse_range(args.r_grid, "--r-grid") if args.r_grid else np.linspace(0.0, smax, 50)
    if np.any(rs < 0):
        raise UsageError("--r-grid values must be nonnegative")
    seed = _rng.resolve_seed(args.seed)
    header = ["r", "psi_min", "psi_max", "empty", "status"]
    if args.oracle:
        header += ["oracle_min", "oracle_max"]
    rows, trouble = [], False
    for r in rs:
        status = "ok"
        try:
            sec = dwshell.constrained_phase_sector(a, r)
            lo, hi, empty = (None, None, True) if sec.empty else (sec.lo, sec.hi, False)
        except PhaseGainError as exc:
            lo = hi = None
            empty = False
            status = "not-r-sectorial" if not isinstance(exc, SolverTroubleError) else "trouble"
            trouble |= status == "trouble"
        row = [r, _angle(lo, args.degrees), _angle(hi, args.degrees), empty, status]
        if args.oracle:
            osec = dwshell.oracle_phase_sector(a, r, samples=args.samples, seed=seed)
            if osec.empty:
                row += [None, None]
            else:
                row += [_angle(osec.lo, args.degrees), _angle(osec.hi, args.degrees)]
        rows.append(row)
    _write_csv(args.out, header, rows)
    if args.json:
        _write_json(args.json, _clean({"meta": _meta(args, seed), "columns": header,
                                       "rows": rows, "sigma_max": smax}))
    return EXIT_UNKNOWN if trouble else EXIT_OK


def cmd_constrained_gain(args):
    a = parse_matrix(args.matrix)
    ts = (parse_range(args.theta_grid, "--theta-grid") if args.theta_grid
          else np.linspace(0.0, np.pi / 2, 30, endpoint=False))
    if np.any(ts < 0) or np.any(ts >= np.pi):
        raise UsageError("--theta-grid values must lie in [0, pi)")
    seed = _rng.resolve_seed(args.seed)
    rows, trouble = [], False
    for th in ts:
        try:
            res = dwshell.constrained_gain(a, th, samples=args.samples, seed=seed)
            rows.append([_angle(th, args.degrees), res.value, res.method.value,
                         res.approximate, res.empty])
        except SolverTroubleError:
            trouble = True
            rows.append([_angle(th, args.degrees), None, "trouble", False, False])
    header = ["theta", "gamma_theta", "method", "approximate", "empty"]
    _write_csv(args.out, header, rows)
    if args.json:
        _write_json(args.json, _clean({"meta": _meta(args, seed), "columns": header,
                                       "rows": rows}))
    return EXIT_UNKNOWN if trouble else EXIT_OK


def _real_matrix_doc(path, name):
    m = parse_matrix(path)
    if np.max(np.abs(m.imag), initial=0.0) > 0:
        raise UsageError(f"{name} must be real")
    return m.real


def cmd_robust_eps(args):
    k = _real_matrix_doc(args.k, "K")
    dt = args.delta_tilde
    if args.a_matrix is not None:
        am = _real_matrix_doc(args.a_matrix, "A")
        dt = stability.accretivity_margin(k @ am)
    bound = stability.robust_stabilization_epsilon(k, args.delta, args.eta, args.gamma,
                                                   args.omega_c, delta_tilde=dt)
    print(f"c = {fmt(bound.c)}")
    print(f"epsilon_sup = {fmt(bound.epsilon_sup)}")
    if np.isfinite(bound.omega_c_limit):
        print(f"omega_c limit = {fmt(bound.omega_c_limit)}")
    if args.json:
        _write_json(args.json, _clean({"meta": _meta(args), "c": bound.c,
                                       "epsilon_sup": bound.epsilon_sup,
                                       "omega_c": bound.omega_c,
                                       "omega_c_limit": bound.omega_c_limit}))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_common(p):
    p.add_argument("--grid-points", type=int, default=400, help="log-spaced grid size")
    p.add_argument("--omega-min", type=float, default=1e-3)
    p.add_argument("--omega-max", type=float, default=1e4)
    p.add_argument("--eps", type=float, default=None, help="indentation radius")
    p.add_argument("--margin-floor", type=float, default=stability.MARGIN_FLOOR)
    p.add_argument("--tol", type=float, default=1e-8,
                   help="relative tolerance for LMI certificates")
    p.add_argument("--degrees", action="store_true", help="write angles in degrees")
    p.add_argument("--json", metavar="PATH", default=None, help="JSON report mirror")


def build_parser():
    ap = _Parser(prog="phasegain", description="Phase/gain analysis of MIMO feedback loops.")
    ap.add_argument("--version", action="version", version=f"phasegain {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="run one stability test")
    p.add_argument("--theorem", required=True, choices=THEOREMS)
    p.add_argument("--plant")
    p.add_argument("--controller")
    p.add_argument("--omega-c", type=float)
    p.add_argument("--spec", help="fan_vase document (frequencywise-mixed)")
    p.add_argument("--weight-g", help="gain weight system (small-vase)")
    p.add_argument("--weight-h", help="phase weight system (small-vase)")
    p.add_argument("--r", type=float, help="constant gain level (dw-phase)")
    p.add_argument("--theta", type=float, help="constant angle (dw-gain)")
    p.add_argument("--alpha", type=float, help="phase lower bound (kyp)")
    p.add_argument("--beta", type=float, help="phase upper bound (kyp)")
    p.add_argument("--gamma", type=float, help="gain bound (kyp)")
    p.add_argument("--out", help="per-point CSV table")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="singular values and phases along the contour")
    p.add_argument("--system", required=True)
    p.add_argument("--out", default="-")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("constrained-phase", help="psi_r over a grid of r")
    p.add_argument("--matrix", required=True)
    p.add_argument("--r-grid", help="start:stop:count (default 0:sigma_max:50)")
    p.add_argument("--oracle", action="store_true", help="add sampling-oracle columns")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=None, help="overrides PHASEGAIN_SEED")
    p.add_argument("--out", default="-")
    _add_common(p)
    p.set_defaults(func=cmd_constrained_phase)

    p = sub.add_parser("constrained-gain", help="gamma_theta over a grid of theta")
    p.add_argument("--matrix", required=True)
    p.add_argument("--theta-grid", help="start:stop:count in radians")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=None, help="overrides PHASEGAIN_SEED")
    p.add_argument("--out", default="-")
    _add_common(p)
    p.set_defaults(func=cmd_constrained_gain)

    p = sub.add_parser("robust-eps", help="gain bound for integral-action robust stabilization")
    p.add_argument("--k", required=True, help="matrix document for K")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--omega-c", type=float, required=True)
    p.add_argument("--delta-tilde", type=float, default=None)
    p.add_argument("--a-matrix", help="matrix document for A; sets delta-tilde from KA")
    p.add_argument("--json", metavar="PATH", default=None)
    p.set_defaults(func=cmd_robust_eps)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"phasegain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverTroubleError as exc:
        print(f"phasegain: solver trouble: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN
    except PhaseGainError as exc:
        print(f"phasegain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"phasegain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
