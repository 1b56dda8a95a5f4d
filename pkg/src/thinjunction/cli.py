"""Command line front end: validate, limit, expand, node, verify, run."""

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .composite import assemble, cross_section_average, evaluate_point, solve_terms
from .junction_config import ConfigError, load_spec, validate_assumptions
from .limit_graph import kirchhoff_residual, limit_table, solve_limit
from .node_solver import CAP_TOL, DEFAULT_RESOLUTION, DEFAULT_TRUNCATION, NodeSolveError
from .verification import (
    DEFAULT_EPS,
    compare_edge_reference,
    compute_residual_norms,
    fit_exponential,
    fit_rate,
    r3_closed_form,
    reference_for,
)

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_VERDICT = 0, 1, 2, 3
THREADS_ENV = "THINJUNCTION_THREADS"
# a node geometry failure only disables the node stage
NON_BLOCKING = ("node_geometry",)
R3_CLOSED_FORM_TOL = 1e-6


class StageError(RuntimeError):
    def __init__(self, stage, message, code=EXIT_SOLVER):
        super().__init__(f"[{stage}] {message}")
        self.code = code


@dataclass
class RunManifest:
    config: str
    config_hash: str
    version: str
    command: str
    params: dict
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    created: str = ""


def config_hash(path):
    """sha256 of the canonical JSON form of the parsed config (stable under re-serialization)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        from .junction_config import tomllib

        data = tomllib.loads(text)
    else:
        data = json.loads(text)
    canon = json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()


def _num(v):
    v = float(v)
    return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))


def _jnum(v):
    v = float(v)
    return v if math.isfinite(v) else None


class Writer:
    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def csv(self, name, header, rows):
        p = self.out / name
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in r])
        self.files.append(name)

    def json(self, name, obj):
        p = self.out / name
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        self.files.append(name)


# ---------------------------------------------------------------- stages


def _load(path):
    try:
        return load_spec(path)
    except ConfigError as exc:
        raise StageError("junction_config", str(exc), EXIT_VALIDATION) from None


def stage_validate(problem, writer):
    spec, velocity, diffusion, _ = problem
    rep = validate_assumptions(spec, velocity, diffusion)
    writer.json("validation.json", rep.to_dict())
    blocking = [c for c in rep.failures() if c.name not in NON_BLOCKING]
    return rep, blocking


def stage_limit(problem, writer):
    spec, velocity, _, source = problem
    try:
        lim = solve_limit(spec, velocity, source)
    except ZeroDivisionError as exc:
        raise StageError("limit_graph", str(exc)) from None
    writer.csv("limit.csv", ["edge", "x", "w0"], limit_table(lim, spec))
    at0 = [float(w(0.0)) for w in lim.w0]
    writer.json(
        "limit.json",
        {
            "C": [float(c) for c in lim.C],
            "w0_at_node": at0,
            "w0_at_base": [float(w(l)) for w, l in zip(lim.w0, spec.ell)],
            "kirchhoff_residual": kirchhoff_residual(at0, spec, velocity),
        },
    )
    return lim


def _solve(problem, order, node, resolution=DEFAULT_RESOLUTION, trunc=None):
    kw = {} if trunc is None else {"trunc": trunc}
    try:
        return solve_terms(problem, order, node=node, resolution=resolution, **kw)
    except NodeSolveError as exc:
        raise StageError("node_solver", str(exc)) from None
    except (ZeroDivisionError, ValueError, ArithmeticError) as exc:
        raise StageError("regular_expansion", str(exc)) from None


def write_expansion(terms, writer, density=64):
    spec = terms.spec
    rows = []
    for t in terms.regs:
        for j in range(3):
            x = np.linspace(0.0, spec.ell[j], int(round(density * spec.ell[j])) + 1)
            for xv, wv in zip(x, t.w[j](x)):
                rows.append((j + 1, t.order, float(xv), float(wv)))
    writer.csv("regular.csv", ["edge", "k", "x", "w"], rows)
    corr = []
    for c in terms.correctors:
        for j, fam in enumerate(c.families):
            sup = fam.support or (float("nan"), float("nan"))
            corr.append((j + 1, c.order, int(fam.is_zero), sup[0], sup[1], float(fam.compat),
                         float(np.max(np.abs(fam.means))) if fam.means is not None else 0.0))
    writer.csv("correctors.csv", ["edge", "k", "zero", "support_lo", "support_hi", "compatibility", "max_mean"], corr)
    writer.json(
        "layers.json",
        {"terms": [{"order": t.order, "amplitude": t.amplitude, "decay_rate": t.decay_rate} for t in terms.layers],
         "c": [[float(x) for x in t.c] for t in terms.regs]},
    )


def write_node(terms, writer):
    rows, info = [], []
    for t in terms.node_terms:
        for j in range(3):
            xi, avg, rms = t.profile(j)
            rows += [(t.order, j + 1, float(a), float(b), float(b - t.w0[j]), float(c)) for a, b, c in zip(xi, avg, rms)]
        info.append({
            "order": t.order,
            "w": list(t.w0),
            "cap_mismatch": [_jnum(x) for x in t.cap_mismatch],
            "decay_rates": [_jnum(x) for x in t.decay_rates],
            "solvability": t.solvability,
            "residual": t.diagnostics.get("residual"),
            "stabilized": bool(max(t.cap_mismatch) <= CAP_TOL),
        })
    writer.csv("node_profiles.csv", ["order", "outlet", "xi", "avg", "avg_minus_w0", "rms_deviation"], rows)
    d = terms.node_terms[0].domain
    writer.json("node.json", {"terms": info, "resolution": d.n, "truncation": d.trunc, "cap": d.cap,
                              "cap_tolerance": CAP_TOL})
    return all(i["stabilized"] for i in info)


def read_points(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    try:
        return np.array([[float(v) for v in r[:3]] for r in rows], dtype=float)
    except ValueError:
        return np.array([[float(v) for v in r[:3]] for r in rows[1:]], dtype=float)


def write_eval(terms, order, eps, points, writer, samples=33):
    A = assemble(order, eps, terms)
    vals = []
    for p in points:
        try:
            vals.append(evaluate_point(A, p))
        except ValueError as exc:
            raise StageError("composite", str(exc)) from None
    writer.csv("eval.csv", ["x1", "x2", "x3", "value"], [(*map(float, p), v) for p, v in zip(points, vals)])
    rows = []
    for i in range(3):
        lo = A.cutoffs.node_band[1] if terms.node_terms is None else eps * terms.spec.ell0
        x = np.linspace(lo, terms.spec.ell[i], samples)
        avg = cross_section_average(A, i, x)
        rows += [(i + 1, float(a), float(b)) for a, b in zip(x, avg)]
    writer.csv("averages.csv", ["edge", "x", "average"], rows)


def verify(terms, orders, eps_list, node=True):
    """Residual table rows and a verdict block for the given orders and eps values."""
    if len(eps_list) < 4:
        raise StageError("verification", f"rate fits need at least 4 eps values, got {len(eps_list)}")
    rows, verdict = [], {"R1": [], "R2": [], "R3": [], "R4": [], "R3_closed_form": [], "edge_reference": []}
    ok = True
    for m in orders:
        reps, dev = [], []
        for e in eps_list:
            try:
                A = assemble(m, e, terms)
                rep = compute_residual_norms(A, node=node)
            except ValueError as exc:
                raise StageError("verification", str(exc)) from None
            reps.append(rep)
            rows += [tuple(r.values()) for r in rep.rows()]
            cf = r3_closed_form(A)
            rel = abs(rep.R3 - cf) / cf if cf > 0 else abs(rep.R3)
            verdict["R3_closed_form"].append({"eps": e, "m": m, "quadrature": rep.R3, "closed_form": cf,
                                              "rel_error": rel, "verdict": "pass" if rel <= R3_CLOSED_FORM_TOL else "fail"})
            ok &= rel <= R3_CLOSED_FORM_TOL
            dev.append((e, compare_edge_reference(reference_for(A), A)))
        for i in range(3):
            for key, pred in (("R1", m + 1.0), ("R4", m + 1.5)):
                f = fit_rate([(r.eps, getattr(r, key)[i]) for r in reps], pred, f"{key}[m={m},edge={i + 1}]")
                verdict[key].append({"m": m, "edge": i + 1, "slope": _jnum(f.slope), "predicted": pred, "verdict": f.verdict})
                ok &= f.passed
            if node:
                g = fit_exponential([(r.eps, r.R2[i]) for r in reps], f"R2[m={m},edge={i + 1}]")
                verdict["R2"].append({"m": m, "edge": i + 1, "slope_vs_inv_eps": _jnum(g.slope),
                                      "correlation": _jnum(g.correlation), "verdict": _exp_word(g)})
                ok &= g.passed
        if not node:
            verdict["R2"].append({"m": m, "verdict": "skipped: node stage disabled"})
        g = fit_exponential([(r.eps, r.R3) for r in reps], f"R3[m={m}]")
        verdict["R3"].append({"m": m, "edge": 3, "slope_vs_inv_eps": _jnum(g.slope), "correlation": _jnum(g.correlation),
                              "verdict": _exp_word(g)})
        ok &= g.passed
        f = fit_rate(dev, float("nan"), f"edge_reference[m={m}]")
        verdict["edge_reference"].append({"m": m, "deviation": [[e, d] for e, d in dev], "slope": _jnum(f.slope)})
    verdict["passed"] = bool(ok)
    return rows, verdict


def _exp_word(fit):
    if fit.verdict == "identically zero":
        return fit.verdict
    return "exponentially small: " + fit.verdict


# ---------------------------------------------------------------- commands


def _parse_orders(text):
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(t) for t in text.split(",")]


def _parse_eps(text):
    vals = [float(t) for t in text.split(",") if t.strip()]
    if any(not v > 0.0 for v in vals):
        raise argparse.ArgumentTypeError("eps values must be positive")
    return vals


def _node_enabled(rep):
    return not any(c.name == "node_geometry" and not c.passed for c in rep.checks)


def main(argv=None):
    p = argparse.ArgumentParser(prog="python -m thinjunction", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config")
        s.add_argument("--out", default="out", help="output directory (default: out)")
        return s

    add("validate", "check the standing assumptions")
    add("limit", "solve the limit problem on the graph")
    s = add("expand", "regular terms, correctors and layers")
    s.add_argument("--order", type=int, required=True)
    s.add_argument("--eval", dest="eval_file")
    s.add_argument("--eps", type=float, default=0.1, help="eps for --eval (default 0.1)")
    s = add("node", "node terms on the truncated junction domain")
    s.add_argument("--order", type=int, required=True)
    s.add_argument("--trunc", type=float, default=DEFAULT_TRUNCATION)
    s.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    s = add("verify", "residual norms and rate fits")
    s.add_argument("--orders", type=_parse_orders, default=[0, 1, 2])
    s.add_argument("--eps", type=_parse_eps, default=list(DEFAULT_EPS))
    s.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    s = add("run", "full pipeline")
    s.add_argument("--order", type=int, required=True)
    s.add_argument("--eps", type=_parse_eps, default=list(DEFAULT_EPS))
    s.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    args = p.parse_args(argv)

    try:
        return _dispatch(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


def _dispatch(args):
    w = Writer(args.out)
    timings = {}
    t0 = time.perf_counter()
    problem = _load(args.config)
    rep, blocking = stage_validate(problem, w)
    timings["validate"] = time.perf_counter() - t0
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail} ({c.witness:.4g})")
    if blocking:
        names = ", ".join(c.name for c in blocking)
        raise StageError("junction_config", f"assumption check failed: {names}", EXIT_VALIDATION)
    node = _node_enabled(rep)
    params = {k: v for k, v in vars(args).items() if k not in ("config", "out")}
    code = EXIT_OK
    cmd = args.command
    if cmd in ("limit", "run"):
        t = time.perf_counter()
        stage_limit(problem, w)
        timings["limit"] = time.perf_counter() - t
    if cmd == "expand":
        t = time.perf_counter()
        need_node = bool(args.eval_file) and node
        terms = _solve(problem, args.order, need_node)
        write_expansion(terms, w)
        if args.eval_file:
            write_eval(terms, args.order, args.eps, read_points(args.eval_file), w)
        timings["expand"] = time.perf_counter() - t
    if cmd == "node":
        if not node:
            raise StageError("node_solver", "outlet disks do not fit on the node faces (h_i >= ell0)")
        t = time.perf_counter()
        terms = _solve(problem, args.order, True, args.resolution, args.trunc)
        if not write_node(terms, w):
            print(f"error: [node_solver] stabilization not reached at the caps (tolerance {CAP_TOL:g})", file=sys.stderr)
            code = EXIT_SOLVER
        timings["node"] = time.perf_counter() - t
    if cmd in ("verify", "run"):
        orders = args.orders if cmd == "verify" else list(range(args.order + 1))
        t = time.perf_counter()
        terms = _solve(problem, max(orders), node, args.resolution)
        timings["terms"] = time.perf_counter() - t
        if cmd == "run":
            write_expansion(terms, w)
            if node:
                write_node(terms, w)
        t = time.perf_counter()
        rows, verdict = verify(terms, orders, args.eps, node)
        timings["verify"] = time.perf_counter() - t
        w.csv("residuals.csv", ["eps", "m", "edge", "norm_R1", "norm_R2", "norm_R3", "norm_R4"], rows)
        w.json("verdict.json", verdict)
        _print_verdict(verdict)
        if not verdict["passed"]:
            code = EXIT_VERDICT
    # every listed output is on disk before the manifest is written
    man = RunManifest(str(args.config), config_hash(args.config), __version__, cmd, params, list(w.files),
                      {k: round(v, 3) for k, v in timings.items()}, time.strftime("%Y-%m-%dT%H:%M:%S"))
    (w.out / "manifest.json").write_text(json.dumps(asdict(man), indent=2, sort_keys=True) + "\n")
    return code


def _print_verdict(v):
    for key in ("R1", "R4"):
        for r in v[key]:
            print(f"{key} m={r['m']} edge={r['edge']}: slope {r['slope']} (predicted {r['predicted']}) {r['verdict']}")
    for key in ("R2", "R3"):
        for r in v[key]:
            print(f"{key} m={r['m']}" + (f" edge={r['edge']}" if "edge" in r else "") + f": {r['verdict']}")
    print("overall:", "PASS" if v["passed"] else "FAIL")


if __name__ == "__main__":
    sys.exit(main())
