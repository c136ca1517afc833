"""holinear command line: classify | linearize | flow | sweep | examples.

Every command writes report.json (schema_version 1, sorted keys, no
timings) and timings.json into --out.  Errors exit with the taxonomy code
and leave an error object in report.json.
"""

import os

_threads = os.environ.get("HOLINEAR_THREADS")
if _threads:
    # BLAS pools read these at load time, so set them before numpy
    for _v in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_v, _threads)

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EXIT_OK, HolinearError, ParseError, SeriesDiverged
from .flows import (
    VectorFieldDef,
    affine_family,
    classify_critical_point,
    hartman_family,
    quadratic_family,
    shilnikov_check,
    sweep_linearizations,
    time_one_map,
    translated_map,
)
from .maps import MapBundle, PolyMap, builtin
from .pipeline import linearize_map
from .regularity import SamplePlan, estimate_holder
from .spectral import classify

SCHEMA_VERSION = 1

FIELD_BUILTINS = {
    # name: (DX0, nonlinear terms)
    "saddle_focus": ([[-0.5, 2.0, 0.0], [-2.0, -0.5, 0.0], [0.0, 0.0, 1.0]],
                     [(0.1, [0, 0, 2], 0), (0.1, [1, 0, 1], 2)]),
    "linear_diag": ([[1.0, 0.0, 0.0], [0.0, 1.5, 0.0], [0.0, 0.0, -1.0]], []),
    "linear_saddle": ([[1.0, 0.0], [0.0, -1.0]], []),
}


# ---------------------------------------------------------------------------
# input


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def parse_builtin(spec):
    """'tag:p1,p2,...' -> (tag, [floats])."""
    tag, _, rest = spec.partition(":")
    if not tag:
        raise ParseError("empty builtin tag", field="--builtin")
    try:
        params = [float(v) for v in rest.split(",")] if rest else []
    except ValueError as exc:
        raise ParseError(f"bad builtin parameters: {exc}", field="--builtin")
    return tag, params


def read_document(args):
    """The input definition as a JSON-able dict (also hashed for the report)."""
    if args.input and args.builtin:
        raise ParseError("give --input or --builtin, not both")
    if args.builtin:
        tag, params = parse_builtin(args.builtin)
        return {"builtin": tag, "params": params}
    if not args.input:
        raise ParseError("no input: use --input PATH or --builtin TAG:params")
    try:
        text = Path(args.input).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {args.input}: {exc}", field="--input")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno)
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    return doc


def _need(doc, key):
    if key not in doc:
        raise ParseError(f"missing field {key!r}", field=key)
    return doc[key]


def map_from_document(doc):
    """MapBundle with its fixed point moved to 0 (``fixed_point`` field)."""
    if "builtin" in doc:
        return builtin(doc["builtin"], doc.get("params", []))
    dim = int(_need(doc, "dim"))
    L = np.asarray(_need(doc, "L"), dtype=float)
    if L.shape != (dim, dim):
        raise ParseError("L must be a dim x dim matrix", field="L", shape=list(L.shape))
    name = doc.get("name", "map")
    delta = float(doc.get("delta", 1.0))
    terms = doc.get("terms", [])
    if "fixed_point" in doc:
        p = np.asarray(doc["fixed_point"], dtype=float)
        lin = [(L[i, j], [int(k == j) for k in range(dim)], i) for i in range(dim) for j in range(dim) if L[i, j]]
        full = PolyMap(dim, list(terms) + lin, allow_low_degree=True)
        return translated_map(full, p, delta, name)
    return MapBundle(L, PolyMap(dim, terms), delta, name)


def field_from_document(doc):
    if "builtin" in doc:
        tag = doc["builtin"]
        if tag not in FIELD_BUILTINS:
            raise ParseError(f"unknown field builtin {tag!r}", known=sorted(FIELD_BUILTINS))
        DX0, terms = FIELD_BUILTINS[tag]
        return VectorFieldDef(DX0, PolyMap(len(DX0), terms), 1.0, tag)
    dim = int(_need(doc, "dim"))
    return VectorFieldDef.from_terms(dim, _need(doc, "terms"), float(doc.get("radius", 1.0)), doc.get("name", "field"))


def parse_sweep(spec):
    """'NAME:start:stop:count' -> (name, lambdas)."""
    parts = spec.split(":")
    if len(parts) != 4:
        raise ParseError("sweep spec must be NAME:start:stop:count", field="--sweep")
    try:
        a, b, n = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError as exc:
        raise ParseError(f"bad sweep spec: {exc}", field="--sweep")
    if n < 2:
        raise ParseError("sweep needs at least two grid points", field="--sweep")
    return parts[0], np.linspace(a, b, n)


def family_from_document(doc, lambdas):
    if "builtin" in doc:
        tag, p = doc["builtin"], doc.get("params", [])
        if tag == "hartman":
            a, b, c, eps = p
            return hartman_family(lambdas, a, b, c, eps)
        if tag == "quadratic":
            return quadratic_family(lambdas)
        raise ParseError(f"no parameter family for builtin {tag!r}", known=["hartman", "quadratic"])
    dim = int(_need(doc, "dim"))
    L = np.asarray(_need(doc, "L"), dtype=float)
    lin = [(L[i, j], [int(k == j) for k in range(dim)], i) for i in range(dim) for j in range(dim) if L[i, j]]
    base = PolyMap(dim, list(doc.get("terms", [])) + lin, allow_low_degree=True)
    direction = PolyMap(dim, _need(doc, "lambda_terms"), allow_low_degree=True)
    return affine_family(base, direction, lambdas, doc.get("name", "family"), float(doc.get("delta", 1.0)))


# ---------------------------------------------------------------------------
# output


def clean(obj):
    """numpy -> python, non-finite floats -> strings, for stable JSON."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(clean(obj), sort_keys=True, indent=2) + "\n")


def write_samples(out, report):
    s = report.samples
    X, RX, res = s["x"], s["Rx"], s["residual"]
    d = X.shape[1]
    with open(out / "conjugacy_samples.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(d)] + [f"R{i + 1}" for i in range(d)] + ["residual"])
        for x, r, e in zip(X, RX, res):
            w.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in r] + [repr(float(e))])
    if s.get("DR") is None:
        return
    P, D = s["pairs"], s["DR"]
    with open(out / "derivative_pairs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair", "member"] + [f"x{i + 1}" for i in range(d)]
                   + [f"DR{i + 1}{j + 1}" for i in range(d) for j in range(d)])
        for k, (x, J) in enumerate(zip(P, D)):
            w.writerow([k // 2, k % 2] + [repr(float(v)) for v in x] + [repr(float(v)) for v in J.ravel()])


def write_sweep(out, sw):
    d = len(sw.rows[0]["p"]) if sw.rows else 0
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda"] + [f"p{i + 1}" for i in range(d)]
                   + ["contraction", "status", "plan_delta", "probe", "next_sup", "next_dsup"])
        for k, row in enumerate(sw.rows):
            nxt = sw.neighbor_sup[k] if k < len(sw.neighbor_sup) else None
            dnx = sw.neighbor_dsup[k] if k < len(sw.neighbor_dsup) else None
            w.writerow([repr(row["lambda"])] + [repr(v) for v in row["p"]]
                       + [repr(row["contraction"]), row["status"], repr(row.get("plan_delta", "")),
                          repr(row.get("probe", "")), "" if nxt is None else repr(nxt),
                          "" if dnx is None else repr(dnx)])


# ---------------------------------------------------------------------------
# commands


def hartman_probe(R, r):
    """(R(x)_y - y)/(xz) at x ~ 0, z = r/2: the xz coefficient of R."""
    x = np.array([[1e-30 * r, 0.0, 0.5 * r]])
    return float((R(x)[0, 1] - x[0, 1]) / (x[0, 0] * x[0, 2]))


def cmd_classify(args, doc):
    T = map_from_document(doc)
    rep = classify(T.L, args.alpha)
    return {"classification": rep.to_dict()}, {}


def cmd_linearize(args, doc, out):
    T = map_from_document(doc)
    res = linearize_map(T, args.alpha, args.tol_tail, args.samples, args.seed, verify=True)
    if out is not None and res.report is not None:
        write_samples(out, res.report)
    body = res.to_dict()
    body["map"] = {"name": T.name, "dim": T.dim, "delta": T.delta}
    return body, {}


def cmd_flow(args, doc, out):
    field = field_from_document(doc)
    T = time_one_map(field, args.h)
    body = {"field": {"name": field.name, "dim": field.dim, "DX0": field.DX0, "h": args.h},
            "time_one": {"exp_error": T.exp_error,
                         "eigenvalue_moduli": np.sort(np.abs(np.linalg.eigvals(T.L.entries)))}}
    body["critical_point"] = classify_critical_point(field, args.alpha).to_dict()
    if field.dim == 3:
        ok, diag = shilnikov_check(field)
        body["shilnikov"] = {"holds": ok, **diag}
    if args.linearize:
        res = linearize_map(T, args.alpha, args.tol_tail, args.samples, args.seed, verify=True)
        if out is not None and res.report is not None:
            write_samples(out, res.report)
        body["linearization"] = res.to_dict()
    return body, {}


def cmd_sweep(args, doc, out):
    if not args.sweep:
        raise ParseError("sweep needs --sweep NAME:start:stop:count")
    name, lam = parse_sweep(args.sweep)
    fam = family_from_document(doc, lam)
    probe = hartman_probe if doc.get("builtin") == "hartman" else None
    sw = sweep_linearizations(fam, args.alpha, args.samples, args.tol_tail, args.seed, probe=probe)
    fine = sweep_linearizations(fam.refined(), args.alpha, args.samples, args.tol_tail, args.seed, probe=probe,
                                delta=sw.delta)
    if out is not None:
        write_sweep(out, sw)
    body = {"parameter": name, "sweep": sw.to_dict(),
            "refined": {"metric": fine.metric, "dmetric": fine.dmetric, "errors": fine.errors},
            "refinement_ratio": fine.metric / sw.metric if sw.metric else None}
    if probe is not None and doc.get("builtin") == "hartman":
        a, b, c, eps = doc["params"]
        body["closed_form_error"] = max(abs(r["probe"] - (b + r["lambda"]) * eps / (b + r["lambda"] - a * c))
                                        for r in sw.rows if "probe" in r)
    return body, {}


# ---------------------------------------------------------------------------
# gallery


def _g_hartman_nonresonant(seed):
    res = linearize_map(builtin("hartman", [4, 3, 0.5, 1]), 0.5, 1e-10, 2000, seed)
    r = res.report.residual_sup
    return r <= 1e-8, {"residual_sup": r, "coefficient": hartman_probe(res.R, res.effective_radius)}


def _g_hartman_resonant(seed):
    try:
        linearize_map(builtin("hartman", [4, 2, 0.5, 1]), 0.5, 1e-10, 2000, seed)
    except SeriesDiverged as exc:
        return exc.diagnostic.get("term_ratio", 0.0) >= 0.999, {"error": exc.to_dict()}
    return False, {"error": None}


def _g_sternberg(seed):
    T = builtin("sternberg", [0.5])
    hol = {}
    for r in (1e-2, 1e-4):
        hol[repr(r)] = estimate_holder(T.with_delta(r), 0.5, SamplePlan(2048, 2048, seed, r)).hol
    ratio = hol[repr(1e-4)] / hol[repr(1e-2)]
    return ratio > 2.0, {"hol": hol, "ratio": ratio}


def _g_contracting_1d(seed):
    T = MapBundle([[0.5]], PolyMap(1, [(0.1, [2], 0)]), 0.5, "quad1d")
    res = linearize_map(T, 0.9, 1e-10, 2000, seed)
    r = res.report.residual_sup
    return r <= 1e-8 and res.route == "contracting", {"residual_sup": r, "route": res.route}


def _g_contracting_2d(seed):
    T = MapBundle([[0.5, 0.1], [0.0, 0.4]], PolyMap(2, [(0.2, [2, 0], 0), (0.1, [1, 1], 1), (-0.1, [0, 2], 1)]),
                  0.5, "quad2d")
    res = linearize_map(T, 0.5, 1e-10, 1000, seed)
    r = res.report.residual_sup
    return r <= 1e-8 and res.route == "contracting", {"residual_sup": r, "route": res.route}


def _g_saddle_focus(seed):
    DX0, terms = FIELD_BUILTINS["saddle_focus"]
    field = VectorFieldDef(DX0, PolyMap(3, terms), 1.0, "saddle_focus")
    T = time_one_map(field, 1e-3)
    ok, diag = shilnikov_check(field)
    cp = classify_critical_point(field)
    return ok and T.exp_error <= 1e-6 and cp.bicircular_on_center, {
        "shilnikov": diag, "exp_error": T.exp_error, "critical_point": cp.to_dict()}


GALLERY = {
    "hartman-nonresonant": ("converges, residual <= 1e-8", _g_hartman_nonresonant),
    "hartman-resonant": ("SeriesDiverged, term ratio >= 0.999", _g_hartman_resonant),
    "sternberg-blowup": ("Hoelder estimate grows > 2x from r=1e-2 to 1e-4", _g_sternberg),
    "contracting-1d": ("contracting route, residual <= 1e-8", _g_contracting_1d),
    "contracting-2d": ("contracting route, residual <= 1e-8", _g_contracting_2d),
    "saddle-focus-flow": ("Shilnikov condition holds, DT(0) = exp(DX0)", _g_saddle_focus),
}


def cmd_examples(args):
    names = list(GALLERY)
    if args.only:
        if args.only not in GALLERY:
            raise ParseError(f"unknown gallery item {args.only!r}", known=names)
        names = [args.only]
    items, timings = {}, {}
    for name in names:
        expect, fn = GALLERY[name]
        t0 = time.perf_counter()
        try:
            ok, detail = fn(args.seed)
        except HolinearError as exc:
            ok, detail = False, {"error": exc.to_dict()}
        timings[name] = time.perf_counter() - t0
        items[name] = {"expected": expect, "passed": bool(ok), "detail": detail}
        print(f"{'PASS' if ok else 'FAIL'}  {name:<22s} {expect}  ({timings[name]:.1f} s)")
    return {"items": items, "all_passed": all(v["passed"] for v in items.values())}, timings


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="holinear", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("classify", "linearize", "flow", "sweep", "examples"):
        s = sub.add_parser(name)
        s.add_argument("--input")
        s.add_argument("--builtin")
        s.add_argument("--alpha", type=float, default=0.5)
        s.add_argument("--tol-tail", type=float, default=1e-10)
        s.add_argument("--samples", type=int, default=10_000)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", default=".")
        s.add_argument("--only")
        s.add_argument("--sweep")
        if name == "flow":
            s.add_argument("--h", type=float, default=1e-3, help="RK4 step, must divide 1")
            s.add_argument("--linearize", action="store_true", help="also linearize the time-one map")
    return p


def _config(args):
    keys = ("command", "alpha", "tol_tail", "samples", "seed", "only", "sweep", "h", "linearize")
    return {k: getattr(args, k) for k in keys if hasattr(args, k)}


def run(argv=None):
    """Parse, dispatch, write report.json/timings.json; returns the exit code."""
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"schema_version": SCHEMA_VERSION, "command": args.command, "config": _config(args)}
    timings = {}
    code = EXIT_OK
    t0 = time.perf_counter()
    try:
        for v, name in ((args.alpha, "alpha"), (args.tol_tail, "tol_tail")):
            if not v > 0:
                raise ParseError(f"{name} must be positive", field=name)
        if args.samples < 1:
            raise ParseError("samples must be positive", field="samples")
        if args.command == "examples":
            body, timings = cmd_examples(args)
            if not body["all_passed"]:
                code = 1
        else:
            doc = read_document(args)
            report["input"] = doc
            report["input_digest"] = hashlib.sha256(_canonical(doc).encode()).hexdigest()
            if args.command == "classify":
                body, timings = cmd_classify(args, doc)
            elif args.command == "linearize":
                body, timings = cmd_linearize(args, doc, out)
            elif args.command == "flow":
                body, timings = cmd_flow(args, doc, out)
            else:
                body, timings = cmd_sweep(args, doc, out)
        report["result"] = body
        report["error"] = None
    except HolinearError as exc:
        report["result"] = None
        report["error"] = exc.to_dict()
        code = exc.code
        print(f"error: {type(exc).__name__}: {exc.message}", file=sys.stderr)
    timings["total"] = time.perf_counter() - t0
    write_json(out / "report.json", report)
    write_json(out / "timings.json", timings)
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
