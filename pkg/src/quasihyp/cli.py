"""Command-line front end: one binary, one subcommand per experiment."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .domains import ConvexBody, boundary_points, cube, ellipse, load_domain, quartic_body, rounded_quartic_body, \
    unit_ball
from .errors import CheckFailed, InputError, PreconditionError
from .filling import ModelMetric, Lengths, StarCurve, derive_constants, isoperimetric_audit, normalize_to_star, \
    random_star_curve, reduce_and_fill, replay
from .geodesy import distance_qk, hilbert_distance
from .hyperbolicity import CSV_HEADER, coupled_n, expansion_audit, hilbert_depth_delta, nonhyperbolicity_witness, \
    _complement_frames
from .metrics import qk_norm

EXIT_CODES = {InputError: 2, PreconditionError: 3, CheckFailed: 4}
TOL_NAMES = {"quad", "round", "opt", "lam_min"}

BUILTINS = {
    "disk": lambda: unit_ball(2),
    "ball3": lambda: unit_ball(3),
    "square": lambda: cube(2),
    "cube3": lambda: cube(3),
    "ellipse": ellipse,
    "quartic": quartic_body,
    "rounded_quartic": rounded_quartic_body,
}


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    tol: dict = field(default_factory=dict)
    workers: int = 1
    out: str | None = None
    formats: tuple = ("json",)
    inputs: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        # the output directory and worker count do not affect results, so they stay out of the record
        return {"command": self.command, "seed": self.seed, "tol": dict(sorted(self.tol.items())),
                "formats": list(self.formats), "inputs": self.inputs}


def _parse_tol(items: list[str]) -> dict:
    out = {}
    for item in items or []:
        name, sep, val = item.partition("=")
        if not sep or name not in TOL_NAMES:
            raise InputError(f"--tol expects NAME=VAL with NAME in {sorted(TOL_NAMES)}, got {item!r}")
        try:
            out[name] = float(val)
        except ValueError:
            raise InputError(f"--tol {name}: {val!r} is not a number") from None
    return out


def _parse_vector(text: str, key: str) -> np.ndarray:
    try:
        return np.array([float(s) for s in text.replace(",", " ").split()], dtype=float)
    except ValueError:
        raise InputError(f"--{key}: expected comma-separated numbers, got {text!r}") from None


def _domain(spec: str) -> ConvexBody:
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTINS:
            raise InputError(f"unknown builtin domain {name!r}; choose from {sorted(BUILTINS)}")
        return BUILTINS[name]()
    path = Path(spec)
    if not path.is_file():
        raise InputError(f"domain file {spec!r} not found")
    return load_domain(path)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.integer):
        return int(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _emit(cfg: RunConfig, result: dict, tables: dict[str, tuple[list, list]] | None = None) -> None:
    doc = {"version": __version__, "config": cfg.to_json(), "result": result}
    tables = tables or {}
    if cfg.out is None:
        if "csv" in cfg.formats and tables:
            for name, (header, rows) in tables.items():
                sys.stdout.write(f"# {name}\n" + _csv_text(header, rows))
        else:
            sys.stdout.write(dumps(doc))
        return
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if "json" in cfg.formats or not tables:
        (out / f"{cfg.command}.json").write_text(dumps(doc))
    header_line = f"# quasihyp {__version__} config {json.dumps(_jsonable(cfg.to_json()), sort_keys=True)}\n"
    for name, (header, rows) in tables.items():
        if "csv" in cfg.formats:
            (out / f"{name}.csv").write_text(header_line + _csv_text(header, rows))
        if "gnuplot" in cfg.formats:
            lines = ["# " + " ".join(header)] + [" ".join(_gp(v) for v in row) for row in rows]
            (out / f"{name}.dat").write_text(header_line + "\n".join(lines) + "\n")
    sys.stdout.write(dumps({"version": __version__, "written": str(out), "summary": result.get("summary")}))


def _gp(v) -> str:
    return str(v).replace(" ", "_") if isinstance(v, str) else f"{v:.12g}"


def _csv_text(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_metric(args, cfg: RunConfig) -> None:
    body = _domain(args.domain)
    p, v = _parse_vector(args.p, "p"), _parse_vector(args.v, "v")
    mv = qk_norm(body, p, v, args.k, seed=cfg.seed, tol_opt=cfg.tol.get("opt", 1e-6))
    _emit(cfg, {"summary": {"value": mv.value}, "metric": mv.to_json()})


def cmd_dist(args, cfg: RunConfig) -> None:
    body = _domain(args.domain)
    p, q = _parse_vector(args.p, "p"), _parse_vector(args.q, "q")
    opts = {"tol": cfg.tol["quad"]} if "quad" in cfg.tol else {}
    res = distance_qk(body, p, q, args.k, round_tol=cfg.tol.get("round", 1e-4), **opts)
    _emit(cfg, {"summary": {"upper": res.upper, "lower": res.lower}, "distance": res.to_json()})


def cmd_hilbert(args, cfg: RunConfig) -> None:
    body = _domain(args.domain)
    val = hilbert_distance(body, _parse_vector(args.p, "p"), _parse_vector(args.q, "q"))
    _emit(cfg, {"summary": {"value": val}, "value": val})


def cmd_expansion(args, cfg: RunConfig) -> None:
    body = _domain(args.domain)
    audit = expansion_audit(body, args.k, n_boundary=args.n_boundary, n_frames=args.n_frames, seed=cfg.seed,
                            lam_min=cfg.tol.get("lam_min", 0.05))
    rows = [r.csv_row() + ["tangential" if r.tangential else "random"] for r in audit.rows]
    _emit(cfg, {"summary": {"verdict": audit.verdict, "min_lambda": audit.min_lambda}, "audit": audit.to_json()},
          {"expansion": (CSV_HEADER + ["kind"], rows)})


def _delta_job(job):
    spec, depths, n_points, seed = job
    return hilbert_depth_delta(_domain(spec), depths, n_points, seed)


def cmd_delta4(args, cfg: RunConfig) -> None:
    depths = tuple(2.0 ** -int(j) for j in args.depth_exponents)
    jobs = [(d, depths, args.n_points, cfg.seed) for d in args.domain]
    results = _map(cfg.workers, _delta_job, jobs)
    tables, summary = {}, {}
    for spec, res in zip(args.domain, results):
        name = "delta4_" + spec.split(":")[-1].replace("/", "_").replace(".json", "")
        tables[name] = (["depth", "n_points", "delta"], [[r["depth"], r["n_points"], r["delta"]] for r in res])
        deltas = [r["delta"] for r in res]
        summary[spec] = {"deltas": deltas, "strictly_increasing": all(a < b for a, b in zip(deltas, deltas[1:])),
                         "relative_spread": (max(deltas) - min(deltas)) / max(max(deltas), 1e-300)}
    _emit(cfg, {"summary": summary, "tables": {k: v[1] for k, v in tables.items()}}, tables)


def cmd_witness(args, cfg: RunConfig) -> None:
    body = _domain(args.domain)
    if args.x is not None:
        x = _parse_vector(args.x, "x")
    else:
        x = boundary_points(body, np.eye(body.ambient_dim)[:1])[0]
    if args.frame is not None:
        V = _parse_vector(args.frame, "frame").reshape(-1, body.ambient_dim).T
    else:
        frames = _complement_frames(body, body.normals(x)[0], args.k, 0, np.random.default_rng(cfg.seed))
        if not frames:
            raise PreconditionError("no tangential k-frame at x")
        V = frames[0]
    out = []
    for gap in args.runs:
        a, b = args.a, args.a + gap
        n = args.n if args.n is not None else coupled_n(a, b)
        out.append(nonhyperbolicity_witness(body, args.k, x, V, a, b, n).to_json())
    _emit(cfg, {"summary": {"gaps": [w["gap"] for w in out]}, "rectangles": out})


def _filling_job(job):
    seed, max_n, consts, params = job
    metric = ModelMetric(*params)
    rng = np.random.default_rng(seed)
    star = random_star_curve(consts, rng, max_n, lengths=Lengths(metric, consts.T0))
    cert = reduce_and_fill(metric, star, consts)
    replay(cert, star)
    return {"seed": seed, "N": star.N, "triangles": cert.triangles, "max_diameter": cert.max_diameter}


def cmd_filling(args, cfg: RunConfig) -> None:
    metric = ModelMetric(args.C1, args.C2, args.C3, args.lam)
    consts = derive_constants(metric)
    result = {"constants": consts.to_json(), "metric": metric.to_json()}
    if args.curve:
        try:
            data = json.loads(Path(args.curve).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"curve file: {exc}") from None
        if data and isinstance(data[0], dict):
            star = StarCurve.from_json(data)
        else:
            star, rep = normalize_to_star(metric, data, consts)
            result["normalization"] = rep.to_json()
        cert = reduce_and_fill(metric, star, consts)
        replay(cert, star)
        result["certificate"] = cert.to_json()
        result["summary"] = {"triangles": cert.triangles, "N": star.N}
        _emit(cfg, result)
        return
    params = (args.C1, args.C2, args.C3, args.lam)
    jobs = [(cfg.seed * 100_003 + i, args.max_n, consts, params) for i in range(args.trials)]
    records = _map(cfg.workers, _filling_job, jobs)
    ok = all(r["triangles"] <= r["N"] and r["max_diameter"] <= consts.R for r in records)
    summary = {"trials": len(records), "all_certificates_within_N": ok,
               "message": "all certificates <= N(sigma)" if ok else "some certificate exceeds N(sigma) or R",
               "max_ratio": max((r["triangles"] / r["N"] for r in records), default=0.0)}
    if args.audit_trials:
        audit = isoperimetric_audit(metric, args.audit_trials, seed=cfg.seed, constants=consts)
        summary.update({"A": audit.A, "B": audit.B, "residual_L2_correlation": audit.correlation})
    result.update({"summary": summary, "records": records})
    rows = [[r["seed"], r["N"], r["triangles"], r["max_diameter"]] for r in records]
    _emit(cfg, result, {"filling": (["seed", "N", "triangles", "max_diameter"], rows)})
    if not ok:
        raise CheckFailed(summary["message"])


def _map(workers: int, fn, jobs: list) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output directory (stdout when omitted)")
    common.add_argument("--format", action="append", choices=["json", "csv", "gnuplot"], dest="formats")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VAL")

    parser = argparse.ArgumentParser(prog="quasihyp", description="Generalized quasi-hyperbolic metric toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metric", parents=[common], help="q^(k)(p; v) with its optimal frame")
    p.add_argument("--domain", required=True)
    p.add_argument("--p", required=True)
    p.add_argument("--v", required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_metric)

    p = sub.add_parser("dist", parents=[common], help="two-sided bracket for the integrated distance")
    p.add_argument("--domain", required=True)
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("hilbert", parents=[common], help="Hilbert distance")
    p.add_argument("--domain", required=True)
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.set_defaults(func=cmd_hilbert)

    for name in ("expansion", "report"):
        p = sub.add_parser(name, parents=[common], help="expansion-exponent audit (CSV rows per point and frame)")
        p.add_argument("--domain", required=True)
        p.add_argument("--k", type=int, required=True)
        p.add_argument("--n-boundary", type=int, default=16)
        p.add_argument("--n-frames", type=int, default=2)
        p.set_defaults(func=cmd_expansion)

    p = sub.add_parser("delta4", parents=[common], help="four-point delta of the Hilbert metric across depths")
    p.add_argument("--domain", required=True, action="append")
    p.add_argument("--k", type=int, default=None, help="accepted for symmetry; the Hilbert metric has no k")
    p.add_argument("--depth-exponents", type=int, nargs="+", default=[6, 8, 10])
    p.add_argument("--n-points", type=int, default=30)
    p.set_defaults(func=cmd_delta4)

    p = sub.add_parser("witness", parents=[common], help="slimness gap of quasi-geodesic rectangles")
    p.add_argument("--domain", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--x", default=None, help="boundary point (default: boundary hit along e1)")
    p.add_argument("--frame", default=None, help="frame columns, concatenated")
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--runs", type=float, nargs="+", default=[2.0, 4.0, 6.0], help="values of b - a")
    p.add_argument("--n", type=float, default=None, help="corner scale (default: 2 e^(b-a))")
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("filling", parents=[common], help="filling certificates on the model metric")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--max-n", type=int, default=60)
    p.add_argument("--audit-trials", type=int, default=0)
    p.add_argument("--curve", default=None, help="JSON star word or closed (x, t) polyline")
    for c in ("C1", "C2", "C3"):
        p.add_argument(f"--{c}", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.set_defaults(func=cmd_filling)
    return parser


def _inputs(args) -> dict:
    skip = {"func", "seed", "out", "formats", "workers", "tol", "command"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        if k in ("domain", "curve") and v:
            specs = v if isinstance(v, list) else [v]
            contents = []
            for s in specs:
                path = Path(s)
                contents.append(json.loads(path.read_text()) if path.is_file() else s)
            v = contents if isinstance(v, list) else contents[0]
        out[k] = v
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(args.command, args.seed, _parse_tol(args.tol), args.workers, args.out,
                        tuple(args.formats or ["json"]))
        try:
            cfg.inputs = _inputs(args)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read input: {exc}") from None
        args.func(args, cfg)
    except (InputError, PreconditionError, CheckFailed) as exc:
        code = next(c for t, c in EXIT_CODES.items() if isinstance(exc, t))
        sys.stderr.write(f"error: {exc}\n")
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
