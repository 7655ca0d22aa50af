"""Batch driver: ``run <config>`` solves a configured problem, ``suite <name>``
runs a verification battery on the built-in corpus.

Exit codes: 0 when every verdict passes, 1 when any verdict fails, 2 on a
configuration error (nothing is written in that case).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from . import __version__, suites
from .errors import ConfigurationError, HermitianMAError, SubsolutionError
from .forms import MeasureField
from .geometry import GridDomain, build_ball_domain, build_shell_domain, conformal_metric, identity_metric
from .laplace import solve_laplace
from .masolver import (DirichletProblem, RhsFunction, Tolerances, bounded_rhs_subsolution, lambda_limit_study,
                       perron_solve, picard_solve, solve_exponential, solve_maximal)
from .verify import manufactured_problem

log = logging.getLogger("hermitian_ma")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
TOLERANCE_KEYS = ("tol_fix", "tol_cmp", "tol_ma", "tol_b", "tol_cone")
ENV_PREFIX = "HERMITIAN_MA_"
SIGNIFICANT = 6
ZERO_FLOOR = 1e-9

# stable table schemas
CONVERGENCE_COLUMNS = ["h", "interior_nodes", "iterations", "residual_sup", "err_sup", "err_l2", "err_rms",
                       "ratio_sup", "ratio_l2", "ratio_rms"]
PROFILE_COLUMNS = ["h", "x1", "y1", "u", "exact"]
RADIAL_COLUMNS = ["h", "r", "u", "exact"]
LAMBDA_COLUMNS = ["lambda", "u_min", "u_max", "monotone_violation", "limit_gap"]
RECORD_COLUMNS = ["suite", "case", "passed", "key", "value"]

_positive = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["domain", "solver"],
    "properties": {
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "n"],
            "properties": {
                "kind": {"enum": ["ball", "shell"]},
                "n": {"enum": [1, 2]},
                "h": _positive,
                "resolutions": {"type": "array", "items": _positive, "minItems": 1},
                "radius": _positive,
                "r_in": _positive,
                "r_out": _positive,
            },
        },
        "metric": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["identity", "conformal_exp"]},
                "scale": _positive,
                "rate": {"type": "number"},
            },
        },
        "manufactured": {
            "type": "object",
            "additionalProperties": False,
            "required": ["u_star"],
            "properties": {"u_star": {"enum": ["quadratic", "quadratic_shifted", "quartic"]}},
        },
        "measure": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["zero", "constant", "gaussian"]},
                "value": {"type": "number", "minimum": 0},
                "amplitude": {"type": "number", "minimum": 0},
                "width": _positive,
                "center": {"type": "array", "items": {"type": "number"}},
            },
        },
        "rhs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["constant", "exponential"]},
                "value": {"type": "number", "minimum": 0},
                "lam": _positive,
            },
        },
        "boundary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["zero", "constant", "quadratic", "holder"]},
                "value": {"type": "number"},
                "coeff": {"type": "number"},
                "shift": {"type": "number"},
            },
        },
        "subsolution": {"enum": ["none", "manufactured", "bounded_rhs"]},
        "reference": {"enum": ["none", "manufactured", "maximal_ball"]},
        "solver": {"enum": ["picard", "perron", "maximal", "laplace", "exponential", "lambda_study"]},
        "accelerate": {"type": "boolean"},
        "lambdas": {"type": "array", "items": _positive, "minItems": 2},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: _positive for k in TOLERANCE_KEYS},
        },
        "verdicts": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "error_factor": _positive,
                "min_ratio": _positive,
                "ratio_norm": {"enum": ["sup", "l2", "rms"]},
            },
        },
        "verify": {"type": "array", "items": {"enum": list(suites.SUITES)}},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string", "minLength": 1}, "full_dump": {"type": "boolean"}},
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}


# --- canonical report content --------------------------------------------------

def canonical(x):
    """JSON-ready copy with floats rounded to a fixed number of significant digits.

    Magnitudes below ZERO_FLOOR are written as 0 so that round-off noise at
    the level of the solver tolerances cannot change the report bytes.
    """
    if isinstance(x, dict):
        return {str(k): canonical(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [canonical(v) for v in x]
    if isinstance(x, np.ndarray):
        return canonical(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not np.isfinite(x):
            return str(x)
        if abs(x) < ZERO_FLOOR:
            return 0.0
        return float(f"{x:.{SIGNIFICANT}g}")
    return x


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(canonical(obj), indent=1, sort_keys=True) + "\n")


def write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if row.get(c) is None else canonical(row.get(c)) for c in columns])


# --- configuration -----------------------------------------------------------------

def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from exc
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML/JSON: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config error at {where}: {exc.message}") from exc
    dom = cfg["domain"]
    if "h" not in dom and "resolutions" not in dom:
        raise ConfigurationError("domain needs h or resolutions")
    if dom["kind"] == "shell" and not ("r_in" in dom and "r_out" in dom):
        raise ConfigurationError("a shell domain needs r_in and r_out")
    if dom["kind"] == "ball" and ("r_in" in dom or "r_out" in dom):
        raise ConfigurationError("r_in/r_out only apply to shell domains")
    solver = cfg["solver"]
    rhs = cfg.get("rhs", {})
    if solver == "exponential" and rhs.get("kind") != "exponential":
        raise ConfigurationError("solver exponential needs rhs.kind = exponential")
    if rhs.get("kind") == "exponential" and "lam" not in rhs:
        raise ConfigurationError("rhs.kind = exponential needs lam")
    if solver == "lambda_study":
        lams = cfg.get("lambdas")
        if not lams or any(b >= a for a, b in zip(lams, lams[1:])):
            raise ConfigurationError("lambda_study needs a strictly decreasing lambdas list")
        if cfg.get("subsolution", "none") == "none":
            raise ConfigurationError("lambda_study needs a subsolution (manufactured or bounded_rhs)")
    if "manufactured" in cfg and ("measure" in cfg or "boundary" in cfg):
        raise ConfigurationError("manufactured problems derive measure and boundary data; drop those keys")
    if cfg.get("subsolution") == "manufactured" and "manufactured" not in cfg:
        raise ConfigurationError("subsolution 'manufactured' needs a manufactured block")
    if cfg.get("reference") == "manufactured" and "manufactured" not in cfg:
        raise ConfigurationError("reference 'manufactured' needs a manufactured block")
    if "center" in cfg.get("measure", {}) and len(cfg["measure"]["center"]) != 2 * dom["n"]:
        raise ConfigurationError("measure.center needs 2n coordinates")
    if cfg.get("verify") and "energy" in cfg["verify"] and dom["n"] != 2:
        raise ConfigurationError("the energy suite needs n = 2")


def env_tolerances(environ=None) -> dict:
    """Tolerance defaults from HERMITIAN_MA_TOL_* variables."""
    environ = os.environ if environ is None else environ
    out = {}
    for key in TOLERANCE_KEYS:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is None:
            continue
        try:
            val = float(raw)
        except ValueError as exc:
            raise ConfigurationError(f"{ENV_PREFIX + key.upper()} is not a number: {raw!r}") from exc
        if not val > 0:
            raise ConfigurationError(f"{ENV_PREFIX + key.upper()} must be positive")
        out[key] = val
    return out


def _sq(z):
    return np.sum(np.abs(z) ** 2, axis=1)


U_STAR = {
    "quadratic": lambda z: _sq(z),
    "quadratic_shifted": lambda z: _sq(z) - 1.0,
    "quartic": lambda z: _sq(z) ** 2 / 4.0,
}


def build_domain(cfg: dict, h: float) -> GridDomain:
    dom = cfg["domain"]
    if dom["kind"] == "ball":
        return build_ball_domain(dom.get("radius", 1.0), h, dom["n"])
    return build_shell_domain(dom["r_in"], dom["r_out"], h, dom["n"])


def build_metric(cfg: dict, d: GridDomain):
    m = cfg.get("metric", {})
    if m.get("kind", "identity") == "identity":
        return identity_metric(d, m.get("scale", 1.0))
    rate, scale = m.get("rate", 1.0), m.get("scale", 1.0)
    return conformal_metric(d, lambda z: scale * np.exp(rate * z[:, 0].real), name="conformal_exp")


def build_rhs(cfg: dict) -> RhsFunction:
    r = cfg.get("rhs", {})
    if r.get("kind", "constant") == "constant":
        return RhsFunction.constant(r.get("value", 1.0))
    return RhsFunction.exponential(r["lam"])


def build_measure(cfg: dict, d: GridDomain) -> MeasureField:
    m = cfg.get("measure", {"kind": "zero"})
    kind = m.get("kind", "zero")
    if kind == "zero":
        return MeasureField.zero(d)
    if kind == "constant":
        return MeasureField.from_density(d, m.get("value", 1.0))
    c = np.asarray(m.get("center", [0.0] * d.dim))
    bump = m.get("amplitude", 1.0) * np.exp(-np.sum((d.points - c) ** 2, axis=1) / (2 * m.get("width", 0.3) ** 2))
    return MeasureField.from_density(d, m.get("value", 0.0) + bump)


def build_boundary(cfg: dict, d: GridDomain) -> np.ndarray:
    b = cfg.get("boundary", {"kind": "zero"})
    kind = b.get("kind", "zero")
    if kind == "zero":
        return np.zeros(d.boundary.size)
    if kind == "constant":
        return np.full(d.boundary.size, float(b.get("value", 0.0)))
    if kind == "quadratic":
        return d.boundary_values(lambda z: b.get("coeff", 1.0) * _sq(z) + b.get("value", 0.0))
    return d.boundary_values(lambda z: np.sqrt(np.abs(z[:, 0].real - b.get("shift", 0.0))))


@dataclass
class Case:
    """Everything needed to solve one resolution, built before any output is written."""
    h: float
    domain: GridDomain
    g: object
    problem: DirichletProblem | None
    phi: np.ndarray
    exact: np.ndarray | None
    notes: dict = field(default_factory=dict)


def build_case(cfg: dict, h: float, overrides: dict) -> Case:
    d = build_domain(cfg, h)
    g = build_metric(cfg, d)
    F = build_rhs(cfg)
    exact, problem = None, None
    sub_kind = cfg.get("subsolution")
    if "manufactured" in cfg:
        u_star = U_STAR[cfg["manufactured"]["u_star"]]
        problem = manufactured_problem(u_star, F, g, d)
        if sub_kind in ("none", "bounded_rhs"):
            problem.subsolution = None
        if cfg.get("reference", "manufactured") == "manufactured":
            exact = d.evaluate(u_star)
        phi = problem.phi
    else:
        phi = build_boundary(cfg, d)
        if cfg["solver"] in ("picard", "perron", "exponential", "lambda_study"):
            problem = DirichletProblem(d, g, build_measure(cfg, d), F, phi)
    if cfg.get("reference") == "maximal_ball":
        if d.kind != "ball" or cfg.get("metric", {}).get("kind", "identity") != "identity" or np.any(phi):
            raise ConfigurationError("reference maximal_ball needs a ball, the identity metric and zero data")
        scale = cfg.get("metric", {}).get("scale", 1.0)
        radius = d.radii[0]
        exact = d.evaluate(lambda z: scale * (radius**2 - _sq(z)))
    if problem is not None:
        problem.tolerances = replace(problem.tolerances, **overrides)
        tol = problem.tolerances
    else:
        tol = Tolerances.for_problem(d, phi, 0.0, g, **overrides)
    return Case(h, d, g, problem, phi, exact, {"tolerances": tol})


# --- running ------------------------------------------------------------------------

class Timer:
    def __init__(self):
        self.entries = {}

    def __call__(self, name):
        timer = self

        class _Span:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.entries[name] = time.perf_counter() - self.t0
                return False

        return _Span()


def solve_case(cfg: dict, case: Case) -> tuple:
    """Returns (solution, solve-report dict, extra verdicts, extra tables)."""
    solver = cfg["solver"]
    accelerate = cfg.get("accelerate", True)
    d, g, p = case.domain, case.g, case.problem
    tol = case.notes["tolerances"]
    verdicts, tables = {}, {}
    if solver == "laplace":
        u = solve_laplace(g, d, case.phi)
        return u, {"converged": True}, verdicts, tables
    if solver == "maximal":
        u, rep = solve_maximal(g, d, case.phi, tolerances=tol, return_report=True)
        verdicts["residual"] = rep.residual_sup <= tol.tol_ma
        return u, rep.as_dict(), verdicts, tables
    if solver == "picard":
        u, rep = picard_solve(p, accelerate=accelerate)
    elif solver == "perron":
        if p.subsolution is None and cfg.get("subsolution") == "bounded_rhs":
            p.subsolution = bounded_rhs_subsolution(p, accelerate=accelerate)
        u, rep = perron_solve(p, accelerate=accelerate)
    elif solver == "exponential":
        u, rep = solve_exponential(p.F.lam, p.mu, p.phi, g, d, subsolution=p.subsolution, tolerances=tol,
                                   accelerate=accelerate)
        verdicts["uniqueness"] = rep.notes.get("uniqueness_gap", 0.0) <= tol.tol_cmp
    else:
        sub = p.subsolution if p.subsolution is not None else bounded_rhs_subsolution(p, accelerate=accelerate)
        study = lambda_limit_study(p.mu, p.phi, g, d, cfg["lambdas"], sub, tolerances=tol)
        I = d.interior
        verdicts["lambda_monotone"] = study.monotone_violation <= tol.tol_cmp
        verdicts["lambda_limit"] = study.limit_gap <= 2 * tol.tol_cmp
        tables["lambda"] = [{"lambda": lam, "u_min": float(np.min(s[I])), "u_max": float(np.max(s[I])),
                             "monotone_violation": study.monotone_violation, "limit_gap": study.limit_gap}
                            for lam, s in zip(study.lambdas, study.solutions)]
        # the study shifts the data by the subsolution's sup; the reference is unshifted
        case.exact = None
        return study.reference, {"converged": True, "shift": study.shift, "limit_gap": study.limit_gap,
                                 "monotone_violation": study.monotone_violation}, verdicts, tables
    verdicts["converged"] = bool(rep.converged)
    return u, {**rep.as_dict(), **{k: v for k, v in rep.notes.items() if np.isscalar(v)}}, verdicts, tables


def errors(u, exact, d: GridDomain) -> dict:
    """Sup, integrated L2 (sqrt(h^2n sum e^2)) and root-mean-square errors over interior nodes."""
    I = d.interior
    e = np.abs(u[I] - exact[I])
    return {"err_sup": float(np.max(e)), "err_l2": float(np.sqrt(np.sum(e**2) * d.h**d.dim)),
            "err_rms": float(np.sqrt(np.mean(e**2)))}


def profile_rows(u, exact, d: GridDomain, h: float) -> tuple:
    """The z_2 = 0 plane (the whole grid for n = 1) and the positive x_1 axis."""
    a = d.active
    pts = d.points
    on_plane = np.all(np.isclose(pts[:, 2:], 0.0), axis=1) if d.n > 1 else np.ones(d.size, dtype=bool)
    plane = np.flatnonzero(on_plane & np.isin(np.arange(d.size), a))
    axis = plane[np.isclose(pts[plane, 1], 0.0) & (pts[plane, 0] >= 0)]
    axis = axis[np.argsort(pts[axis, 0])]
    ex = (lambda k: None if exact is None else float(exact[k]))
    prof = [{"h": h, "x1": pts[k, 0], "y1": pts[k, 1], "u": u[k], "exact": ex(k)} for k in plane]
    rad = [{"h": h, "r": pts[k, 0], "u": u[k], "exact": ex(k)} for k in axis]
    return prof, rad


def run_config(cfg: dict, out_dir: Path, overrides: dict) -> int:
    dom = cfg["domain"]
    hs = dom.get("resolutions") or [dom["h"]]
    tol_over = {**overrides, **cfg.get("tolerances", {})}
    cases = [build_case(cfg, h, tol_over) for h in hs]  # configuration errors surface here
    out_dir.mkdir(parents=True, exist_ok=True)
    timer = Timer()
    rules = cfg.get("verdicts", {})
    factor = rules.get("error_factor", 5.0)
    verdicts, solves, conv, prof, rad, lam_rows = {}, [], [], [], [], []
    for case in cases:
        d = case.domain
        tag = f"h{case.h:g}"
        try:
            with timer(f"solve_{tag}"):
                u, rep, v_extra, tables = solve_case(cfg, case)
        except SubsolutionError as exc:
            verdicts[f"subsolution_{tag}"] = False
            solves.append({"h": case.h, "error": str(exc), "precondition": "subsolution",
                           "report": exc.report if isinstance(exc.report, dict) else None})
            continue
        except HermitianMAError as exc:
            verdicts[f"solve_{tag}"] = False
            solves.append({"h": case.h, "error": f"{type(exc).__name__}: {exc}"})
            continue
        verdicts.update({f"{k}_{tag}": v for k, v in v_extra.items()})
        lam_rows += tables.get("lambda", [])
        row = {"h": case.h, "interior_nodes": int(d.interior.size), "iterations": rep.get("iterations"),
               "residual_sup": rep.get("residual_sup")}
        if case.exact is not None:
            row.update(errors(u, case.exact, d))
            verdicts[f"error_{tag}"] = row["err_sup"] <= factor * case.h
        conv.append(row)
        solves.append({"h": case.h, "grid": {"shape": list(d.shape), "interior": int(d.interior.size),
                                             "boundary": int(d.boundary.size)},
                       "tolerances": vars(case.notes["tolerances"]), "report": rep})
        p, r = profile_rows(u, case.exact, d, case.h)
        prof += p
        rad += r
        if cfg.get("output", {}).get("full_dump"):
            dump = [{**{f"x{i}": d.points[k, i] for i in range(d.dim)}, "u": u[k]} for k in d.active]
            write_csv(out_dir / f"solution_{tag}.csv", [f"x{i}" for i in range(d.dim)] + ["u"], dump)
    for prev, cur in zip(conv, conv[1:]):
        for norm in ("sup", "l2", "rms"):
            if prev.get(f"err_{norm}") and cur.get(f"err_{norm}"):
                cur[f"ratio_{norm}"] = prev[f"err_{norm}"] / cur[f"err_{norm}"]
    if len(conv) > 1 and all("err_sup" in c for c in conv):
        norm = rules.get("ratio_norm", "sup")
        ratios = [c[f"ratio_{norm}"] for c in conv[1:]]
        verdicts[f"convergence_ratio_{norm}"] = all(x >= rules.get("min_ratio", 1.5) for x in ratios)
    records = []
    for name in cfg.get("verify", []):
        with timer(f"suite_{name}"):
            recs = suites.BATTERIES[name](cfg.get("seed", 0))
        records += recs
        verdicts[f"suite_{name}"] = all(r["passed"] for r in recs)
    passed = bool(verdicts) and all(verdicts.values())
    report = {"version": __version__, "config": cfg, "solves": solves, "verdicts": verdicts, "passed": passed,
              "convergence": conv, "records": records}
    dump_json(report, out_dir / "report.json")
    dump_json({"seconds": timer.entries}, out_dir / "timings.json")
    write_csv(out_dir / "convergence.csv", CONVERGENCE_COLUMNS, conv)
    write_csv(out_dir / "profile.csv", PROFILE_COLUMNS, prof)
    write_csv(out_dir / "radial.csv", RADIAL_COLUMNS, rad)
    if lam_rows:
        write_csv(out_dir / "lambda.csv", LAMBDA_COLUMNS, lam_rows)
    if records:
        write_csv(out_dir / "records.csv", RECORD_COLUMNS, flatten_records(records))
    for k, v in verdicts.items():
        log.info("%-28s %s", k, "pass" if v else "FAIL")
    return EXIT_OK if passed else EXIT_FAIL


def flatten_records(records) -> list:
    """Long format: one row per scalar (list entries get an index suffix)."""
    rows = []
    for r in records:
        for key in sorted(r):
            if key in ("suite", "case", "passed"):
                continue
            val = r[key]
            items = [(key, val)] if not isinstance(val, (list, tuple)) else _flatten_list(key, val)
            for k, v in items:
                rows.append({"suite": r["suite"], "case": r["case"], "passed": r["passed"], "key": k, "value": v})
    return rows


def _flatten_list(key, val):
    out = []
    for i, v in enumerate(val):
        if isinstance(v, (list, tuple)):
            out += _flatten_list(f"{key}[{i}]", v)
        else:
            out.append((f"{key}[{i}]", v))
    return out


def run_suite(name: str, seed: int, out_dir: Path, n: int | None = None) -> int:
    names = suites.suite_names(name)
    if n is not None and n != 2 and "energy" in names:
        raise ConfigurationError("the energy suite needs n = 2")
    out_dir.mkdir(parents=True, exist_ok=True)
    timer = Timer()
    records, verdicts = [], {}
    for s in names:
        with timer(s):
            recs = suites.BATTERIES[s](seed)
        records += recs
        verdicts[s] = all(r["passed"] for r in recs)
        log.info("%-12s %s (%d records)", s, "pass" if verdicts[s] else "FAIL", len(recs))
    passed = all(verdicts.values())
    report = {"version": __version__, "suite": name, "seed": seed, "verdicts": verdicts, "passed": passed,
              "records": records}
    dump_json(report, out_dir / "report.json")
    dump_json({"seconds": timer.entries}, out_dir / "timings.json")
    write_csv(out_dir / "records.csv", RECORD_COLUMNS, flatten_records(records))
    return EXIT_OK if passed else EXIT_FAIL


# --- entry point ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hermitian-ma", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP threads")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="solve the problem described by a YAML/JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    p_suite = sub.add_parser("suite", help="run a verification battery on the built-in corpus")
    p_suite.add_argument("name", help=f"one of {', '.join(suites.SUITES)} or all")
    p_suite.add_argument("--seed", type=int, default=0)
    p_suite.add_argument("--out", default="suite_out")
    p_suite.add_argument("--n", type=int, default=None, help="problem dimension (energy needs 2)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with threadpool_limits(limits=args.threads):
            if args.command == "run":
                overrides = env_tolerances()
                cfg = load_config(args.config)
                out = Path(args.out or cfg.get("output", {}).get("dir", "run_out"))
                return run_config(cfg, out, overrides)
            return run_suite(args.name, args.seed, Path(args.out), args.n)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
