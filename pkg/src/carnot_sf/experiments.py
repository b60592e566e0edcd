"""Experiment drivers behind the command line.

Every experiment is described by a JSON-serializable :class:`ExperimentSpec`
and returns a report dictionary.  Reports embed the spec, the tool version and
every tolerance they used, and carry no timings, so an identical spec and seed
gives a byte-identical ``report.json``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import StepTwoAlgebra, load_group, multiply
from .asymptotics import affinity_detector, average_decay_profile, kernel_membership_check
from .control import ControlSignal, _write_csv, develop, from_function
from .norms import NormModel, flat_pair, load_norm, strict_convexity_probe
from .oracle import geodesic_segment_report, oracle_distance, sublinear_ratio, submetry_gap
from .pmp import conserved_quantities, integrate_extremal, residual_check

__all__ = [
    "ExperimentSpec",
    "KINDS",
    "run_experiment",
    "run_extremal",
    "run_decay",
    "run_blowdown",
    "run_counterexample",
    "run_submetry",
    "run_sublinear",
    "run_dichotomy_suite",
    "dump_report",
    "write_report",
]

TOOL = "carnot-sf"
KINDS = ("extremal", "decay", "blowdown", "counterexample", "submetry",
         "sublinear", "dichotomy", "suite")


@dataclass
class ExperimentSpec:
    kind: str
    group: object = "heisenberg:1"
    norm: object = "euclidean"
    params: dict = field(default_factory=dict)
    output: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        unknown = set(d) - {"kind", "group", "norm", "params", "output", "seed"}
        if unknown:
            raise ValueError(f"unknown spec fields {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- helpers

def jsonable(obj):
    """Plain JSON types; non-finite floats become the strings "inf"/"nan"."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dump_report(report: dict) -> str:
    return json.dumps(jsonable(report), sort_keys=True, indent=2) + "\n"


def write_report(report: dict, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(dump_report(report))
    return path


def _header(spec: ExperimentSpec, tolerances: dict) -> dict:
    return {"tool": TOOL, "version": __version__, "spec": spec.to_dict(),
            "tolerances": tolerances}


def _norm(spec: ExperimentSpec, A: StepTwoAlgebra) -> NormModel:
    N = load_norm(spec.norm, A.rank)
    sel = spec.params.get("selection")
    if sel is not None:
        d = N.to_dict()
        d["selection"] = sel
        d["fixed_vector"] = spec.params.get("fixed_vector")
        N = load_norm(d, A.rank)
    return N


def _point(A: StepTwoAlgebra, ref):
    if ref is None:
        return A.identity()
    if isinstance(ref, dict):
        return A.point(ref["x"], ref.get("z"))
    v = np.asarray(ref, dtype=float)
    if v.shape != (A.dim,):
        raise ValueError(f"a point needs {A.dim} coordinates, got {v.shape}")
    return A.point(v[:A.rank], v[A.rank:])


def _oracle_opts(spec: ExperimentSpec, restarts: int = 16) -> dict:
    p = spec.params
    return {"n_steps": int(p.get("n_steps", 64)),
            "restarts": int(p.get("restarts", restarts)),
            "seed": int(spec.seed)}


def _write_states(path, run) -> None:
    r, m = run.a.shape[1], len(run.b)
    header = ["t"] + [f"a_{i + 1}" for i in range(r)] + [f"b_{k + 1}" for k in range(m)]
    rows = np.column_stack([run.t, run.a, np.broadcast_to(run.b, (len(run.t), m))])
    _write_csv(path, header, rows)


def _extremal(spec: ExperimentSpec):
    A = load_group(spec.group)
    N = _norm(spec, A)
    p = spec.params
    if "a0" not in p or "b" not in p:
        raise ValueError("extremal experiments need params a0 and b")
    run = integrate_extremal(A, N, p["a0"], p["b"], start=_point(A, p.get("start")),
                             T=float(p.get("T", 10.0)), dt=float(p.get("dt", 1e-3)))
    return A, N, run


# ------------------------------------------------------------ experiments

def run_extremal(spec: ExperimentSpec) -> dict:
    A, N, run = _extremal(spec)
    tol = float(spec.params.get("residual_tol", 1e-6))
    res = residual_check(A, N, run.control, run, tol)
    cons = conserved_quantities(N, run.B, run, run.control)
    end = run.trajectory.end
    report = _header(spec, {"residual_tol": tol}) | {
        "label": run.label,
        "strictly_convex": N.strictly_convex,
        "residual": res,
        "conserved": cons,
        "endpoint": {"x": end.x, "z": end.z},
        "length": run.control.length(N),
        "unit_speed": run.control.is_unit_speed(N, 1e-9),
        "passed": res["extremal_within_tol"],
    }
    if spec.output:
        out = Path(spec.output)
        run.trajectory.to_csv(out / "trajectory.csv")
        run.control.to_csv(out / "control.csv")
        _write_states(out / "states.csv", run)
        write_report(report, out)
    return report


def run_decay(spec: ExperimentSpec) -> dict:
    A, N, run = _extremal(spec)
    p = spec.params
    T = run.control.T
    ladder = p.get("T_ladder") or [2.0**k for k in range(int(math.log2(T)) + 1)]
    slack = float(p.get("slack", 0.1))
    probes = p.get("probes")
    if probes is None:
        probes = [e / N(e) for e in np.eye(A.rank)]
    speed = float(N.dual(np.asarray(p["a0"], dtype=float)))
    profiles, ok = [], True
    for k, X in enumerate(probes):
        X = np.asarray(X, dtype=float)
        prof = average_decay_profile(run.control, run.B, X, ladder)
        const = (2.0 + slack) * speed * float(N(X))
        holds = prof.bound_holds(const)
        ok &= holds
        profiles.append(prof.to_dict() | {"bound_const": const, "bound_holds": holds})
        if spec.output:
            prof.to_csv(Path(spec.output) / f"decay_{k}.csv")
    report = _header(spec, {"slack": slack}) | {"profiles": profiles, "passed": ok}
    if spec.output:
        write_report(report, spec.output)
    return report


def run_blowdown(spec: ExperimentSpec) -> dict:
    A, N, run = _extremal(spec)
    p = spec.params
    lambdas = p.get("lambdas") or [2.0**k for k in range(11)]
    window = tuple(p.get("window", (0.0, 1.0)))
    tol = float(p.get("tol", 1e-2))
    depth = int(p.get("depth", 2))
    check = kernel_membership_check(run.control, run.B, lambdas, window, tol, depth)
    affine, direction = affinity_detector(run.control)
    report = _header(spec, {"tol": tol}) | {
        "kernel_check": check,
        "affine": affine,
        "direction": direction,
        "B_direction": float(np.linalg.norm(run.B.pair(direction))),
        "passed": check["consistent"],
    }
    if spec.output:
        write_report(report, spec.output)
    return report


def _flat_direction(N: NormModel, p: dict):
    if "X" in p and "Y" in p:
        X = np.asarray(p["X"], dtype=float)
        Y = np.asarray(p["Y"], dtype=float)
        eps = float(p.get("eps", 1.0))
    else:
        pair = flat_pair(N)
        if pair is None:
            raise ValueError("no flat segment found on the unit sphere")
        v1, v2 = pair
        X, Y = 0.5 * (v1 + v2), 0.5 * (v1 - v2)
        eps = float(p.get("eps", 1.0))
    # ||X + cY|| is convex in c, so equal values at -eps, 0, eps make it constant
    vals = [float(N(X + c * Y)) for c in (-eps, 0.0, eps)]
    if max(vals) - min(vals) > 1e-12 * max(vals):
        raise ValueError(f"||X + cY|| is not constant on [-eps, eps]: {vals}")
    return X, Y, eps


def run_counterexample(spec: ExperimentSpec) -> dict:
    """Lift of ``t X + eps sin(t) Y`` along a flat piece of the unit sphere."""
    A = load_group(spec.group)
    N = _norm(spec, A)
    if N.strictly_convex or strict_convexity_probe(N):
        raise ValueError("norm strictly convex: no non-affine infinite geodesic exists")
    p = spec.params
    X, Y, eps = _flat_direction(N, p)
    T = float(p.get("T", 4 * np.pi))
    cells = int(p.get("cells", 1024))
    levels = int(p.get("levels", 3))
    rel_tol = float(p.get("rel_tol", 1e-2))
    if cells % 2**levels:
        raise ValueError("cells must be divisible by 2**levels")
    u = from_function(lambda t: X + eps * np.cos(t)[:, None] * Y, T, T / cells)
    traj = develop(A, A.identity(), u)
    opts = _oracle_opts(spec)
    windows = []
    for level in range(levels + 1):
        width = cells // 2**level
        for k in range(2**level):
            rep = geodesic_segment_report(A, N, traj, k * width, (k + 1) * width, rel_tol, **opts)
            rep["level"] = level
            windows.append(rep)
    affine, direction = affinity_detector(u)
    verified = all(w["not_beaten"] for w in windows)
    if not verified:
        verdict = f"geodesy refuted on some window at resolution N={opts['n_steps']}"
    elif affine:
        verdict = f"affine line verified at resolution N={opts['n_steps']}"
    else:
        verdict = f"non-affine infinite-geodesic candidate verified at resolution N={opts['n_steps']}"
    report = _header(spec, {"rel_tol": rel_tol}) | {
        "X": X, "Y": Y, "eps": eps, "T": T, "cells": cells,
        "unit_speed": u.is_unit_speed(N, 1e-12),
        "windows": windows,
        "all_windows_pass": verified,
        "affine": affine,
        "direction": direction,
        "oracle": opts,
        "verdict": verdict,
        "passed": verified,
    }
    if spec.output:
        out = Path(spec.output)
        traj.to_csv(out / "trajectory.csv")
        u.to_csv(out / "control.csv")
        write_report(report, out)
    return report


def run_submetry(spec: ExperimentSpec) -> dict:
    A = load_group(spec.group)
    N = _norm(spec, A)
    p = spec.params
    n = int(p.get("n_samples", 100))
    gap_tol = float(p.get("gap_tol", 1e-3))
    rel_tol = float(p.get("rel_tol", 1e-2))
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((n, A.rank))
    Y = rng.standard_normal((n, A.vdim))
    opts = _oracle_opts(spec, restarts=2)
    res = submetry_gap(A, N, list(zip(X, Y)), rel_tol, **opts)
    report = _header(spec, {"gap_tol": gap_tol, "rel_tol": rel_tol}) | res | {
        "oracle": opts,
        "passed": res["min_gap"] >= -gap_tol and res["projection_norm_ok"],
    }
    if spec.output:
        write_report(report, spec.output)
    return report


def run_sublinear(spec: ExperimentSpec) -> dict:
    """Ratios ``d(g exp(tX), h exp(tY)) / t`` and their predicted behaviour.

    For ``X = Y`` a constant ``C`` is fitted on the first ``fit_points`` rungs
    and every later ratio must stay below ``(1 + slack) C / t``.  For
    ``X != Y`` the last ratio must be within ``rel_tol`` of
    ``d(exp X, exp Y)``.
    """
    A = load_group(spec.group)
    N = _norm(spec, A)
    p = spec.params
    g, h = _point(A, p.get("g")), _point(A, p.get("h"))
    X = np.asarray(p.get("X", np.eye(A.rank)[0]), dtype=float)
    Y = np.asarray(p.get("Y", X), dtype=float)
    ladder = p.get("t_ladder") or [2.0**k for k in range(7)]
    slack = float(p.get("slack", 0.05))
    rel_tol = float(p.get("rel_tol", 0.05))
    fit_points = int(p.get("fit_points", 4))
    opts = _oracle_opts(spec)
    ratios = sublinear_ratio(A, N, g, h, X, Y, ladder, **opts)
    t = np.array([r[0] for r in ratios])
    v = np.array([r[1] for r in ratios])
    report = _header(spec, {"slack": slack, "rel_tol": rel_tol}) | {
        "ratios": ratios, "same_direction": bool(np.array_equal(X, Y)), "oracle": opts,
    }
    if np.array_equal(X, Y):
        C = float(np.max(v[:fit_points] * t[:fit_points]))
        report |= {"C": C, "C_finite": math.isfinite(C),
                   "passed": math.isfinite(C) and bool(np.all(v <= (1 + slack) * C / t))}
    else:
        limit = oracle_distance(A, N, A.point(X), A.point(Y), **opts)
        err = abs(v[-1] - limit) / limit
        report |= {"limit": limit, "last_rel_error": err, "passed": bool(err <= rel_tol)}
    if spec.output:
        out = Path(spec.output)
        _write_csv(out / "ratios.csv", ["t", "ratio"], np.column_stack([t, v]))
        write_report(report, out)
    return report


def _line_segment_check(A, N, X, T, rel_tol, opts) -> dict:
    X = np.asarray(X, dtype=float)
    X = X / N(X)
    u = ControlSignal(T / 256, np.tile(X, (256, 1)))
    rep = geodesic_segment_report(A, N, develop(A, A.identity(), u), 0, 256, rel_tol, **opts)
    return rep | {"X": X, "T": T}


def run_dichotomy_suite(spec: ExperimentSpec) -> dict:
    """Strictly convex norms: curved extremals eventually stop being geodesic
    while lines never do.  Other norms: the flat-sphere counterexample.

    ``params["cases"]`` lists ``{"group", "norm", "sweep"}`` entries; the sweep
    is a list of ``{"a0", "b"}`` extremals (``b = 0`` gives lines).
    """
    p = spec.params
    cases = p.get("cases") or [
        {"group": "heisenberg:1", "norm": "euclidean",
         "sweep": [{"a0": [1.0, 0.0], "b": [1.0]}, {"a0": [0.6, 0.8], "b": [-2.0]},
                   {"a0": [1.0, 0.0], "b": [0.0]}]},
        {"group": "heisenberg:1", "norm": "linf"},
        {"group": "free2:3", "norm": "euclidean",
         "sweep": [{"a0": [1.0, 0.0, 0.0], "b": [0.0, 0.0, 0.0]},
                   {"a0": [0.0, 0.6, 0.8], "b": [0.0, 0.0, 0.0]}]},
    ]
    windows = p.get("windows") or [np.pi, 2 * np.pi, 4 * np.pi, 20.0]
    line_T = float(p.get("line_T", 20.0))
    curve_tol = float(p.get("curve_rel_tol", 2e-2))
    line_tol = float(p.get("line_rel_tol", 1e-2))
    opts = _oracle_opts(spec)
    rows, results, ok = [], [], True
    for ci, case in enumerate(cases):
        A = load_group(case["group"])
        N = load_norm(case["norm"], A.rank)
        if not N.strictly_convex:
            sub = ExperimentSpec("counterexample", case["group"], case["norm"],
                                 dict(case.get("params", {})) | {k: v for k, v in p.items()
                                                                  if k in ("n_steps", "restarts")},
                                 seed=spec.seed)
            rep = run_counterexample(sub)
            good = rep["all_windows_pass"] and not rep["affine"]
            ok &= good
            rows.append([ci, case["group"], str(case["norm"]), "counterexample", "-", rep["verdict"], good])
            results.append({"case": ci, "kind": "counterexample", "report": rep, "passed": good})
            continue
        for si, ext in enumerate(case.get("sweep", [])):
            a0 = np.asarray(ext["a0"], dtype=float)
            a0 = a0 / N.dual(a0)
            if not np.any(ext["b"]):
                rep = _line_segment_check(A, N, N.select(a0), line_T, line_tol, opts)
                good = rep["not_beaten"]
                verdict = "line passes" if good else "line beaten"
                rows.append([ci, case["group"], str(case["norm"]), f"line {si}", line_T, verdict, good])
                results.append({"case": ci, "sweep": si, "kind": "line", "report": rep, "passed": good})
                ok &= good
                continue
            reps = []
            for T in windows:
                run = integrate_extremal(A, N, a0, ext["b"], T=T, dt=T / 1024)
                reps.append(geodesic_segment_report(A, N, run.trajectory, 0, 1024, curve_tol, **opts)
                            | {"T": T})
            fails = [r["T"] for r in reps if not r["not_beaten"]]
            good = bool(fails)
            verdict = f"fails from T={fails[0]:.4g}" if fails else "never beaten on tested windows"
            rows.append([ci, case["group"], str(case["norm"]), f"extremal {si}", windows[-1], verdict, good])
            results.append({"case": ci, "sweep": si, "kind": "curved extremal",
                            "windows": reps, "first_failure": fails[0] if fails else None,
                            "passed": good})
            ok &= good
    header = ["case", "group", "norm", "curve", "T", "verdict", "passed"]
    report = _header(spec, {"curve_rel_tol": curve_tol, "line_rel_tol": line_tol}) | {
        "summary": {"columns": header, "rows": rows},
        "results": results,
        "oracle": opts,
        "passed": ok,
    }
    if spec.output:
        out = Path(spec.output)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "summary.csv").open("w") as f:
            f.write(",".join(header) + "\n")
            for r in rows:
                f.write(",".join(str(c) for c in r) + "\n")
        write_report(report, out)
    return report


def run_experiment(spec: ExperimentSpec) -> dict:
    if spec.kind == "suite":
        from .acceptance import run_suite
        return run_suite(spec)[1]
    runner = {
        "extremal": run_extremal,
        "decay": run_decay,
        "blowdown": run_blowdown,
        "counterexample": run_counterexample,
        "submetry": run_submetry,
        "sublinear": run_sublinear,
        "dichotomy": run_dichotomy_suite,
    }[spec.kind]
    return runner(spec)
