"""Command line harness: ``sdl run <config>``, ``sdl sweep <dir>``, ``sdl verify [--fast]``.

Configs are YAML files::

    domain:
      builder: icosphere          # icosphere | flat_torus | disk | mesh
      params: {subdivisions: 4}
    task: spectrum                # see TASKS
    params: {count: 8}
    seed: 0
    output: out/sphere

Exit status: 0 when every task-level check passed, 1 when a check failed,
2 for invalid configs, 3 for solver failures.  The thread count for BLAS
kernels comes from ``SDL_THREADS`` (default 1) and is recorded in the manifest.
"""

from __future__ import annotations

import argparse
import ast
import json
import math
import os
import sys
import time
import traceback
from pathlib import Path
from typing import Any

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _set_threads() -> int:
    n = int(os.environ.get("SDL_THREADS", "1"))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))
    return n


# ----------------------------------------------------------------------------
# config schema

DOMAIN_PARAMS = {
    "icosphere": {"subdivisions": 4},
    "flat_torus": {"side_lengths": [1.0, 1.0], "resolution": 64},
    "disk": {"radial_resolution": 20},
    "mesh": {"path": None},
}

TASKS: dict[str, dict[str, Any]] = {
    "spectrum": {
        "problem": "laplace",  # laplace | schrodinger | steklov | robin
        "count": 8,
        "density": "1",
        "potential": "0",
        "zero_tol": None,
        "residual_tol": 1e-6,
        "expected": None,  # list of eigenvalues starting at the first reported index
        "rtol": 0.01,
        "save_vectors": False,
    },
    "optimize-density": {
        "beta0": "1",
        "damping": 0.5,
        "floor": 1e-8,
        "max_iters": 200,
        "tol": 1e-4,
        "patience": 10,
        "cluster_gap": 0.5,
        "ambient_k": None,
        "recenter": None,
        "slack": 0.02,
    },
    "optimize-steklov": {
        "rho0": "1",
        "damping": 0.5,
        "floor": 1e-8,
        "max_iters": 200,
        "tol": 1e-4,
        "patience": 10,
        "cluster_gap": 0.5,
        "recenter": None,
        "check_tol": 0.02,
    },
    "harmonic-solve": {
        "initial": "identity",  # identity | circle | constant
        "perturbation": 0.0,
        "tol": 1e-5,
        "max_iters": 20000,
        "indices": False,
        "zero_tol": None,
    },
    "gl-continuation": {
        "initial": "identity",
        "schedule": None,
        "delta0": 0.5,
        "R0": 2.0,
        "tol": 1e-6,
        "max_iters": 50000,
    },
    "verify": {"fast": False},
}

TOP_KEYS = {"domain", "task", "params", "seed", "output", "export_mesh"}


def _validate(cfg: Any, base: Path) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    task = cfg.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {sorted(TASKS)}")
    params = dict(TASKS[task])
    given = cfg.get("params") or {}
    if not isinstance(given, dict):
        raise ConfigError("params must be a mapping")
    bad = set(given) - set(params)
    if bad:
        raise ConfigError(f"unknown params for {task}: {sorted(bad)}")
    params.update(given)
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    out = cfg.get("output")
    if not isinstance(out, str) or not out:
        raise ConfigError("output directory must be given")
    out_path = Path(out)
    if not out_path.is_absolute():
        out_path = base / out_path
    dom = None
    if task != "verify":
        d = cfg.get("domain")
        if not isinstance(d, dict) or d.get("builder") not in DOMAIN_PARAMS:
            raise ConfigError(f"domain.builder must be one of {sorted(DOMAIN_PARAMS)}")
        if set(d) - {"builder", "params"}:
            raise ConfigError(f"unknown domain keys: {sorted(set(d) - {'builder', 'params'})}")
        dp = dict(DOMAIN_PARAMS[d["builder"]])
        extra = set(d.get("params") or {}) - set(dp)
        if extra:
            raise ConfigError(f"unknown domain params: {sorted(extra)}")
        dp.update(d.get("params") or {})
        if d["builder"] == "mesh":
            if not dp["path"]:
                raise ConfigError("mesh builder needs a path")
            p = Path(dp["path"])
            dp["path"] = str(p if p.is_absolute() else base / p)
        dom = {"builder": d["builder"], "params": dp}
    return {
        "domain": dom,
        "task": task,
        "params": params,
        "seed": seed,
        "output": out_path,
        "export_mesh": bool(cfg.get("export_mesh", False)),
    }


def load_config(path) -> dict:
    import yaml

    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return _validate(raw, path.parent)


# ----------------------------------------------------------------------------
# field expressions: arithmetic over vertex coordinates

_FUNCS = {"sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "arctan2", "clip", "maximum", "minimum", "where"}
_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
    ast.Compare, ast.Gt, ast.Lt, ast.GtE, ast.LtE,
)


def eval_field(expr, coords, n: int):
    """Evaluate a scalar expression in x, y, z, r, theta, pi on n points."""
    import numpy as np

    if isinstance(expr, (int, float)) and not isinstance(expr, bool):
        return np.full(n, float(expr))
    if not isinstance(expr, str):
        raise ConfigError(f"field expression must be a number or string, got {expr!r}")
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad expression {expr!r}: {exc}") from exc
    names = {"x": coords[:, 0], "y": coords[:, 1], "z": coords[:, 2] if coords.shape[1] > 2 else np.zeros(n)}
    names["r"] = np.linalg.norm(coords, axis=1)
    names["theta"] = np.arctan2(names["y"], names["x"])
    names["pi"] = math.pi
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ConfigError(f"disallowed syntax in {expr!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(f"unknown function in {expr!r}")
        if isinstance(node, ast.Name) and node.id not in names and node.id not in _FUNCS:
            raise ConfigError(f"unknown name {node.id!r} in {expr!r}")
    env = {k: getattr(np, k) for k in _FUNCS}
    env.update(names)
    val = eval(compile(tree, "<field>", "eval"), {"__builtins__": {}}, env)
    return np.broadcast_to(np.asarray(val, dtype=float), (n,)).copy()


# ----------------------------------------------------------------------------
# tasks


def _build_domain(dom):
    from . import domain
    from .export import read_mesh

    b, p = dom["builder"], dom["params"]
    try:
        if b == "icosphere":
            return domain.build_icosphere(int(p["subdivisions"]))
        if b == "flat_torus":
            return domain.build_flat_torus(p["side_lengths"], p["resolution"])
        if b == "disk":
            return domain.build_disk_mesh(int(p["radial_resolution"]))
        return read_mesh(p["path"])
    except (ValueError, TypeError, KeyError, OSError) as exc:
        raise ConfigError(f"cannot build domain: {exc}") from exc


def _initial_map(man, name: str, amplitude: float, rng):
    import numpy as np

    from .harmonic import normalize_rows

    P = man.positions
    if name == "identity":
        if man.elements is None or np.abs(np.linalg.norm(P, axis=1) - 1).max() > 1e-9:
            raise ConfigError("identity map needs a unit-sphere domain")
        U = P.copy()
        if amplitude:
            U = normalize_rows(U + amplitude * rng.standard_normal(U.shape))
        return U
    if name == "circle":
        ang = 2 * np.pi * P[:, 0] / (man.params.get("side_lengths", [1.0])[0] if man.elements is None else 1.0)
        if amplitude:
            ang = ang + amplitude * rng.standard_normal(len(ang))
        return np.stack([np.cos(ang), np.sin(ang), np.zeros_like(ang)], 1)
    if name == "constant":
        U = np.zeros((man.vertex_count, 3))
        U[:, 2] = 1.0
        return U
    raise ConfigError(f"unknown initial map {name!r}")


def _task_spectrum(man, p, out, rng, record):
    import numpy as np

    from . import spectral
    from .export import write_matrix, write_spectrum_csv

    kind, count = p["problem"], int(p["count"])
    if kind == "laplace":
        beta = eval_field(p["density"], man.positions, man.vertex_count)
        res = spectral.weighted_laplace_spectrum(man, beta, count, p["zero_tol"])
        op = "weighted_laplace_spectrum"
    elif kind == "schrodinger":
        V = eval_field(p["potential"], man.positions, man.vertex_count)
        res = spectral.schrodinger_spectrum(man, V, count, p["zero_tol"])
        op = "schrodinger_spectrum"
    elif kind in ("steklov", "robin"):
        if not man.has_boundary:
            raise ConfigError(f"{kind} problem needs a domain with boundary")
        Q = man.positions[man.boundary]
        if kind == "steklov":
            rho = eval_field(p["density"], Q, len(Q))
            res = spectral.steklov_spectrum(man, rho, count, p["zero_tol"])
            op = "steklov_spectrum"
        else:
            v = eval_field(p["potential"], Q, len(Q))
            res = spectral.boundary_schrodinger_spectrum(man, v, count, p["zero_tol"])
            op = "boundary_schrodinger_spectrum"
    else:
        raise ConfigError(f"unknown spectrum problem {kind!r}")
    write_spectrum_csv(res, out / "spectrum.csv", {"residual_tol": p["residual_tol"]})
    record.output("spectrum.csv", op, zero_tol=res.zero_tol, residual_tol=p["residual_tol"])
    if p["save_vectors"]:
        write_matrix(out / "eigenvectors.txt", res.eigenvectors, {"problem": res.problem_tag})
        record.output("eigenvectors.txt", op)
    record.check("residuals", bool(np.all(res.residuals <= p["residual_tol"])), float(res.residuals.max()))
    if p["expected"] is not None:
        exp = np.asarray(p["expected"], dtype=float)
        got = res.eigenvalues[: len(exp)]
        err = np.abs(got - exp) / np.maximum(np.abs(exp), 1.0)
        record.check("expected_eigenvalues", bool(len(got) == len(exp) and np.all(err <= p["rtol"])), float(err.max()))
    record.summary.update(
        problem=res.problem_tag,
        first_index=res.first_index,
        eigenvalues=[float(v) for v in res.eigenvalues],
        zero_tol=res.zero_tol,
    )


def _opt_params(p, keys, seed):
    from .optimize import OptimizeParams

    kw = {k: p[k] for k in keys if p.get(k) is not None}
    return OptimizeParams(seed=seed, **kw)


def _trace_rows(trace):
    return [(r.iteration, r.F, r.gap, r.beta_change, r.map_rank, r.damping, r.residual) for r in trace.iterations]


def _task_optimize_density(man, p, out, rng, record):
    import numpy as np

    from . import optimize
    from .domain import dirichlet_energy
    from .export import OPTIMIZE_COLUMNS, write_map_checkpoint, write_matrix, write_rows_csv

    beta0 = eval_field(p["beta0"], man.positions, man.vertex_count)
    params = _opt_params(p, ["damping", "floor", "max_iters", "tol", "patience", "cluster_gap", "ambient_k", "recenter"], record.seed)
    beta, trace = optimize.maximize_F1(man, beta0, params)
    write_rows_csv(out / "trace.csv", OPTIMIZE_COLUMNS, _trace_rows(trace))
    write_matrix(out / "density.txt", beta, {"operation": "maximize_F1"})
    write_map_checkpoint(out / "final_map.txt", trace.final_map.values, "maximize_F1")
    for f in ("trace.csv", "density.txt", "final_map.txt"):
        record.output(f, "maximize_F1", tol=params.tol, damping=params.damping, floor=params.floor)
    F = trace.best_value
    twoE = 2 * dirichlet_energy(man, trace.final_map.values)
    record.summary.update(F1=F, two_energy=twoE, iterations=len(trace.iterations) - 1, reason=trace.reason)
    slack = float(p["slack"])
    record.check("converged", trace.converged, trace.iterations[-1].residual)
    chain = F <= twoE * (1 + slack)
    sphere = man.elements is not None and np.abs(np.linalg.norm(man.positions, axis=1) - 1).max() < 1e-9
    if sphere:
        bound, y = optimize.certify_upper_bound_sphere(man, beta)
        record.summary.update(certified_bound=bound, mobius_y=[float(v) for v in y.y])
        chain = chain and twoE <= bound * (1 + slack) and F <= bound * (1 + 1e-12)
        record.tolerance("certify_upper_bound_sphere", balance_tol=1e-8)
    record.summary["bound_chain"] = bool(chain)
    record.check("bound_chain", bool(chain), F)
    record.tolerance("bound_chain", slack=slack)


def _task_optimize_steklov(man, p, out, rng, record):
    from . import optimize
    from .export import OPTIMIZE_COLUMNS, write_map_checkpoint, write_matrix, write_rows_csv
    from .spectral import harmonic_extension

    if not man.has_boundary:
        raise ConfigError("optimize-steklov needs a domain with boundary")
    Q = man.positions[man.boundary]
    rho0 = eval_field(p["rho0"], Q, len(Q))
    params = _opt_params(p, ["damping", "floor", "max_iters", "tol", "patience", "cluster_gap", "recenter"], record.seed)
    rho, trace = optimize.maximize_steklov_density(man, rho0, params)
    write_rows_csv(out / "trace.csv", OPTIMIZE_COLUMNS, _trace_rows(trace))
    write_matrix(out / "density.txt", rho, {"operation": "maximize_steklov_density"})
    write_map_checkpoint(out / "final_map.txt", trace.final_map.values, "maximize_steklov_density")
    for f in ("trace.csv", "density.txt", "final_map.txt"):
        record.output(f, "maximize_steklov_density", tol=params.tol, damping=params.damping)
    fb = optimize.free_boundary_check(man, harmonic_extension(man, trace.final_map.values), tol=float(p["check_tol"]))
    record.summary.update(
        G1=trace.best_value,
        iterations=len(trace.iterations) - 1,
        interior_defect=fb.interior_defect,
        normality_defect=fb.normality_defect,
        nu2=fb.nu2,
    )
    record.tolerance("free_boundary_check", tol=fb.tol, zero_tol=fb.zero_tol)
    record.check("converged", trace.converged, trace.iterations[-1].residual)
    record.check("free_boundary", fb.passed, fb.normality_defect)


def _task_harmonic(man, p, out, rng, record):
    import numpy as np

    from . import harmonic
    from .domain import dirichlet_energy
    from .export import write_map_checkpoint

    u0 = _initial_map(man, p["initial"], float(p["perturbation"]), rng)
    u = harmonic.harmonic_flow(man, u0, tol=float(p["tol"]), max_iters=int(p["max_iters"]))
    hist = harmonic.flow_history(u)
    write_map_checkpoint(out / "map.txt", u.values, "harmonic_flow")
    record.output("map.txt", "harmonic_flow", tol=p["tol"])
    record.summary.update(
        energy=dirichlet_energy(man, u.values),
        iterations=hist.iterations,
        tangential_residual=hist.residual,
        harmonic_residual=harmonic.harmonic_residual(man, u.values),
    )
    if man.elements is not None and u.values.shape[1] == 3 and not man.has_boundary:
        record.summary["degree"] = harmonic.map_degree(man, u.values)
    if p["indices"]:
        mE = harmonic.morse_index(man, u.values, p["zero_tol"])
        sS = harmonic.spectral_index(man, u.values, p["zero_tol"])
        record.summary.update(ind_E=mE.negative_count, nul_E=mE.null_count, ind_S=sS.negative_count, nul_S=sS.null_count)
        record.tolerance("indices", zero_tol=mE.zero_tol)
    record.check("converged", bool(hist.converged), hist.residual)
    record.check("energy_non_increasing", bool(np.all(np.diff(hist.energies) <= 0)), float(np.diff(hist.energies).max(initial=0.0)))


def _task_gl(man, p, out, rng, record):
    from . import harmonic
    from .domain import dirichlet_energy
    from .export import TRACE_COLUMNS, write_map_checkpoint, write_rows_csv

    u0 = _initial_map(man, p["initial"], 0.0, rng)
    sched = p["schedule"] or harmonic.default_schedule(man)
    cfg = harmonic.GLConfig(sched[0], float(p["delta0"]), float(p["R0"]))
    u, trace = harmonic.gl_continuation(man, u0, sched, cfg, tol=float(p["tol"]), max_iters=int(p["max_iters"]))
    rows = [(t.stage, t.epsilon, t.iterations, t.dirichlet, t.potential_term, t.residual) for t in trace]
    write_rows_csv(out / "trace.csv", TRACE_COLUMNS, rows)
    write_map_checkpoint(out / "map.txt", u.values, "gl_continuation", epsilon=sched[-1])
    record.output("trace.csv", "gl_continuation", tol=p["tol"], delta0=cfg.delta0, R0=cfg.R0)
    record.output("map.txt", "gl_continuation", epsilon=sched[-1])
    pot = [t.potential_term for t in trace]
    record.summary.update(
        schedule=[float(e) for e in sched],
        projected_energy=dirichlet_energy(man, u.values),
        potential_first=pot[0],
        potential_last=pot[-1],
        harmonic_residual=harmonic.harmonic_residual(man, u.values),
    )
    record.check("stages_converged", all(t.converged for t in trace), max(t.residual for t in trace))
    record.check("potential_decreasing", all(b <= a for a, b in zip(pot, pot[1:])), pot[-1])


def _task_verify(man, p, out, rng, record):
    from .acceptance import run_all
    from .export import write_rows_csv

    results = run_all(fast=bool(p["fast"]), echo=print)
    write_rows_csv(
        out / "acceptance.csv",
        ("criterion", "name", "passed"),
        [(r.number, r.name, str(r.passed).lower()) for r in results],
    )
    record.output("acceptance.csv", "acceptance.run_all", fast=bool(p["fast"]))
    for r in results:
        record.check(f"criterion_{r.number}", r.passed, None)
    record.summary["criteria"] = {str(r.number): r.passed for r in results}


HANDLERS = {
    "spectrum": _task_spectrum,
    "optimize-density": _task_optimize_density,
    "optimize-steklov": _task_optimize_steklov,
    "harmonic-solve": _task_harmonic,
    "gl-continuation": _task_gl,
    "verify": _task_verify,
}


class _Record:
    def __init__(self, seed: int):
        self.seed = seed
        self.summary: dict[str, Any] = {}
        self.checks: dict[str, dict] = {}
        self.outputs: dict[str, dict] = {}
        self.tolerances: dict[str, dict] = {}

    def check(self, name, ok, value):
        self.checks[name] = {"passed": bool(ok), "value": value}

    def output(self, fname, operation, **tol):
        self.outputs[fname] = {"operation": operation, "tolerances": tol}

    def tolerance(self, operation, **tol):
        self.tolerances.setdefault(operation, {}).update(tol)


def _jsonable(x):
    import numpy as np

    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Path):
        return str(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def run_config(cfg: dict, threads: int | None = None) -> tuple[int, dict]:
    """Execute a validated config; returns (exit status, manifest)."""
    threads = _set_threads() if threads is None else threads
    import numpy as np

    from . import __version__
    from .export import write_mesh
    from .harmonic import ConvergenceError
    from .optimize import BalanceError, OptimizerError
    from .spectral import EigensolverError

    out: Path = cfg["output"]
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg["seed"])
    record = _Record(cfg["seed"])
    t0 = time.perf_counter()
    status, error = EXIT_OK, None
    try:
        man = _build_domain(cfg["domain"]) if cfg["domain"] else None
        if man is not None and cfg["export_mesh"]:
            write_mesh(man, out / "mesh.off")
            record.output("mesh.off", "export.write_mesh")
        HANDLERS[cfg["task"]](man, cfg["params"], out, rng, record)
        if not all(c["passed"] for c in record.checks.values()):
            status = EXIT_CHECK
    except ConfigError as exc:
        status, error = EXIT_CONFIG, str(exc)
    except (EigensolverError, ConvergenceError, OptimizerError, BalanceError, np.linalg.LinAlgError, RuntimeError) as exc:
        status, error = EXIT_SOLVER, f"{type(exc).__name__}: {exc}"
        record.summary["traceback"] = traceback.format_exc()
    wall = time.perf_counter() - t0
    summary = {"task": cfg["task"], "status": status, **record.summary, "checks": record.checks}
    _write_json(out / "summary.json", summary)
    manifest = {
        "config": {**cfg, "output": str(out)},
        "version": __version__,
        "threads": threads,
        "wall_time_s": wall,
        "outputs": record.outputs,
        "tolerances": record.tolerances,
        "checks": record.checks,
        "passed": status == EXIT_OK,
        "exit_status": status,
        "error": error,
    }
    _write_json(out / "manifest.json", manifest)
    return status, manifest


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            if k != "checks":
                out.update(_flatten(v, key + "."))
        elif isinstance(v, (int, float, str, bool)) or v is None:
            out[key] = v
        elif isinstance(v, list) and len(v) <= 32 and all(isinstance(x, (int, float)) for x in v):
            out.update({f"{key}[{i}]": x for i, x in enumerate(v)})
    return out


def sweep(configs: list[Path], out_csv: Path | None = None, jobs: int = 1) -> list[dict]:
    """Run each config in isolation; aggregate scalar summary entries into one CSV."""
    import csv
    from concurrent.futures import ProcessPoolExecutor

    results = []
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_sweep_one, configs))
    else:
        results = [_sweep_one(c) for c in configs]
    if out_csv is not None:
        keys = ["config", "status"]
        for r in results:
            keys += [k for k in r if k not in keys]
        with open(out_csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            for r in results:
                w.writerow({k: r.get(k, "") for k in keys})
    return results


def _sweep_one(path: Path) -> dict:
    row = {"config": str(path)}
    try:
        cfg = load_config(path)
        status, _ = run_config(cfg)
        row["status"] = status
        summary = json.loads((cfg["output"] / "summary.json").read_text())
        row.update({k: v for k, v in _flatten(summary).items() if k not in ("status", "traceback")})
    except ConfigError as exc:
        row.update(status=EXIT_CONFIG, error=str(exc))
    except Exception as exc:  # isolation: one failing run never aborts the sweep
        row.update(status=EXIT_SOLVER, error=f"{type(exc).__name__}: {exc}")
    return row


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sdl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_sweep = sub.add_parser("sweep", help="run every *.yaml config in a directory")
    p_sweep.add_argument("directory")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--output", default=None, help="aggregate CSV (default <directory>/sweep.csv)")
    p_ver = sub.add_parser("verify", help="run the acceptance suite")
    p_ver.add_argument("--fast", action="store_true")
    p_ver.add_argument("--output", default="sdl-verify")
    args = parser.parse_args(argv)
    threads = _set_threads()

    if args.cmd == "run":
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        status, manifest = run_config(cfg, threads)
        if manifest["error"]:
            print(manifest["error"], file=sys.stderr)
        for name, c in manifest["checks"].items():
            print(f"[{'PASS' if c['passed'] else 'FAIL'}] {name}")
        return status

    if args.cmd == "sweep":
        d = Path(args.directory)
        if not d.is_dir():
            print(f"not a directory: {d}", file=sys.stderr)
            return EXIT_CONFIG
        configs = sorted(d.glob("*.yaml"))
        out = Path(args.output) if args.output else d / "sweep.csv"
        rows = sweep(configs, out, args.jobs)
        for r in rows:
            print(f"{r['config']}: exit {r['status']}")
        return EXIT_OK if all(r["status"] == EXIT_OK for r in rows) else EXIT_CHECK

    cfg = _validate({"task": "verify", "params": {"fast": args.fast}, "output": args.output}, Path.cwd())
    status, _ = run_config(cfg, threads)
    return status


if __name__ == "__main__":
    sys.exit(main())
