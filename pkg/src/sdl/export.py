"""Text formats: OFF meshes with a YAML sidecar, spectrum and trace CSVs,
map checkpoints.

Layouts
-------
Mesh ``name.off``::

    OFF
    <vertex count> <face count> 0
    x y z            (one line per vertex, repr-exact floats; z = 0 when dim < 3)
    3 i j k          (one line per triangle)

Sidecar ``name.yaml``: ``tag``, ``dim`` and ``params`` of the builder.  A
flat torus is stored with zero faces and rebuilt from its params.

Spectrum CSV: one ``#`` comment line with problem tag and tolerances, then
``index,eigenvalue,multiplicity_group,residual``.

Map checkpoint: ``#`` header lines ``key: value`` (target_dim, on_sphere,
operation, epsilon) followed by one row of k+1 values per vertex.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from .domain import DiscreteManifold, build_flat_torus, triangle_manifold
from .spectral import SpectrumResult

__all__ = [
    "write_mesh",
    "read_mesh",
    "write_spectrum_csv",
    "read_spectrum_csv",
    "write_matrix",
    "read_matrix",
    "write_map_checkpoint",
    "read_map_checkpoint",
    "write_rows_csv",
    "TRACE_COLUMNS",
    "OPTIMIZE_COLUMNS",
]

TRACE_COLUMNS = ("stage", "epsilon", "iterations", "dirichlet", "potential_term", "residual")
OPTIMIZE_COLUMNS = ("iteration", "F1", "gap", "beta_change", "map_rank", "damping", "fixed_point_residual")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_mesh(man: DiscreteManifold, path) -> tuple[Path, Path]:
    path = Path(path)
    P = man.positions
    if P.shape[1] < 3:
        P = np.hstack([P, np.zeros((len(P), 3 - P.shape[1]))])
    faces = man.elements if man.elements is not None else np.zeros((0, 3), dtype=int)
    lines = ["OFF", f"{len(P)} {len(faces)} 0"]
    lines += [" ".join(_fmt(c) for c in row) for row in P]
    lines += ["3 " + " ".join(str(int(i)) for i in f) for f in faces]
    path.write_text("\n".join(lines) + "\n")
    side = path.with_suffix(".yaml")
    side.write_text(yaml.safe_dump({"tag": man.tag, "dim": int(man.dim), "params": _plain(man.params)}, sort_keys=True))
    return path, side


def _plain(obj):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def read_mesh(path) -> DiscreteManifold:
    path = Path(path)
    meta = yaml.safe_load(path.with_suffix(".yaml").read_text())
    tokens = path.read_text().split("\n")
    if tokens[0].strip() != "OFF":
        raise ValueError("not an OFF file")
    nv, nf, _ = (int(t) for t in tokens[1].split())
    P = np.array([[float(t) for t in tokens[2 + i].split()] for i in range(nv)]).reshape(nv, 3)
    F = np.array([[int(t) for t in tokens[2 + nv + j].split()[1:4]] for j in range(nf)], dtype=np.int64)
    dim = int(meta["dim"])
    if meta["tag"] == "flat_torus":
        p = meta["params"]
        man = build_flat_torus(p["side_lengths"], p["resolution"])
        if not np.array_equal(man.positions, P[:, :dim]):
            raise ValueError("torus positions do not match the stored parameters")
        return man
    return triangle_manifold(P, F, tag=meta["tag"], params=meta.get("params") or {})


def write_spectrum_csv(res: SpectrumResult, path, extra: Mapping[str, Any] | None = None) -> Path:
    path = Path(path)
    head = {"problem": res.problem_tag, "zero_tol": res.zero_tol, "first_index": res.first_index}
    head.update(extra or {})
    groups = res.groups
    resid = res.residuals if res.residuals.size else np.full(len(res.eigenvalues), np.nan)
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={v}" for k, v in head.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "eigenvalue", "multiplicity_group", "residual"])
    for j, lam in enumerate(res.eigenvalues):
        w.writerow([j + res.first_index, _fmt(lam), int(groups[j]), _fmt(resid[j])])
    path.write_text(buf.getvalue())
    return path


def read_spectrum_csv(path):
    """Returns (header dict, rows as a structured dict of arrays)."""
    text = Path(path).read_text().splitlines()
    head = dict(item.split("=", 1) for item in text[0][1:].split())
    rows = list(csv.DictReader(text[1:]))
    out = {
        "index": np.array([int(r["index"]) for r in rows]),
        "eigenvalue": np.array([float(r["eigenvalue"]) for r in rows]),
        "multiplicity_group": np.array([int(r["multiplicity_group"]) for r in rows]),
        "residual": np.array([float(r["residual"]) for r in rows]),
    }
    return head, out


def write_matrix(path, M, header: Mapping[str, Any] | None = None) -> Path:
    path = Path(path)
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    lines = [f"# {k}: {v}" for k, v in (header or {}).items()]
    lines += [" ".join(_fmt(x) for x in row) for row in M]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_matrix(path):
    header, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, v = line[1:].split(":", 1)
            header[k.strip()] = v.strip()
        elif line.strip():
            rows.append([float(t) for t in line.split()])
    return np.array(rows), header


def write_map_checkpoint(path, u, operation: str, epsilon: float | None = None, on_sphere: bool | None = None) -> Path:
    U = np.asarray(u, dtype=float)
    if on_sphere is None:
        on_sphere = bool(np.abs(np.linalg.norm(U, axis=1) - 1).max() <= 1e-12)
    head = {
        "target_dim": U.shape[1] - 1,
        "on_sphere": str(on_sphere).lower(),
        "operation": operation,
        "epsilon": "none" if epsilon is None else _fmt(epsilon),
    }
    return write_matrix(path, U, head)


def read_map_checkpoint(path):
    U, head = read_matrix(path)
    meta = {
        "target_dim": int(head["target_dim"]),
        "on_sphere": head["on_sphere"] == "true",
        "operation": head["operation"],
        "epsilon": None if head["epsilon"] == "none" else float(head["epsilon"]),
    }
    if U.shape[1] != meta["target_dim"] + 1:
        raise ValueError("column count does not match target_dim")
    return U, meta


def write_rows_csv(path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(columns))
    for row in rows:
        w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    path.write_text(buf.getvalue())
    return path
