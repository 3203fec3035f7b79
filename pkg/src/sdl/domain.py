"""Discrete Riemannian domains and the quadratic forms built on them.

Every domain is stored through its *edge decomposition*: the stiffness form is

    K = sum_e w_e (d_a - d_b)(d_a - d_b)^T

over edges e = (a, b) with weights w_e.  For triangle meshes the weights are the
cotangent weights, for the flat torus they are the finite-difference weights.
Per-vertex energy densities are assembled from the same weights element by
element, which is why the quadrature identity ``sum_i m_i e_i == u^T K u``
holds to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DiscreteManifold",
    "build_flat_torus",
    "build_icosphere",
    "build_disk_mesh",
    "triangle_manifold",
    "dirichlet_energy",
    "energy_density",
    "energy_tensor",
    "as_field",
]


@dataclass(frozen=True, eq=False)
class DiscreteManifold:
    """Mesh plus lumped mass and Dirichlet stiffness.

    ``elements`` holds triangles for simplicial domains and is ``None`` for the
    finite-difference torus, whose grid layout lives in ``params``.
    """

    dim: int
    positions: np.ndarray
    stiffness: sp.csr_matrix
    mass: np.ndarray
    edges: np.ndarray
    edge_weights: np.ndarray
    edge_lengths: np.ndarray
    elements: np.ndarray | None = None
    element_weights: np.ndarray | None = None
    boundary: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    boundary_mass: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tag: str = "custom"
    params: dict[str, Any] = field(default_factory=dict)
    _cache: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def vertex_count(self) -> int:
        return self.positions.shape[0]

    @property
    def volume(self) -> float:
        return float(self.mass.sum())

    @property
    def has_boundary(self) -> bool:
        return self.boundary.size > 0

    @property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.vertex_count, dtype=bool)
        mask[self.boundary] = False
        return np.flatnonzero(mask)

    @property
    def mesh_size(self) -> float:
        """Mean edge length."""
        return float(self.edge_lengths.mean())

    def boundary_weights_full(self) -> np.ndarray:
        """Boundary weights scattered to a vertex-length array (zero inside)."""
        s = np.zeros(self.vertex_count)
        s[self.boundary] = self.boundary_mass
        return s

    def mass_matrix(self, weights: np.ndarray | None = None) -> sp.dia_matrix:
        w = self.mass if weights is None else self.mass * weights
        return sp.diags(w)

    def cached(self, key: str, fn):
        """Memoize a derived quantity; the manifold itself never changes."""
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]


def _assemble(n: int, edges: np.ndarray, w: np.ndarray) -> sp.csr_matrix:
    a, b = edges[:, 0], edges[:, 1]
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([b, a, a, b])
    vals = np.concatenate([-w, -w, w, w])
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return K


def as_field(man: DiscreteManifold, u) -> np.ndarray:
    """Return ``u`` as an (N, c) float array, validating the vertex count."""
    arr = np.asarray(u, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != man.vertex_count:
        raise ValueError(
            f"field has shape {np.shape(u)}, expected ({man.vertex_count}, k)"
        )
    return arr


# ----------------------------------------------------------------------------
# builders


def build_flat_torus(side_lengths: Sequence[float], resolution: int | Sequence[int]) -> DiscreteManifold:
    """Periodic uniform grid on the flat torus prod_a [0, L_a).

    The stiffness is the second-order finite-difference Dirichlet form
    ``sum_a (cell volume / h_a^2) (u(x + h_a e_a) - u(x))^2``.
    """
    lengths = np.asarray(side_lengths, dtype=float).ravel()
    n = lengths.size
    if n not in (1, 2, 3):
        raise ValueError("torus dimension must be 1, 2 or 3")
    if np.any(lengths <= 0):
        raise ValueError("side lengths must be positive")
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (n,)).copy()
    if np.any(res < 4):
        raise ValueError("resolution must be at least 4 per axis")

    h = lengths / res
    cell = float(np.prod(h))
    shape = tuple(int(r) for r in res)
    idx = np.arange(int(np.prod(res))).reshape(shape)
    axes = [np.arange(r) * hh for r, hh in zip(res, h)]
    grid = np.meshgrid(*axes, indexing="ij")
    positions = np.stack([g.ravel() for g in grid], axis=1)

    edges, weights, lens = [], [], []
    for a in range(n):
        nb = np.roll(idx, -1, axis=a)
        edges.append(np.stack([idx.ravel(), nb.ravel()], axis=1))
        weights.append(np.full(idx.size, cell / h[a] ** 2))
        lens.append(np.full(idx.size, h[a]))
    edges = np.concatenate(edges)
    weights = np.concatenate(weights)

    N = idx.size
    return DiscreteManifold(
        dim=n,
        positions=positions,
        stiffness=_assemble(N, edges, weights),
        mass=np.full(N, cell),
        edges=edges,
        edge_weights=weights,
        edge_lengths=np.concatenate(lens),
        tag="flat_torus",
        params={
            "side_lengths": lengths.tolist(),
            "resolution": [int(r) for r in res],
            "spacing": h.tolist(),
        },
    )


def _cotangent_edges(pos: np.ndarray, tris: np.ndarray):
    """Unique edges with summed half-cotangent weights, plus triangle areas.

    Also returns the per-triangle weights: column k is the weight of the edge
    opposite corner k.
    """
    p = pos[tris]
    edges, weights = [], []
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        e1 = p[:, i] - p[:, k]
        e2 = p[:, j] - p[:, k]
        cross = np.linalg.norm(np.cross(e1, e2), axis=-1)
        cot = np.einsum("ij,ij->i", e1, e2) / cross
        edges.append(np.sort(tris[:, [i, j]], axis=1))
        weights.append(0.5 * cot)
    local = np.stack(weights, axis=1)
    edges = np.concatenate(edges)
    weights = np.concatenate(weights)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    w = np.bincount(inv.ravel(), weights=weights, minlength=len(uniq))
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=-1)
    counts = np.bincount(inv.ravel(), minlength=len(uniq))
    return uniq, w, area, counts, local


def _order_boundary(bedges: np.ndarray) -> np.ndarray:
    nxt: dict[int, list[int]] = {}
    for a, b in bedges:
        nxt.setdefault(int(a), []).append(int(b))
        nxt.setdefault(int(b), []).append(int(a))
    start = int(bedges[0, 0])
    loop, prev, cur = [start], -1, start
    while True:
        nbrs = [v for v in nxt[cur] if v != prev]
        if not nbrs or nbrs[0] == start:
            break
        prev, cur = cur, nbrs[0]
        loop.append(cur)
    if len(loop) != len(nxt):
        raise ValueError("boundary is not a single closed loop")
    return np.asarray(loop, dtype=np.int64)


def triangle_manifold(
    positions: np.ndarray,
    triangles: np.ndarray,
    tag: str = "triangle_mesh",
    params: dict | None = None,
) -> DiscreteManifold:
    """Cotangent stiffness and barycentric lumped mass for a triangle mesh.

    Edges used by a single triangle are boundary edges; a mesh with boundary
    must have it as one closed loop.
    """
    pos = np.asarray(positions, dtype=float)
    if pos.shape[1] == 2:
        pos = np.column_stack([pos, np.zeros(len(pos))])
    tris = np.asarray(triangles, dtype=np.int64)
    N = pos.shape[0]
    edges, w, area, counts, local_w = _cotangent_edges(pos, tris)
    mass = np.bincount(tris.ravel(), weights=np.repeat(area / 3.0, 3), minlength=N)
    if np.any(mass <= 0):
        raise ValueError("mesh has unreferenced vertices")
    lengths = np.linalg.norm(pos[edges[:, 0]] - pos[edges[:, 1]], axis=1)

    boundary = np.zeros(0, dtype=np.int64)
    bmass = np.zeros(0)
    bedges = edges[counts == 1]
    if len(bedges):
        boundary = _order_boundary(bedges)
        blen = np.linalg.norm(pos[bedges[:, 0]] - pos[bedges[:, 1]], axis=1)
        s = np.bincount(bedges.ravel(), weights=np.repeat(0.5 * blen, 2), minlength=N)
        bmass = s[boundary]

    return DiscreteManifold(
        dim=2,
        positions=pos,
        stiffness=_assemble(N, edges, w),
        mass=mass,
        edges=edges,
        edge_weights=w,
        edge_lengths=lengths,
        elements=tris,
        element_weights=local_w,
        boundary=boundary,
        boundary_mass=bmass,
        tag=tag,
        params=dict(params or {}),
    )


_PHI = (1.0 + 5.0 ** 0.5) / 2.0
_ICO_V = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ]
)
_ICO_F = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)


def build_icosphere(subdivisions: int) -> DiscreteManifold:
    """Unit sphere from a midpoint-subdivided icosahedron."""
    if not 1 <= int(subdivisions) <= 7:
        raise ValueError("subdivisions must lie in [1, 7]")
    verts = _ICO_V / np.linalg.norm(_ICO_V, axis=1, keepdims=True)
    faces = _ICO_F.copy()
    for _ in range(int(subdivisions)):
        # one midpoint per undirected edge
        e = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(e, axis=0, return_inverse=True)
        inv = inv.ravel()
        mid = verts[uniq[:, 0]] + verts[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        base = len(verts)
        nf = len(faces)
        m01, m12, m20 = (inv[:nf] + base, inv[nf:2 * nf] + base, inv[2 * nf:] + base)
        a, b, c = faces.T
        faces = np.concatenate(
            [
                np.stack([a, m01, m20], 1),
                np.stack([b, m12, m01], 1),
                np.stack([c, m20, m12], 1),
                np.stack([m01, m12, m20], 1),
            ]
        )
        verts = np.concatenate([verts, mid])
    return triangle_manifold(verts, faces, tag="icosphere", params={"subdivisions": int(subdivisions)})


def build_disk_mesh(radial_resolution: int) -> DiscreteManifold:
    """Unit disk from concentric rings (6j points on ring j), Delaunay-triangulated.

    The point set has six-fold dihedral symmetry, so Fourier-mode pairs on the
    boundary stay exactly degenerate.
    """
    from scipy.spatial import Delaunay

    R = int(radial_resolution)
    if R < 3:
        raise ValueError("radial_resolution must be at least 3")
    pts = [np.zeros((1, 2))]
    for j in range(1, R + 1):
        t = 2 * np.pi * np.arange(6 * j) / (6 * j)
        pts.append((j / R) * np.column_stack([np.cos(t), np.sin(t)]))
    pts = np.concatenate(pts)
    tri = Delaunay(pts).simplices
    # drop slivers Qhull can emit on the cocircular outer ring
    p = pts[tri]
    a, b = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    tri = tri[area > 1e-12 / R**2]
    return triangle_manifold(pts, tri, tag="disk", params={"radial_resolution": R})


# ----------------------------------------------------------------------------
# energies


def dirichlet_energy(man: DiscreteManifold, u) -> float:
    """E(u) = 1/2 sum_c u_c^T K u_c."""
    U = as_field(man, u)
    D = U - U[0]  # K annihilates constants only up to rounding; this makes E(const) = 0 exactly
    return 0.5 * float(np.einsum("ic,ic->", D, man.stiffness @ D))


def _element_energies(man: DiscreteManifold, U: np.ndarray, outer: bool):
    """Integrated energy (or pullback tensor) per element, with its vertices.

    Triangles use their three local cotangent edges; the torus grid uses each
    finite-difference edge as an element.
    """
    if man.elements is None:
        verts = man.edges
        d = U[verts[:, 0]] - U[verts[:, 1]]
        w = man.edge_weights
        if outer:
            return verts, w[:, None, None] * d[:, :, None] * d[:, None, :]
        return verts, w * np.einsum("ec,ec->e", d, d)
    tris = man.elements
    tot = 0.0
    for k in range(3):
        i, j = tris[:, (k + 1) % 3], tris[:, (k + 2) % 3]
        d = U[i] - U[j]
        w = man.element_weights[:, k]
        if outer:
            tot = tot + w[:, None, None] * d[:, :, None] * d[:, None, :]
        else:
            tot = tot + w * np.einsum("ec,ec->e", d, d)
    return tris, tot


def energy_density(man: DiscreteManifold, u) -> np.ndarray:
    """Per-vertex |du|^2.

    The integrated energy of each element is split among its vertices in
    proportion to their share of the element volume (a third per corner on a
    triangle, a half per endpoint on a grid edge) and divided by the lumped
    mass.  Hence ``sum_i m_i e_i = 2 E(u)`` up to rounding.
    """
    U = as_field(man, u)
    verts, en = _element_energies(man, U, outer=False)
    share = en / verts.shape[1]
    acc = np.zeros(man.vertex_count)
    for c in range(verts.shape[1]):
        acc += np.bincount(verts[:, c], weights=share, minlength=man.vertex_count)
    return acc / man.mass


def energy_tensor(man: DiscreteManifold, u) -> np.ndarray:
    """Per-vertex pullback tensor du^* du as (N, c, c) matrices.

    Same element shares as :func:`energy_density`, so the trace is that density.
    """
    U = as_field(man, u)
    verts, en = _element_energies(man, U, outer=True)
    share = en / verts.shape[1]
    out = np.zeros((man.vertex_count, U.shape[1], U.shape[1]))
    for c in range(verts.shape[1]):
        np.add.at(out, verts[:, c], share)
    return out / man.mass[:, None, None]
