"""Weighted Laplace, Schrödinger, Steklov and Robin-type eigenproblems.

All problems reduce to a symmetric pencil ``A f = lam B f`` with ``B`` diagonal
and positive semidefinite.  Given a shift ``sigma`` below the spectrum, the
matrix ``C = A - sigma B`` is positive definite and the pencil is solved as
``B f = mu C f`` with ``lam = sigma + 1/mu``.  Rows where ``B`` vanishes only
produce ``mu = 0`` (infinite eigenvalues), so degenerate densities need no
regularization: the finite eigenvectors come out harmonic on the zero set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .domain import DiscreteManifold

__all__ = [
    "SpectrumResult",
    "EigensolverError",
    "DENSE_LIMIT",
    "multiplicity_groups",
    "calibrated_zero_tol",
    "weighted_laplace_spectrum",
    "schrodinger_spectrum",
    "count_negative",
    "membership_Pm",
    "steklov_spectrum",
    "dtn_matrix",
    "harmonic_extension",
    "boundary_schrodinger_spectrum",
    "functional_Fm",
    "functional_Gm",
    "eigenvalue_perturbation_form",
    "NegativeCount",
]

DENSE_LIMIT = 3000
# below DENSE_LIMIT the dense path is still used when few eigenpairs are wanted
# only on small meshes; a full dense generalized solve costs seconds at N ~ 2500
DENSE_FAST = 600
GROUP_GAP = 1e-6


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectrumResult:
    """Lowest eigenpairs of one pencil, ascending.

    ``eigenvalues[j]`` carries the index ``first_index + j``: Laplace
    and Steklov spectra start at 0, Schrödinger spectra at 1.  Eigenvectors are
    columns, orthonormal in the pencil's right-hand inner product.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    problem_tag: str
    zero_tol: float
    first_index: int = 0
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rhs_weights: np.ndarray | None = None

    def value(self, m: int) -> float:
        return float(self.eigenvalues[m - self.first_index])

    def vector(self, m: int) -> np.ndarray:
        return self.eigenvectors[:, m - self.first_index]

    @property
    def groups(self) -> np.ndarray:
        return multiplicity_groups(self.eigenvalues)

    def eigenspace(self, m: int, rel_gap: float = GROUP_GAP) -> np.ndarray:
        """Columns spanning the multiplicity group containing index ``m``."""
        labels = multiplicity_groups(self.eigenvalues, rel_gap)
        j = m - self.first_index
        return self.eigenvectors[:, labels == labels[j]]


def multiplicity_groups(values, rel_gap: float = GROUP_GAP) -> np.ndarray:
    """Label consecutive eigenvalues whose gap is within ``rel_gap`` (relative)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.zeros(0, dtype=int)
    floor = rel_gap * max(float(np.abs(v).max()), 1e-300)
    labels = np.zeros(v.size, dtype=int)
    for j in range(1, v.size):
        tol = max(rel_gap * max(abs(v[j]), abs(v[j - 1])), floor)
        labels[j] = labels[j - 1] + (abs(v[j] - v[j - 1]) > tol)
    return labels


def _scale(A, b: np.ndarray) -> float:
    """Rough eigenvalue scale used for shifts: mean of diag(A)/diag(B) over N."""
    return float(A.diagonal().sum() / b.sum() / len(b))


def _normalize_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V) > 1e-8 * np.abs(V).max(axis=0), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def _solve_pencil(A, b: np.ndarray, count: int, sigma: float, backend: str = "auto"):
    """Lowest ``count`` eigenpairs of ``A f = lam diag(b) f``.

    ``A - sigma diag(b)`` must be positive definite.
    """
    n = A.shape[0]
    finite = int(np.count_nonzero(b > 0))
    count = min(count, finite)
    if count < 1:
        raise ValueError("pencil has no finite eigenvalues")
    B = sp.diags(b)
    C = (sp.csr_matrix(A) - sigma * B).tocsc()
    if backend == "auto":
        small = n <= DENSE_FAST or (n <= DENSE_LIMIT and count > n // 4)
        backend = "dense" if small or count >= finite - 1 else "iterative"

    if backend == "dense":
        Cd = C.toarray()
        try:
            mu, V = la.eigh(np.diag(b), Cd, subset_by_index=[n - count, n - 1])
        except la.LinAlgError as exc:
            raise EigensolverError(f"dense solve failed: {exc}") from exc
        order = np.argsort(-mu)
        mu, V = mu[order], V[:, order]
        lam = sigma + 1.0 / mu
    elif backend == "iterative":
        lu = sla.splu(C)
        op = sla.LinearOperator(A.shape, matvec=lu.solve, dtype=float)
        # fixed start vector: ARPACK's own random state would make repeated solves differ
        v0 = np.random.default_rng(n).standard_normal(n)
        try:
            lam, V = sla.eigsh(
                sp.csr_matrix(A), k=count, M=B, sigma=sigma, OPinv=op, which="LM",
                tol=1e-13, ncv=min(n, max(2 * count + 1, 40)), maxiter=20 * n, v0=v0,
            )
        except sla.ArpackNoConvergence as exc:
            raise EigensolverError(f"ARPACK did not converge: {exc}") from exc
        order = np.argsort(lam)
        lam, V = lam[order], V[:, order]
    else:
        raise ValueError(f"unknown backend {backend!r}")

    norms = np.sqrt(np.einsum("ij,i,ij->j", V, b, V))
    V = _normalize_signs(V / norms)
    AV = A @ V
    BV = b[:, None] * V
    scale = np.linalg.norm(AV, axis=0) + (abs(sigma) + np.abs(lam)) * np.linalg.norm(BV, axis=0)
    res = np.linalg.norm(AV - lam * BV, axis=0) / np.maximum(scale, 1e-300)
    return lam, V, res


def _check_density(man: DiscreteManifold, beta) -> np.ndarray:
    b = np.broadcast_to(np.asarray(beta, dtype=float), (man.vertex_count,)).copy()
    if not np.all(np.isfinite(b)) or np.any(b < 0):
        raise ValueError("density must be finite and nonnegative")
    if not np.any(b > 0):
        raise ValueError("density vanishes identically")
    return b


def _check_potential(man: DiscreteManifold, V, n: int | None = None) -> np.ndarray:
    n = man.vertex_count if n is None else n
    v = np.broadcast_to(np.asarray(V, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(v)):
        raise ValueError("potential must be finite")
    return v


def calibrated_zero_tol(man: DiscreteManifold) -> float:
    """Default tolerance for calling an eigenvalue zero on this mesh.

    Ten times a second-order discretization-error estimate ``lam^2 h^2 / 12``
    taken over the first nonzero Laplace eigenvalues (beta = 1), with ``h`` the
    mean edge length.  For grids this is the exact leading error term of the
    finite-difference scheme.
    """

    def compute():
        res = weighted_laplace_spectrum(man, 1.0, 3, zero_tol=np.inf)
        lam = res.eigenvalues[1:]
        return float(10.0 * np.max(lam**2) * man.mesh_size**2 / 12.0)

    return man.cached("zero_tol", compute)


def _tol(man, zero_tol):
    return calibrated_zero_tol(man) if zero_tol is None else float(zero_tol)


def weighted_laplace_spectrum(
    man: DiscreteManifold,
    beta,
    count: int,
    zero_tol: float | None = None,
    floor: float | None = None,
    backend: str = "auto",
) -> SpectrumResult:
    """lam_0 .. lam_count of K f = lam diag(m beta) f.

    With ``floor`` set, beta is replaced by max(beta, floor * mean(beta)).
    Otherwise zeros of beta are handled exactly (eigenvectors are harmonic
    where beta vanishes).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    b = _check_density(man, beta)
    if floor is not None:
        b = np.maximum(b, floor * b.mean())
    w = man.mass * b
    sigma = -_scale(man.stiffness, w)
    lam, V, res = _solve_pencil(man.stiffness, w, count + 1, sigma, backend)
    lam[0] = 0.0 if abs(lam[0]) < 1e-9 * max(abs(lam[-1]), 1.0) else lam[0]
    return SpectrumResult(lam, V, "weighted_laplace", _tol(man, zero_tol), 0, res, w)


def schrodinger_spectrum(
    man: DiscreteManifold, V, count: int, zero_tol: float | None = None, backend: str = "auto"
) -> SpectrumResult:
    """nu_1 .. nu_count of (K - diag(m V)) f = nu diag(m) f."""
    if count < 1:
        raise ValueError("count must be >= 1")
    v = _check_potential(man, V)
    A = man.stiffness - sp.diags(man.mass * v)
    sigma = -max(float(v.max()), 0.0) - _scale(man.stiffness, man.mass)
    lam, vecs, res = _solve_pencil(A, man.mass, count, sigma, backend)
    return SpectrumResult(lam, vecs, "schrodinger", _tol(man, zero_tol), 1, res, man.mass)


class NegativeCount(NamedTuple):
    negative: int
    near_null: int
    eigenvalues: np.ndarray


def count_negative(man: DiscreteManifold, V, zero_tol: float | None = None) -> NegativeCount:
    """N(V): eigenvalues below -zero_tol, plus the count within +-zero_tol."""
    tol = _tol(man, zero_tol)
    if tol <= 0:
        raise ValueError("zero_tol must be positive")
    count = 8
    while True:
        count = min(count, man.vertex_count)
        nu = schrodinger_spectrum(man, V, count, tol).eigenvalues
        if nu[-1] > tol or count == man.vertex_count:
            break
        count *= 2
    return NegativeCount(int(np.sum(nu < -tol)), int(np.sum(np.abs(nu) <= tol)), nu)


def membership_Pm(man: DiscreteManifold, V, m: int, zero_tol: float | None = None) -> bool:
    """True iff nu_{m+1}(V) >= -zero_tol."""
    if m < 1:
        raise ValueError("m must be >= 1")
    res = schrodinger_spectrum(man, V, m + 1, zero_tol)
    return bool(res.value(m + 1) >= -res.zero_tol)


# ----------------------------------------------------------------------------
# boundary problems


def _require_boundary(man: DiscreteManifold):
    if not man.has_boundary:
        raise ValueError("manifold has no boundary")


def _interior_solver(man: DiscreteManifold):
    def build():
        I = man.interior
        K = man.stiffness.tocsr()
        KII = K[I][:, I].tocsc()
        if KII.shape[0] == 0:
            raise ValueError("mesh has no interior vertices")
        return sla.splu(KII)

    return man.cached("interior_lu", build)


def dtn_matrix(man: DiscreteManifold) -> np.ndarray:
    """Dirichlet-to-Neumann Schur complement K_BB - K_BI K_II^{-1} K_IB (dense)."""
    _require_boundary(man)

    def build():
        I, B = man.interior, man.boundary
        K = man.stiffness.tocsr()
        KIB = K[I][:, B].toarray()
        X = _interior_solver(man).solve(KIB)
        D = K[B][:, B].toarray() - K[B][:, I] @ X
        return 0.5 * (D + D.T)

    return man.cached("dtn", build)


def harmonic_extension(man: DiscreteManifold, boundary_values) -> np.ndarray:
    """Vertex field equal to ``boundary_values`` on the boundary, K-harmonic inside."""
    _require_boundary(man)
    fb = np.asarray(boundary_values, dtype=float)
    squeeze = fb.ndim == 1
    fb = fb.reshape(len(man.boundary), -1)
    K = man.stiffness.tocsr()
    I, B = man.interior, man.boundary
    out = np.zeros((man.vertex_count, fb.shape[1]))
    out[B] = fb
    out[I] = -_interior_solver(man).solve(np.asarray(K[I][:, B] @ fb))
    return out[:, 0] if squeeze else out


def steklov_spectrum(
    man: DiscreteManifold, rho, count: int, zero_tol: float | None = None
) -> SpectrumResult:
    """sigma_0 .. sigma_count of DtN f = sigma diag(s rho) f.

    ``rho`` is indexed like ``man.boundary``; eigenvectors are returned on all
    vertices (harmonic extension of the boundary eigenfunctions).
    """
    _require_boundary(man)
    r = np.broadcast_to(np.asarray(rho, dtype=float), (len(man.boundary),)).copy()
    if not np.all(np.isfinite(r)) or np.any(r < 0) or not np.any(r > 0):
        raise ValueError("boundary density must be nonnegative and not identically zero")
    D = dtn_matrix(man)
    w = man.boundary_mass * r
    sigma = -_scale(sp.csr_matrix(D), w)
    lam, V, res = _solve_pencil(D, w, count + 1, sigma, backend="dense")
    lam[0] = 0.0 if abs(lam[0]) < 1e-9 * max(abs(lam[-1]), 1.0) else lam[0]
    full = harmonic_extension(man, V)
    return SpectrumResult(lam, full, "steklov", _tol(man, zero_tol), 0, res, w)


def boundary_schrodinger_spectrum(
    man: DiscreteManifold, v, count: int, zero_tol: float | None = None, backend: str = "auto"
) -> SpectrumResult:
    """nu_1 .. nu_count of the quadratic form u^T K u - sum_{i in boundary} s_i v_i u_i^2
    against the lumped mass."""
    _require_boundary(man)
    vb = _check_potential(man, v, len(man.boundary))
    sv = np.zeros(man.vertex_count)
    sv[man.boundary] = man.boundary_mass * vb
    A = man.stiffness - sp.diags(sv)
    sigma = -max(float(np.max(sv / man.mass)), 0.0) - _scale(man.stiffness, man.mass)
    lam, vecs, res = _solve_pencil(A, man.mass, count, sigma, backend)
    return SpectrumResult(lam, vecs, "boundary_schrodinger", _tol(man, zero_tol), 1, res, man.mass)


# ----------------------------------------------------------------------------
# functionals and perturbation forms


def functional_Fm(man: DiscreteManifold, beta, m: int, **kw) -> float:
    """lam_m(beta) * integral of beta."""
    if m < 1:
        raise ValueError("m must be >= 1")
    b = _check_density(man, beta)
    lam = weighted_laplace_spectrum(man, b, m, zero_tol=np.inf, **kw).value(m)
    return float(lam * (man.mass @ b))


def functional_Gm(man: DiscreteManifold, rho, m: int) -> float:
    """sigma_m(rho) * boundary integral of rho."""
    r = np.broadcast_to(np.asarray(rho, dtype=float), (len(man.boundary),))
    sig = steklov_spectrum(man, r, m, zero_tol=np.inf).value(m)
    return float(sig * (man.boundary_mass @ r))


def eigenvalue_perturbation_form(
    man: DiscreteManifold, eigenspace, W, weights: np.ndarray | None = None
) -> np.ndarray:
    """A(W)[phi, psi] = -sum_i m_i W_i phi_i psi_i on an orthonormal eigenspace.

    ``weights`` overrides the vertex measure used both for the orthonormality
    check and for the integral (default: lumped mass).
    """
    Phi = np.asarray(eigenspace, dtype=float)
    if Phi.ndim == 1:
        Phi = Phi[:, None]
    w = man.mass if weights is None else np.asarray(weights, dtype=float)
    gram = Phi.T @ (w[:, None] * Phi)
    if np.abs(gram - np.eye(Phi.shape[1])).max() > 1e-6:
        raise ValueError("eigenspace basis is not orthonormal")
    Wv = np.broadcast_to(np.asarray(W, dtype=float), (man.vertex_count,))
    A = -Phi.T @ ((w * Wv)[:, None] * Phi)
    return 0.5 * (A + A.T)
