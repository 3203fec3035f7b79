"""Eigenvalue optimization over densities and the Mobius canonical family.

The fixed-point optimizers follow the structure of critical densities: at a
critical beta the normalized first eigenfunctions form a sphere-valued map u
with lambda_1(beta) beta = e(u).  On spheres the first eigenvalue functional
is invariant under conformal push-forward of the density, so the optimizer
can fix that gauge by Hersch balancing before each step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

import numpy as np
from scipy.spatial import cKDTree

from .domain import DiscreteManifold, energy_density
from .harmonic import SphereMap, spectral_index
from .spectral import (
    EigensolverError,
    boundary_schrodinger_spectrum,
    calibrated_zero_tol,
    dtn_matrix,
    harmonic_extension,
    schrodinger_spectrum,
    steklov_spectrum,
    weighted_laplace_spectrum,
)

log = logging.getLogger(__name__)

__all__ = [
    "MobiusParam",
    "BalanceError",
    "OptimizerError",
    "OptimizeParams",
    "OptimizeTrace",
    "TraceRow",
    "mobius_apply",
    "mobius_factor",
    "balance_points",
    "hersch_balance",
    "mobius_pushforward",
    "certify_upper_bound_sphere",
    "maximize_F1",
    "maximize_steklov_density",
    "unit_sum_recombination",
    "criticality_check_density",
    "criticality_check_potential",
    "free_boundary_check",
    "stabilization_probe",
    "effective_rank",
]


class BalanceError(RuntimeError):
    def __init__(self, msg: str, defect: float):
        super().__init__(f"{msg} (defect {defect:.3e})")
        self.defect = defect


class OptimizerError(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# Mobius family


@dataclass(frozen=True)
class MobiusParam:
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        if not np.linalg.norm(y) < 1:
            raise ValueError("Mobius parameter must lie in the open unit ball")
        object.__setattr__(self, "y", y)

    @property
    def inverse(self) -> "MobiusParam":
        return MobiusParam(-self.y)


def _y(y) -> np.ndarray:
    return y.y if isinstance(y, MobiusParam) else np.asarray(y, dtype=float)


def mobius_apply(y, x) -> np.ndarray:
    """G_y(x) = (1 - |y|^2)/|x + y|^2 (x + y) + y for x on the unit sphere."""
    yv = _y(y)
    x = np.asarray(x, dtype=float)
    d = x + yv
    f = (1.0 - yv @ yv) / np.einsum("...i,...i->...", d, d)
    return f[..., None] * d + yv


def mobius_factor(y, x) -> np.ndarray:
    """Conformal factor |dG_y| at x, i.e. (1 - |y|^2)/|x + y|^2."""
    yv = _y(y)
    d = np.asarray(x, dtype=float) + yv
    return (1.0 - yv @ yv) / np.einsum("...i,...i->...", d, d)


def _center(points, w, y):
    return (w @ mobius_apply(y, points)) / w.sum()


def balance_points(points, weights, tol: float = 1e-8, max_iters: int = 100) -> MobiusParam:
    """Find y with sum_i w_i G_y(x_i) = 0.

    Newton's method on the center of mass with a finite-difference Jacobian,
    backtracking on |center| and never leaving the open ball; when Newton
    stalls, a halving search along -center takes over.
    """
    X = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be nonnegative with positive total")
    if np.abs(np.linalg.norm(X, axis=1) - 1).max() > 1e-9:
        raise ValueError("points must lie on the unit sphere")
    dim = X.shape[1]
    y = np.zeros(dim)
    c = _center(X, w, y)
    cn = float(np.linalg.norm(c))
    for _ in range(max_iters):
        if cn <= tol:
            return MobiusParam(y)
        room = 1.0 - np.linalg.norm(y)
        h = 1e-7 * room
        J = np.empty((dim, dim))
        for a in range(dim):
            e = np.zeros(dim)
            e[a] = h
            J[:, a] = (_center(X, w, y + e) - _center(X, w, y - e)) / (2 * h)
        moved = False
        try:
            directions = [np.linalg.solve(J, -c), -c]
        except np.linalg.LinAlgError:
            directions = [-c]
        for step in directions:
            t = 1.0
            for _ in range(60):
                trial = y + t * step
                if np.linalg.norm(trial) < 1.0 - 0.5 * room * 1e-3 and np.linalg.norm(trial) < 1:
                    ct = _center(X, w, trial)
                    if np.linalg.norm(ct) < cn:
                        y, c, cn = trial, ct, float(np.linalg.norm(ct))
                        moved = True
                        break
                t *= 0.5
            if moved:
                break
        if not moved:
            break
    if cn <= tol:
        return MobiusParam(y)
    raise BalanceError("center of mass could not be balanced", cn)


def _sphere_points(man: DiscreteManifold) -> np.ndarray:
    P = man.positions
    if np.abs(np.linalg.norm(P, axis=1) - 1).max() > 1e-9:
        raise ValueError("domain vertices must lie on the unit sphere")
    return P


def hersch_balance(man: DiscreteManifold, weight, tol: float = 1e-8, max_iters: int = 100) -> MobiusParam:
    """Balance the vertex measure ``weight`` (already including the mass)."""
    return balance_points(_sphere_points(man), weight, tol, max_iters)


def _boundary_circle(man: DiscreteManifold) -> np.ndarray:
    Q = man.positions[man.boundary][:, :2]
    if np.abs(np.linalg.norm(Q, axis=1) - 1).max() > 1e-9:
        raise ValueError("boundary vertices must lie on the unit circle")
    return Q


class _SphereLocator:
    """P1 interpolation on a triangulated unit sphere by radial projection."""

    def __init__(self, man: DiscreteManifold):
        self.P = man.positions
        self.T = man.elements
        self.tree = cKDTree(self.P)
        inc = [[] for _ in range(man.vertex_count)]
        for t, tri in enumerate(self.T):
            for v in tri:
                inc[v].append(t)
        width = max(len(x) for x in inc)
        self.inc = np.array([x + [x[0]] * (width - len(x)) for x in inc])
        self.inv = np.linalg.inv(self.P[self.T].transpose(0, 2, 1))

    def interpolate(self, f: np.ndarray, q: np.ndarray) -> np.ndarray:
        _, near = self.tree.query(q, k=3)
        cand = self.inc[near].reshape(len(q), -1)
        coef = np.einsum("qcij,qj->qci", self.inv[cand], q)
        coef /= coef.sum(axis=2, keepdims=True)
        best = np.argmax(coef.min(axis=2), axis=1)
        rows = np.arange(len(q))
        tri = cand[rows, best]
        c = coef[rows, best]
        return np.einsum("qi,qi->q", c, f[self.T[tri]])


def mobius_pushforward(man: DiscreteManifold, density, y, on_boundary: bool = False) -> np.ndarray:
    """Density of the push-forward of (density * measure) under G_y.

    Sphere domains push vertex densities (area Jacobian, power 2); with
    ``on_boundary`` the boundary density of a unit disk is pushed along the
    circle (length Jacobian, power 1).  Values are P1-interpolated.
    """
    yv = _y(y)
    f = np.asarray(density, dtype=float)
    if on_boundary:
        Q = _boundary_circle(man)
        pre = mobius_apply(-yv, Q)
        theta = np.arctan2(Q[:, 1], Q[:, 0])
        order = np.argsort(theta)
        th, fv = theta[order], f[order]
        th = np.concatenate([th[-1:] - 2 * np.pi, th, th[:1] + 2 * np.pi])
        fv = np.concatenate([fv[-1:], fv, fv[:1]])
        vals = np.interp(np.arctan2(pre[:, 1], pre[:, 0]), th, fv)
        return vals * mobius_factor(-yv, Q)
    P = _sphere_points(man)
    loc = man.cached("sphere_locator", lambda: _SphereLocator(man))
    vals = loc.interpolate(f, mobius_apply(-yv, P))
    return np.maximum(vals, 0.0) * mobius_factor(-yv, P) ** man.dim


def certify_upper_bound_sphere(man: DiscreteManifold, beta, tol: float = 1e-8):
    """Upper bound for lambda_1(beta) * integral(beta) from balanced conformal coordinates.

    The coordinates of G_y, balanced against beta * mass, are admissible
    test functions; summing their Rayleigh quotients gives
    lambda_1(beta) * int(beta) <= sum_a f_a^T K f_a = 2 E(G_y).
    Returns (bound, MobiusParam).
    """
    b = np.asarray(beta, dtype=float)
    P = _sphere_points(man)
    y = hersch_balance(man, man.mass * b, tol=tol)
    F = mobius_apply(y, P)
    bound = float(np.einsum("ic,ic->", F, man.stiffness @ F))
    return bound, y


# ----------------------------------------------------------------------------
# fixed-point optimizers


@dataclass(frozen=True)
class OptimizeParams:
    damping: float = 0.5
    floor: float = 1e-8
    max_iters: int = 200
    tol: float = 1e-4
    patience: int = 10
    cluster_gap: float = 0.5
    phi_floor: float = 1e-3
    damping_tol: float = 1e-6
    min_damping: float = 1.0 / 64
    recenter: bool | None = None
    ambient_k: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.floor < 0 or self.tol <= 0 or self.max_iters < 1 or self.patience < 1:
            raise ValueError("invalid optimizer parameters")

    @classmethod
    def coerce(cls, params: "OptimizeParams | Mapping[str, Any] | None") -> "OptimizeParams":
        if params is None:
            return cls()
        if isinstance(params, cls):
            return params
        known = {f.name for f in fields(cls)}
        unknown = set(params) - known
        if unknown:
            raise ValueError(f"unknown optimizer parameters: {sorted(unknown)}")
        return cls(**dict(params))


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    F: float
    gap: float
    beta_change: float
    map_rank: int
    damping: float
    residual: float


@dataclass
class OptimizeTrace:
    iterations: list[TraceRow] = field(default_factory=list)
    final_map: SphereMap | None = None
    converged: bool = False
    reason: str = ""
    best_value: float = float("nan")
    harmonic_defect: float = float("nan")

    @property
    def values(self) -> np.ndarray:
        return np.array([r.F for r in self.iterations])


def effective_rank(values, svd_tol: float = 1e-3) -> int:
    s = np.linalg.svd(np.asarray(values, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > svd_tol * s[0]))


def _cluster(values: np.ndarray, start: int, gap: float) -> np.ndarray:
    """Indices j >= start with values[j] <= values[start] * (1 + gap)."""
    v = values
    idx = [start]
    for j in range(start + 1, len(v)):
        if v[j] <= v[start] * (1 + gap):
            idx.append(j)
        else:
            break
    return np.array(idx)


def _eigen_map(Phi: np.ndarray, weights: np.ndarray, phi_floor: float, strict: bool = True) -> np.ndarray:
    """Phi / |Phi| row-wise; aborts if |Phi| is tiny on more than 1% of the measure."""
    r = np.linalg.norm(Phi, axis=1)
    rms = np.sqrt((weights @ r**2) / weights.sum())
    small = r < phi_floor * rms
    if strict and weights[small].sum() > 0.01 * weights.sum():
        raise OptimizerError(
            f"eigenfunction map degenerates: |Phi| below floor on "
            f"{weights[small].sum() / weights.sum():.1%} of the mass"
        )
    out = np.empty_like(Phi)
    ok = r > 0
    out[ok] = Phi[ok] / r[ok, None]
    out[~ok] = 0.0
    out[~ok, 0] = 1.0
    return out


def _pad(u: np.ndarray) -> np.ndarray:
    """A one-dimensional eigenspace gives values in S^0; pad to reach S^1."""
    return np.hstack([u, np.zeros((len(u), 1))]) if u.shape[1] == 1 else u


def _embed(u: np.ndarray, ambient_k: int | None, seed: int) -> np.ndarray:
    u = _pad(u)
    d = u.shape[1]
    if ambient_k is None or ambient_k + 1 == d:
        return u
    if ambient_k + 1 < d:
        raise OptimizerError(f"eigenspace dimension {d} exceeds ambient dimension {ambient_k + 1}")
    Q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((ambient_k + 1, d)))
    return u @ Q.T


class _State:
    """One density with its spectral data (lambda_1 cluster and eigenfunction map)."""

    def __init__(self, density, value, lam, gap, Phi, u, cand):
        self.density, self.value, self.lam, self.gap = density, value, lam, gap
        self.Phi, self.u, self.cand = Phi, u, cand


def _sphere_state(man, beta, p: OptimizeParams) -> _State:
    count = 6
    while True:
        spec = weighted_laplace_spectrum(man, beta, count, zero_tol=np.inf)
        lam = spec.eigenvalues
        idx = _cluster(lam, 1, p.cluster_gap)
        if idx[-1] < len(lam) - 1 or count >= man.vertex_count - 1:
            break
        count *= 2
    Phi = spec.eigenvectors[:, idx]
    u = _eigen_map(Phi, man.mass * beta, p.phi_floor)
    lam1 = float(lam[1])
    cand = energy_density(man, u) / lam1
    return _State(beta, lam1 * float(man.mass @ beta), lam1, float(lam[2] - lam[1]), Phi, u, cand)


def _steklov_state(man, rho, p: OptimizeParams) -> _State:
    count = 6
    s = man.boundary_mass
    while True:
        spec = steklov_spectrum(man, rho, count, zero_tol=np.inf)
        lam = spec.eigenvalues
        idx = _cluster(lam, 1, p.cluster_gap)
        if idx[-1] < len(lam) - 1 or count >= len(man.boundary) - 1:
            break
        count *= 2
    Phi = spec.eigenvectors[man.boundary][:, idx]
    u = _eigen_map(Phi, s * rho, p.phi_floor)
    sig1 = float(lam[1])
    dn = (dtn_matrix(man) @ u) / s[:, None]
    cand = np.linalg.norm(dn, axis=1) / sig1
    return _State(rho, sig1 * float(s @ rho), sig1, float(lam[2] - lam[1]), Phi, u, cand)


def _fixed_point(state_fn, weights, x0, p: OptimizeParams, recenter_fn, harmonic_defect=None):
    floor = p.floor

    def normalize(x):
        x = np.maximum(x, floor * x.mean())
        return x / (weights @ x)

    x = normalize(np.asarray(x0, dtype=float))
    cur = state_fn(x)
    trace = OptimizeTrace()
    best = cur
    eta = p.damping
    stall = 0
    def residual(st):
        # |lambda beta - e(u)| / |e(u)|, i.e. |beta - cand| / |cand|
        return float(np.sqrt(weights @ (st.cand - st.density) ** 2) / max(np.sqrt(weights @ st.cand**2), 1e-300))

    trace.iterations.append(
        TraceRow(0, cur.value, cur.gap, float("nan"), effective_rank(cur.u), eta, residual(cur))
    )
    for it in range(1, p.max_iters + 1):
        if recenter_fn is not None:
            moved = normalize(recenter_fn(cur.density))
            st = state_fn(moved)
            if st.value >= cur.value * (1 - p.damping_tol):
                cur = st
        eta = min(p.damping, 2 * eta)
        while True:
            trial = normalize((1 - eta) * cur.density + eta * normalize(cur.cand))
            st = state_fn(trial)
            if st.value >= cur.value * (1 - p.damping_tol):
                break
            eta *= 0.5
            if eta < p.min_damping:
                st = None
                break
        if st is None:
            trace.reason = "damping underflow"
            break
        change = float(np.sqrt(weights @ (st.density - cur.density) ** 2) / np.sqrt(weights @ cur.density**2))
        cur = st
        res = residual(cur)
        trace.iterations.append(TraceRow(it, cur.value, cur.gap, change, effective_rank(cur.u), eta, res))
        if cur.value > best.value * (1 + 1e-9):
            best, stall = cur, 0
        else:
            stall += 1
        if res < p.tol:
            best = cur
            trace.converged, trace.reason = True, "fixed-point residual below tol"
            break
        if stall >= p.patience:
            trace.converged, trace.reason = True, "value stagnated"
            break
    else:
        trace.reason = "max_iters"
    trace.best_value = best.value
    trace.final_map = SphereMap.project(_embed(best.u, p.ambient_k, p.seed))
    return best, trace


def maximize_F1(man: DiscreteManifold, beta0, params=None):
    """Damped fixed-point iteration toward a critical density for lambda_1(beta) int(beta).

    Each step normalizes beta to unit mass, builds the map u = Phi/|Phi| from
    the first eigenspace (eigenvalues within ``cluster_gap`` of lambda_1), and
    moves beta toward e(u)/lambda_1.  Iteration stops when the fixed-point
    residual |lambda_1 beta - e(u)|_M / |e(u)|_M falls below ``tol``, or when
    the value has not improved for ``patience`` steps.  The damping is halved whenever the value
    would drop by more than ``damping_tol`` (relative).  On sphere domains the
    density is first pushed forward by the Mobius map balancing it
    (``recenter``, default on), which leaves the value unchanged up to
    interpolation error and removes the conformal degeneracy of the maximizers.
    Returns the best density and the trace.
    """
    p = OptimizeParams.coerce(params)
    beta0 = np.broadcast_to(np.asarray(beta0, dtype=float), (man.vertex_count,)).copy()
    if not np.all(np.isfinite(beta0)) or np.any(beta0 < 0) or not beta0.sum() > 0:
        raise ValueError("initial density must be finite, nonnegative and nonzero")
    on_sphere = man.elements is not None and np.abs(np.linalg.norm(man.positions, axis=1) - 1).max() < 1e-9
    recenter = on_sphere if p.recenter is None else p.recenter
    if recenter and not on_sphere:
        raise ValueError("recentering needs a unit-sphere domain")

    def recenter_fn(b):
        return mobius_pushforward(man, b, hersch_balance(man, man.mass * b))

    try:
        best, trace = _fixed_point(
            lambda b: _sphere_state(man, b, p), man.mass, beta0, p, recenter_fn if recenter else None
        )
    except EigensolverError as exc:
        raise OptimizerError(f"eigensolver failure: {exc}") from exc
    return best.density, trace


def maximize_steklov_density(man: DiscreteManifold, rho0, params=None):
    """Fixed-point iteration toward a critical boundary density for sigma_1(rho) int(rho).

    The candidate is |d_n u| / sigma_1 with d_n u = DtN(u) / s from the
    boundary eigenfunction map u.  On the unit disk the boundary density is
    recentred by the circle Mobius map (``recenter``, default on).  The trace
    reason string carries the harmonicity defect of the interior extension.
    """
    p = OptimizeParams.coerce(params)
    if not man.has_boundary:
        raise ValueError("manifold has no boundary")
    nb = len(man.boundary)
    rho0 = np.broadcast_to(np.asarray(rho0, dtype=float), (nb,)).copy()
    if not np.all(np.isfinite(rho0)) or np.any(rho0 < 0) or not rho0.sum() > 0:
        raise ValueError("initial density must be finite, nonnegative and nonzero")
    Q = man.positions[man.boundary][:, :2]
    on_circle = np.abs(np.linalg.norm(Q, axis=1) - 1).max() < 1e-9
    recenter = on_circle if p.recenter is None else p.recenter
    s = man.boundary_mass

    def recenter_fn(r):
        y = balance_points(Q, s * r)
        return mobius_pushforward(man, r, y, on_boundary=True)

    try:
        best, trace = _fixed_point(
            lambda r: _steklov_state(man, r, p), s, rho0, p, recenter_fn if recenter else None
        )
    except EigensolverError as exc:
        raise OptimizerError(f"eigensolver failure: {exc}") from exc
    ext = harmonic_extension(man, trace.final_map.values)
    K = man.stiffness
    defect = float(np.linalg.norm((K @ ext)[man.interior]) / max(np.linalg.norm(K @ ext), 1e-300))
    trace.reason += f"; interior harmonicity defect {defect:.2e}"
    trace.harmonic_defect = defect
    return best.density, trace


# ----------------------------------------------------------------------------
# criticality checks


def unit_sum_recombination(Phi: np.ndarray, weights: np.ndarray | None = None):
    """Linear recombination Psi = Phi L with sum_a Psi_a^2 close to 1.

    Least squares over symmetric C with sum_ab C_ab Phi_a Phi_b = 1 (weighted
    by ``weights``), projected to the PSD cone and factored C = L L^T.
    Returns (Psi, max_i |sum_a Psi_ia^2 - 1|).
    """
    Phi = np.asarray(Phi, dtype=float)
    n, d = Phi.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    iu = np.triu_indices(d)
    cols = Phi[:, iu[0]] * Phi[:, iu[1]] * np.where(iu[0] == iu[1], 1.0, 2.0)
    sw = np.sqrt(w)
    coef, _, rank, _ = np.linalg.lstsq(cols * sw[:, None], sw, rcond=None)
    if rank == 0:
        raise ValueError("recombination system is singular")
    C = np.zeros((d, d))
    C[iu] = coef
    C = C + C.T - np.diag(np.diag(C))
    ev, Vc = np.linalg.eigh(C)
    L = Vc * np.sqrt(np.clip(ev, 0, None))
    Psi = Phi @ L
    return Psi, float(np.abs(np.einsum("ia,ia->i", Psi, Psi) - 1).max())


@dataclass(frozen=True)
class DensityCriticality:
    m: int
    eigenvalue: float
    eigenspace_dim: int
    r1: float
    r2: float
    spectral_index: int
    tol: float
    map: SphereMap

    @property
    def critical(self) -> bool:
        return self.r1 < self.tol and self.r2 < self.tol and self.spectral_index <= self.m


def criticality_check_density(man: DiscreteManifold, beta, m: int = 1, tol: float = 0.02, rel_gap: float = 1e-2):
    """Fixed-point relation lambda_m(beta) beta = e(u) for u = Phi/|Phi|.

    r1 = |lambda_m beta - e(u)|_M / |e(u)|_M, r2 = unit-sum-of-squares
    residual after recombination of the eigenbasis, plus ind_S(u).
    """
    b = np.asarray(beta, dtype=float)
    spec = weighted_laplace_spectrum(man, b, m + 8, zero_tol=np.inf)
    Phi = spec.eigenspace(m, rel_gap)
    lam = spec.value(m)
    u = _eigen_map(Phi, man.mass * b, 1e-3, strict=False)
    e = energy_density(man, u)
    r1 = float(np.sqrt(man.mass @ (lam * b - e) ** 2) / np.sqrt(man.mass @ e**2))
    _, r2 = unit_sum_recombination(Phi, man.mass)
    umap = SphereMap(_pad(u))
    ind = spectral_index(man, umap).negative_count
    return DensityCriticality(m, lam, Phi.shape[1], r1, r2, ind, tol, umap)


@dataclass(frozen=True)
class PotentialCriticality:
    m: int
    nu_m: float
    nu_m1: float
    zero_tol: float
    eigenspace_dim: int
    density_residual: float
    unit_sum_residual: float
    status: str  # "interior", "outside" or "critical-candidate"
    tol: float

    @property
    def critical(self) -> bool:
        return (
            self.status == "critical-candidate"
            and self.density_residual < self.tol
            and self.unit_sum_residual < self.tol
        )


def criticality_check_potential(
    man: DiscreteManifold, V, m: int = 1, tol: float = 0.02, zero_tol: float | None = None
) -> PotentialCriticality:
    """Report nu_m and nu_{m+1}; build u from the nu_{m+1} eigenspace.

    The eigenspace is the set of eigenvalues within ``zero_tol`` of nu_{m+1}.
    ``status`` is "interior" when nu_{m+1} > zero_tol (V + t stays in P_m for
    small t > 0), "outside" when nu_{m+1} < -zero_tol.
    """
    Vv = np.broadcast_to(np.asarray(V, dtype=float), (man.vertex_count,)).copy()
    zt = calibrated_zero_tol(man) if zero_tol is None else float(zero_tol)
    spec = schrodinger_spectrum(man, Vv, m + 8, zt)
    nu = spec.eigenvalues
    nu_m, nu_m1 = spec.value(m), spec.value(m + 1)
    sel = np.flatnonzero(np.abs(nu - nu_m1) <= zt)
    Phi = spec.eigenvectors[:, sel]
    u = _eigen_map(Phi, man.mass, 1e-3, strict=False)
    e = energy_density(man, u)
    dres = float(np.sqrt(man.mass @ (Vv - e) ** 2) / max(np.sqrt(man.mass @ Vv**2), 1e-300))
    _, ures = unit_sum_recombination(Phi, man.mass)
    if nu_m1 > zt:
        status = "interior"
    elif nu_m1 < -zt:
        status = "outside"
    else:
        status = "critical-candidate"
    return PotentialCriticality(m, nu_m, nu_m1, zt, len(sel), dres, ures, status, tol)


@dataclass(frozen=True)
class FreeBoundaryReport:
    interior_defect: float
    normality_defect: float
    nu2: float
    zero_tol: float
    spectral_index: int
    tol: float

    @property
    def passed(self) -> bool:
        return (
            self.interior_defect < self.tol
            and self.normality_defect < self.tol
            and abs(self.nu2) <= self.zero_tol
        )


def free_boundary_check(man: DiscreteManifold, u, tol: float = 0.02, zero_tol: float | None = None):
    """Interior harmonicity, orthogonality to the boundary sphere, and nu_2(|d_n u| ds).

    Interior defect: |(K u) on interior rows| / |K u|.  The normal derivative
    is DtN(u on boundary) / s.  Normality defect: max_i |d_n u_i - |d_n u_i| u_i|
    over max_i |d_n u_i|.
    """
    U = np.asarray(u, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    r = np.linalg.norm(U, axis=1)
    if r.max() > 1 + tol or np.abs(r[man.boundary] - 1).max() > tol:
        log.warning("free_boundary_check: map leaves the unit ball or misses the boundary sphere")
    KU = man.stiffness @ U
    interior = float(np.linalg.norm(KU[man.interior]) / max(np.linalg.norm(KU), 1e-300))
    ub = U[man.boundary]
    dn = (dtn_matrix(man) @ ub) / man.boundary_mass[:, None]
    v = np.linalg.norm(dn, axis=1)
    normal = float(np.linalg.norm(dn - v[:, None] * ub, axis=1).max() / max(v.max(), 1e-300))
    zt = calibrated_zero_tol(man) if zero_tol is None else float(zero_tol)
    spec = boundary_schrodinger_spectrum(man, v, 6, zt)
    nu = spec.eigenvalues
    return FreeBoundaryReport(interior, normal, float(nu[1]), zt, int(np.sum(nu < -zt)), tol)


def stabilization_probe(man: DiscreteManifold, trace: OptimizeTrace | SphereMap | np.ndarray, svd_tol: float = 1e-3) -> int:
    """Numerical rank of the vertex-by-ambient matrix of the final map."""
    if isinstance(trace, OptimizeTrace):
        if trace.final_map is None:
            raise ValueError("trace has no final map")
        values = trace.final_map.values
    else:
        values = np.asarray(trace, dtype=float)
    return effective_rank(values, svd_tol)
