"""Sphere-valued harmonic maps: Ginzburg-Landau relaxation, projected flow,
residuals, stress-energy defect, Morse and spectral indices.

Maps are (N, k+1) arrays of vertex values; :class:`SphereMap` adds the
on-sphere flag and converts to an array transparently.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .domain import DiscreteManifold, as_field, dirichlet_energy, energy_density, energy_tensor
from .spectral import _solve_pencil, calibrated_zero_tol, schrodinger_spectrum

log = logging.getLogger(__name__)

__all__ = [
    "SphereMap",
    "GLConfig",
    "IndexReport",
    "ConvergenceError",
    "normalize_rows",
    "potential_W",
    "gl_energy",
    "gl_gradient",
    "gl_descent",
    "gl_continuation",
    "default_schedule",
    "harmonic_flow",
    "flow_history",
    "gl_energy_density",
    "harmonic_residual",
    "tangential_residual",
    "stress_defect",
    "tangent_frames",
    "second_variation_apply",
    "second_variation_general",
    "sphere_second_fundamental_form",
    "tangential_hessian",
    "morse_index",
    "spectral_index",
    "check_index_relations",
    "lemma33_check",
    "monotonicity_diagnostic",
    "map_degree",
]


class ConvergenceError(RuntimeError):
    """Raised when a solver cannot make progress; ``stage`` is set by continuation."""

    def __init__(self, msg: str, stage: int | None = None):
        super().__init__(msg if stage is None else f"stage {stage}: {msg}")
        self.stage = stage


@dataclass(frozen=True)
class SphereMap:
    values: np.ndarray
    on_sphere: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] < 2:
            raise ValueError("sphere map needs shape (N, k+1) with k >= 1")
        if self.on_sphere:
            dev = np.abs(np.linalg.norm(v, axis=1) - 1.0).max()
            if dev > 1e-12:
                raise ValueError(f"rows are not unit vectors (max deviation {dev:.2e})")
        object.__setattr__(self, "values", v)

    @property
    def target_dim(self) -> int:
        return self.values.shape[1] - 1

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @classmethod
    def project(cls, u) -> "SphereMap":
        return cls(normalize_rows(np.asarray(u, dtype=float)))


def normalize_rows(u: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(u, axis=1, keepdims=True)
    if np.any(r == 0):
        raise ValueError("cannot project a zero vector to the sphere")
    return u / r


# ----------------------------------------------------------------------------
# Ginzburg-Landau potential


def _quintic(ra, rb, fa, fb) -> np.ndarray:
    """Polynomial coefficients (low to high) matching value, slope and curvature."""
    A, y = [], []
    for r, f in ((ra, fa), (rb, fb)):
        A.append([r**k for k in range(6)])
        A.append([k * r ** (k - 1) if k > 0 else 0.0 for k in range(6)])
        A.append([k * (k - 1) * r ** (k - 2) if k > 1 else 0.0 for k in range(6)])
        y.extend(f)
    return np.linalg.solve(np.array(A, dtype=float), np.array(y, dtype=float))


@dataclass(frozen=True)
class GLConfig:
    """Relaxation parameter and radial potential shape.

    W = (|a|-1)^2 in the tube ||a|-1| <= delta0/2, W = |a|^2 beyond R0, quintic
    Hermite blends (C^2) on the two shells in between.  ``origin_curvature`` is
    W''(0); W'(0) = 0 keeps W smooth at the origin.
    """

    epsilon: float
    delta0: float = 0.5
    R0: float = 2.0
    blend: str = "quintic"
    origin_curvature: float = -2.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta0 < 1:
            raise ValueError("delta0 must lie in (0, 1)")
        if self.R0 < 1 + self.delta0:
            raise ValueError("R0 must be at least 1 + delta0")
        if self.blend != "quintic":
            raise ValueError("only the quintic blend is implemented")
        # the blends must stay monotone and inside [delta0^2/4, R0^2]
        lo, hi = self.delta0**2 / 4, self.R0**2
        for (a, b), c, sign in (
            ((0.0, self.r_in), self._inner, -1),
            ((self.r_out, self.R0), self._outer, 1),
        ):
            r = np.linspace(a, b, 2001)
            f = np.polynomial.polynomial.polyval(r, c)
            df = np.polynomial.polynomial.polyval(r, np.polynomial.polynomial.polyder(c))
            if f.min() < lo * (1 - 1e-9) or f.max() > hi * (1 + 1e-9) or np.any(sign * df < -1e-12):
                raise ValueError("potential blend is not monotone within the required bounds")

    @property
    def r_in(self) -> float:
        return 1.0 - self.delta0 / 2

    @property
    def r_out(self) -> float:
        return 1.0 + self.delta0 / 2

    @cached_property
    def _inner(self):
        r = self.r_in
        return _quintic(0.0, r, (1.0, 0.0, self.origin_curvature), ((r - 1) ** 2, 2 * (r - 1), 2.0))

    @cached_property
    def _outer(self):
        r, R = self.r_out, self.R0
        return _quintic(r, R, ((r - 1) ** 2, 2 * (r - 1), 2.0), (R**2, 2 * R, 2.0))

    def with_epsilon(self, eps: float) -> "GLConfig":
        return GLConfig(eps, self.delta0, self.R0, self.blend, self.origin_curvature)

    def radial(self, r: np.ndarray):
        """W and dW/dr as functions of the radius."""
        P = np.polynomial.polynomial
        r0 = np.asarray(r, dtype=float)
        r = np.atleast_1d(r0)
        w = (r - 1.0) ** 2
        dw = 2.0 * (r - 1.0)
        inner = r < self.r_in
        outer = (r > self.r_out) & (r < self.R0)
        far = r >= self.R0
        if inner.any():
            w[inner] = P.polyval(r[inner], self._inner)
            dw[inner] = P.polyval(r[inner], P.polyder(self._inner))
        if outer.any():
            w[outer] = P.polyval(r[outer], self._outer)
            dw[outer] = P.polyval(r[outer], P.polyder(self._outer))
        w[far] = r[far] ** 2
        dw[far] = 2.0 * r[far]
        return w.reshape(r0.shape), dw.reshape(r0.shape)


def potential_W(a, cfg: GLConfig):
    """Value and gradient of W at ambient point(s) ``a`` (last axis is ambient)."""
    a = np.asarray(a, dtype=float)
    r = np.linalg.norm(a, axis=-1)
    w, dw = cfg.radial(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r > 0, dw / np.where(r > 0, r, 1.0), 0.0)
    return w, scale[..., None] * a


def _dirichlet_delta(man: DiscreteManifold, U: np.ndarray, V: np.ndarray) -> float:
    d = V - U
    return 0.5 * float(np.einsum("ic,ic->", d, man.stiffness @ (U + V)))


def _potential_delta(man: DiscreteManifold, U: np.ndarray, V: np.ndarray, cfg: GLConfig) -> float:
    r0 = np.linalg.norm(U, axis=1)
    r1 = np.linalg.norm(V, axis=1)
    w0, _ = cfg.radial(r0)
    w1, _ = cfg.radial(r1)
    dw = w1 - w0
    tube = (np.abs(r0 - 1) <= cfg.delta0 / 2) & (np.abs(r1 - 1) <= cfg.delta0 / 2)
    # (r1-1)^2 - (r0-1)^2 factored; r1 - r0 from the rows themselves
    dr = np.einsum("ic,ic->i", V - U, V + U) / np.maximum(r0 + r1, 1e-300)
    dw[tube] = (dr * (r0 + r1 - 2.0))[tube]
    return float(man.mass @ dw) / cfg.epsilon**2


def gl_energy(man: DiscreteManifold, u, cfg: GLConfig) -> float:
    """E_eps(u) = E(u) + sum_i m_i W(u_i) / eps^2."""
    U = as_field(man, u)
    w, _ = potential_W(U, cfg)
    return dirichlet_energy(man, U) + float(man.mass @ w) / cfg.epsilon**2


def gl_energy_density(man: DiscreteManifold, u, cfg: GLConfig) -> np.ndarray:
    """Per-vertex e_eps = e(u)/2 + W(u)/eps^2 (sums to E_eps against the mass)."""
    U = as_field(man, u)
    w, _ = potential_W(U, cfg)
    return 0.5 * energy_density(man, U) + w / cfg.epsilon**2


def gl_gradient(man: DiscreteManifold, u, cfg: GLConfig) -> np.ndarray:
    """Gradient of E_eps in the lumped-mass metric: M^{-1} K u + DW(u)/eps^2."""
    U = as_field(man, u)
    _, dw = potential_W(U, cfg)
    return (man.stiffness @ U) / man.mass[:, None] + dw / cfg.epsilon**2


def _max_norm(g):
    return float(np.sqrt(np.einsum("ic,ic->i", g, g)).max())


def _lambda_max(man: DiscreteManifold) -> float:
    """Largest eigenvalue of M^{-1} K by power iteration (cached)."""

    def compute():
        rng = np.random.default_rng(0)
        x = rng.standard_normal(man.vertex_count)
        lam = 0.0
        for _ in range(200):
            y = (man.stiffness @ x) / man.mass
            new = float(np.linalg.norm(y) / np.linalg.norm(x))
            x = y / np.linalg.norm(y)
            if abs(new - lam) < 1e-6 * new:
                lam = new
                break
            lam = new
        return 1.05 * lam

    return man.cached("lambda_max", compute)


class DescentResult(NamedTuple):
    u: np.ndarray
    energy: float
    residual: float
    iterations: int
    converged: bool
    energies: np.ndarray


def _descent(energy, delta, gradient, step, inner, u0, resid, tau0, tol, max_iters, armijo=1e-4):
    """Backtracking gradient descent shared by both solvers.

    Trial steps use the Barzilai-Borwein length from the last two iterates;
    each trial is halved until the Armijo condition holds, so accepted energies
    never increase.  ``delta(u, v)`` evaluates E(v) - E(u) without the
    cancellation of subtracting two energies.  ``step(u, g, tau)`` returns the trial point,
    ``inner(a, b)`` is the metric pairing and ``resid(u, g)`` the stopping
    measure.
    """
    u = u0
    E = energy(u)
    g = gradient(u)
    r = resid(u, g)
    energies = [E]
    best = (r, u)
    tau = tau0
    floor = 1e-12 * tau0
    it = 0
    while r > tol and it < max_iters:
        slope = inner(g, g)
        while True:
            trial = step(u, g, tau)
            dE = delta(u, trial)
            if dE <= -armijo * tau * slope:
                break
            tau *= 0.5
            if tau < floor:
                raise ConvergenceError(f"step underflow at iteration {it} (residual {r:.3e})")
        g_new = gradient(trial)
        ds, dg = trial - u, g_new - g
        sy = inner(ds, dg)
        tau = inner(ds, ds) / sy if sy > 0 else 2.0 * tau
        tau = min(max(tau, tau0), 1e6 * tau0)
        u, E, g = trial, E + dE, g_new
        r = resid(u, g)
        energies.append(E)
        if r < best[0]:
            best = (r, u)
        it += 1
    if r > tol:
        r, u = best
    return DescentResult(u, energy(u), r, it, r <= tol, np.asarray(energies))


def gl_descent(
    man: DiscreteManifold, u0, cfg: GLConfig, tol: float = 1e-6, max_iters: int = 50_000
) -> DescentResult:
    """Damped gradient descent on E_eps with backtracking.

    Stops when max_i |M^{-1} K u + DW(u)/eps^2|_i <= tol.  Hitting ``max_iters``
    returns the accepted iterate with the smallest residual and
    ``converged=False``.
    """
    U0 = as_field(man, u0).copy()
    if not np.all(np.isfinite(U0)):
        raise ValueError("initial field must be finite")
    tau0 = 1.0 / (_lambda_max(man) + 2.0 / cfg.epsilon**2)

    res = _descent(
        energy=lambda u: gl_energy(man, u, cfg),
        delta=lambda u, v: _dirichlet_delta(man, u, v) + _potential_delta(man, u, v, cfg),
        gradient=lambda u: gl_gradient(man, u, cfg),
        step=lambda u, g, tau: u - tau * g,
        inner=lambda x, y: float(np.einsum("i,ic,ic->", man.mass, x, y)),
        u0=U0,
        resid=lambda u, g: _max_norm(g),
        tau0=tau0,
        tol=tol,
        max_iters=max_iters,
    )
    if not res.converged:
        log.warning("gl_descent stopped after %d iterations (residual %.3e)", res.iterations, res.residual)
    return res


def default_schedule(man: DiscreteManifold, start: float = 0.4, ratio: float = 0.5) -> list[float]:
    stop = max(0.05, 2.0 * man.mesh_size)
    out = [start]
    while out[-1] * ratio >= stop * (1 - 1e-12):
        out.append(out[-1] * ratio)
    return out


@dataclass
class ContinuationStage:
    stage: int
    epsilon: float
    iterations: int
    dirichlet: float
    potential_term: float
    residual: float
    converged: bool


def gl_continuation(
    man: DiscreteManifold,
    u0,
    epsilon_schedule: Sequence[float] | None = None,
    cfg: GLConfig | None = None,
    tol: float = 1e-6,
    max_iters: int = 50_000,
):
    """Warm-started gl_descent over a decreasing epsilon schedule.

    Returns the final iterate projected to the sphere and one trace row per
    stage (Dirichlet part and potential part of E_eps reported separately).
    """
    sched = list(default_schedule(man) if epsilon_schedule is None else epsilon_schedule)
    if not sched or any(b >= a for a, b in zip(sched, sched[1:])) or sched[-1] <= 0:
        raise ValueError("epsilon schedule must be positive and strictly decreasing")
    base = cfg or GLConfig(sched[0])
    U = as_field(man, u0).copy()
    trace: list[ContinuationStage] = []
    for j, eps in enumerate(sched):
        c = base.with_epsilon(eps)
        try:
            res = gl_descent(man, U, c, tol=tol, max_iters=max_iters)
        except ConvergenceError as exc:
            raise ConvergenceError(str(exc), stage=j) from exc
        U = res.u
        w, _ = potential_W(U, c)
        trace.append(
            ContinuationStage(
                j, eps, res.iterations, dirichlet_energy(man, U),
                float(man.mass @ w) / eps**2, res.residual, res.converged,
            )
        )
    if np.any(np.linalg.norm(U, axis=1) == 0):
        raise ConvergenceError("final iterate vanishes at a vertex", stage=len(sched) - 1)
    return SphereMap.project(U), trace


# ----------------------------------------------------------------------------
# constrained flow and residuals


def _tangential(u: np.ndarray, g: np.ndarray) -> np.ndarray:
    return g - np.einsum("ic,ic->i", g, u)[:, None] * u


def _mnorm(man, f):
    return float(np.sqrt(np.einsum("i,ic,ic->", man.mass, f, f)))


def _laplacian(man: DiscreteManifold, U: np.ndarray) -> np.ndarray:
    # shifting by a constant row keeps M^{-1} K u exactly zero on constant maps
    return (man.stiffness @ (U - U[0])) / man.mass[:, None]


def tangential_residual(man: DiscreteManifold, u) -> float:
    """|P_u M^{-1} K u|_M / |e(u)|_M, the criticality measure of the flow."""
    U = as_field(man, u)
    g = _laplacian(man, U)
    e = energy_density(man, U)
    denom = float(np.sqrt(man.mass @ e**2))
    num = _mnorm(man, _tangential(U, g))
    return 0.0 if num == 0 else num / max(denom, 1e-300)


def harmonic_residual(man: DiscreteManifold, u) -> float:
    """|M^{-1} K u - e(u) u|_M / |e(u)|_M (zero for constant maps)."""
    U = as_field(man, u)
    e = energy_density(man, U)
    r = _laplacian(man, U) - e[:, None] * U
    num = _mnorm(man, r)
    denom = float(np.sqrt(man.mass @ e**2))
    if num == 0:
        return 0.0
    return num / max(denom, 1e-300)


def harmonic_flow(man: DiscreteManifold, u0, tol: float = 1e-5, max_iters: int = 20_000) -> SphereMap:
    """Projected gradient descent u <- normalize(u - tau P_u M^{-1} K u).

    The step is line-searched on the Dirichlet energy; iteration stops when
    :func:`tangential_residual` is below ``tol``.  Raises
    :class:`ConvergenceError` on step underflow; ``max_iters`` exhaustion
    logs a warning and returns the accepted iterate with the smallest residual.

    On coarse spheres the discrete energy is not conformally invariant and the
    symmetric critical point is a weak saddle along the Mobius directions, so
    very small tolerances can be unreachable: the iterate slides slowly toward
    a concentrated map once the other modes have decayed.
    """
    U0 = np.asarray(u0, dtype=float)
    SphereMap(U0)  # validates on-sphere input
    lam = _lambda_max(man)
    Minv = 1.0 / man.mass[:, None]

    def gradient(u):
        return _tangential(u, (man.stiffness @ (u - u[0])) * Minv)

    def resid(u, g):
        e = energy_density(man, u)
        denom = float(np.sqrt(man.mass @ e**2))
        num = _mnorm(man, g)
        return 0.0 if num == 0 else num / max(denom, 1e-300)

    res = _descent(
        energy=lambda u: dirichlet_energy(man, u),
        delta=lambda u, v: _dirichlet_delta(man, u, v),
        gradient=gradient,
        step=lambda u, g, tau: normalize_rows(u - tau * g),
        inner=lambda x, y: float(np.einsum("i,ic,ic->", man.mass, x, y)),
        u0=U0.copy(),
        resid=resid,
        tau0=1.0 / lam,
        tol=tol,
        max_iters=max_iters,
    )
    if not res.converged:
        log.warning("harmonic_flow stopped after %d iterations (residual %.3e)", res.iterations, res.residual)
    out = SphereMap(normalize_rows(res.u))
    object.__setattr__(out, "_history", res)
    return out


def flow_history(u: SphereMap) -> DescentResult | None:
    return getattr(u, "_history", None)


# ----------------------------------------------------------------------------
# stress-energy defect


def _triangle_gradients(pos: np.ndarray, tris: np.ndarray):
    """Ambient gradients of the three hat functions on each triangle, and areas."""
    p = pos[tris]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    dbl = np.linalg.norm(n, axis=1)
    nh = n / dbl[:, None]
    grads = np.empty_like(p)
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        grads[:, k] = np.cross(nh, p[:, j] - p[:, i]) / dbl[:, None]
    return grads, 0.5 * dbl


def stress_defect(man: DiscreteManifold, u, X, relative: bool = False) -> float:
    """Discrete  sum over cells of vol * (1/2 |du|^2 div X - <du^* du, DX>).

    Triangles use P1 gradients (this is the derivative of the mesh Dirichlet
    energy when vertices move along X); the torus grid uses forward differences
    on each cell.  With ``relative`` the result is divided by the same sum
    taken over absolute values of the two integrand terms.
    """
    U = as_field(man, u)
    U = U - U[0]
    Xf = as_field(man, X)
    if man.elements is not None:
        if Xf.shape[1] != man.positions.shape[1]:
            raise ValueError("X must be an ambient vector field")
        g, area = _triangle_gradients(man.positions, man.elements)
        tris = man.elements
        du = np.einsum("tkp,tkc->tpc", g, U[tris])
        DX = np.einsum("tkp,tkq->tpq", g, Xf[tris])
    else:
        shape = tuple(man.params["resolution"])
        h = np.asarray(man.params["spacing"])
        n = len(shape)
        if Xf.shape[1] != n:
            raise ValueError("X must have one component per torus axis")
        Ug = U.reshape(shape + (U.shape[1],))
        Xg = Xf.reshape(shape + (n,))
        du = np.stack([((np.roll(Ug, -1, a) - Ug) / h[a]).reshape(-1, U.shape[1]) for a in range(n)], 1)
        DX = np.stack([((np.roll(Xg, -1, a) - Xg) / h[a]).reshape(-1, n) for a in range(n)], 1)
        area = np.full(len(U), float(np.prod(h)))
    dens = np.einsum("tpc,tpc->t", du, du)
    div = np.einsum("tpp->t", DX)
    pull = np.einsum("tpc,tqc->tpq", du, du)
    a = 0.5 * dens * div
    b = np.einsum("tpq,tpq->t", pull, DX)
    total = float(area @ (a - b))
    if relative:
        scale = float(area @ (np.abs(a) + np.abs(b)))
        return 0.0 if total == 0 else total / scale
    return total


# ----------------------------------------------------------------------------
# second variation and indices


def tangent_frames(u: np.ndarray) -> np.ndarray:
    """Orthonormal bases of u_i^perp, shape (N, k+1, k).

    Householder reflection sending e_0 to u_i (or to -u_i when u_i is close to
    e_0); its remaining columns span the tangent space.
    """
    U = np.asarray(u, dtype=float)
    N, c = U.shape
    e0 = np.zeros(c)
    e0[0] = 1.0
    flip = U[:, 0] > 0.5
    w = U - e0
    w[flip] = U[flip] + e0
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    H = np.eye(c)[None] - 2.0 * w[:, :, None] * w[:, None, :]
    return H[:, :, 1:]


def _check_tangential(u: np.ndarray, v: np.ndarray):
    scale = max(float(np.abs(v).max()), 1.0)
    if np.abs(np.einsum("ic,ic->i", u, v)).max() > 1e-10 * scale:
        raise ValueError("variation is not tangential")


def second_variation_apply(man: DiscreteManifold, u, v) -> float:
    """E''(u)(v, v) = sum_c v_c^T K v_c - sum_i m_i e_i |v_i|^2."""
    U = as_field(man, u)
    Vv = as_field(man, v)
    if Vv.shape != U.shape:
        raise ValueError("variation and map differ in shape")
    _check_tangential(U, Vv)
    e = energy_density(man, U)
    return float(np.einsum("ic,ic->", Vv, man.stiffness @ Vv) - man.mass @ (e * np.einsum("ic,ic->i", Vv, Vv)))


def sphere_second_fundamental_form(p: np.ndarray, S: np.ndarray) -> np.ndarray:
    """II of the unit sphere applied to symmetric tensors: II_p(S) = -tr(S) p."""
    return -np.trace(S, axis1=-2, axis2=-1)[..., None] * p


def second_variation_general(
    man: DiscreteManifold,
    u,
    v,
    second_fundamental_form: Callable[[np.ndarray, np.ndarray], np.ndarray] = sphere_second_fundamental_form,
) -> float:
    """|dv|^2 - < II(u)(du^* du), II(u)(v, v) > for a target given by its II."""
    U = as_field(man, u)
    Vv = as_field(man, v)
    _check_tangential(U, Vv)
    G = energy_tensor(man, U)
    a = second_fundamental_form(U, G)
    b = second_fundamental_form(U, Vv[:, :, None] * Vv[:, None, :])
    return float(np.einsum("ic,ic->", Vv, man.stiffness @ Vv) - man.mass @ np.einsum("ic,ic->i", a, b))


def tangential_hessian(man: DiscreteManifold, u, mask=None):
    """Second variation in per-vertex tangent frames.

    Returns (H, mass_diag, frames) where H acts on coefficient vectors ordered
    vertex-major (N * k).  With ``mask`` only vertices in the mask carry
    degrees of freedom (variations vanish elsewhere).
    """
    U = np.asarray(u, dtype=float)
    N, c = U.shape
    k = c - 1
    T = tangent_frames(U)
    rows = (np.arange(N)[:, None, None] * c + np.arange(c)[None, :, None]) * np.ones((1, 1, k), dtype=int)
    cols = (np.arange(N)[:, None, None] * k + np.arange(k)[None, None, :]) * np.ones((1, c, 1), dtype=int)
    Tm = sp.csr_matrix((T.ravel(), (rows.ravel(), cols.ravel())), shape=(N * c, N * k))
    Kc = sp.kron(man.stiffness, sp.identity(c), format="csr")
    e = energy_density(man, U)
    H = (Tm.T @ Kc @ Tm - sp.diags(np.repeat(man.mass * e, k))).tocsr()
    mdiag = np.repeat(man.mass, k)
    if mask is not None:
        sel = np.repeat(np.asarray(mask, dtype=bool), k)
        H = H[sel][:, sel]
        mdiag = mdiag[sel]
    return 0.5 * (H + H.T), mdiag, T


@dataclass(frozen=True)
class IndexReport:
    negative_count: int
    null_count: int
    zero_tol: float
    smallest_eigenvalues: np.ndarray

    @classmethod
    def from_values(cls, values: np.ndarray, tol: float) -> "IndexReport":
        v = np.sort(np.asarray(values, dtype=float))
        return cls(int(np.sum(v < -tol)), int(np.sum(np.abs(v) <= tol)), float(tol), v)


def _index_from_pencil(H, mdiag, tol, shift, start=16, backend="auto"):
    n = H.shape[0]
    count = min(start, n)
    while True:
        lam, _, _ = _solve_pencil(H, mdiag, count, shift, backend)
        if lam[-1] > tol or count == n:
            return IndexReport.from_values(lam, tol)
        count = min(2 * count, n)


def morse_index(man: DiscreteManifold, u, zero_tol: float | None = None, mask=None, backend="auto") -> IndexReport:
    """Index and nullity of E''(u) on tangential variations (M-inner product)."""
    U = np.asarray(u, dtype=float)
    SphereMap(U)
    tol = calibrated_zero_tol(man) if zero_tol is None else float(zero_tol)
    H, mdiag, _ = tangential_hessian(man, U, mask)
    if H.shape[0] == 0:
        return IndexReport(0, 0, tol, np.zeros(0))
    e = energy_density(man, U)
    shift = -float(e.max()) - float(H.diagonal().sum() / mdiag.sum() / len(mdiag))
    return _index_from_pencil(H, mdiag, tol, shift, backend=backend)


def spectral_index(man: DiscreteManifold, u, zero_tol: float | None = None) -> IndexReport:
    """Negative and zero eigenvalue counts of K - diag(m e(u)) against M."""
    U = np.asarray(u, dtype=float)
    SphereMap(U)
    tol = calibrated_zero_tol(man) if zero_tol is None else float(zero_tol)
    e = energy_density(man, U)
    count = min(8, man.vertex_count)
    while True:
        nu = schrodinger_spectrum(man, e, count, tol).eigenvalues
        if nu[-1] > tol or count == man.vertex_count:
            return IndexReport.from_values(nu, tol)
        count = min(2 * count, man.vertex_count)


@dataclass(frozen=True)
class IndexRelations:
    k: int
    k_prime: int
    ind_E: int
    ind_S: int
    ind_E_embedded: int
    ind_S_embedded: int
    predicted_embedded: int

    @property
    def index_bound_holds(self) -> bool:
        return self.ind_S * (self.k + 1) >= self.ind_E

    @property
    def composition_holds(self) -> bool:
        return self.ind_E_embedded == self.predicted_embedded

    @property
    def spectral_invariant(self) -> bool:
        return self.ind_S == self.ind_S_embedded

    @property
    def ok(self) -> bool:
        return self.index_bound_holds and self.composition_holds and self.spectral_invariant


def check_index_relations(man: DiscreteManifold, u, k_prime: int, zero_tol: float | None = None) -> IndexRelations:
    """ind_S >= ind_E/(k+1) and ind_E(i o u) = ind_E(u) + (k'-k) ind_S(u),
    with i the zero-padding embedding S^k -> S^k'."""
    U = np.asarray(u, dtype=float)
    k = U.shape[1] - 1
    if k_prime <= k:
        raise ValueError("k_prime must exceed k")
    padded = np.hstack([U, np.zeros((len(U), k_prime - k))])
    mE = morse_index(man, U, zero_tol)
    sS = spectral_index(man, U, zero_tol)
    mE2 = morse_index(man, padded, zero_tol)
    sS2 = spectral_index(man, padded, zero_tol)
    return IndexRelations(
        k, k_prime, mE.negative_count, sS.negative_count, mE2.negative_count,
        sS2.negative_count, mE.negative_count + (k_prime - k) * sS.negative_count,
    )


@dataclass(frozen=True)
class StabilityInequalityReport:
    local_index: int
    p: int
    vacuous: bool
    lhs: np.ndarray
    rhs: np.ndarray
    violations: int
    slack: float


def lemma33_check(
    man: DiscreteManifold, u, region_mask, psi_samples, slack: float = 0.05, zero_tol: float | None = None
) -> StabilityInequalityReport:
    """Test (p/(p+3)) sum m e psi^2 <= psi^T K psi on the masked region.

    p is read off the local Morse index, ind_E(u; region) = k - 2 - p.  A
    violation is counted when the left side exceeds (1 + slack) times the right.
    """
    U = np.asarray(u, dtype=float)
    k = U.shape[1] - 1
    mask = np.asarray(region_mask, dtype=bool)
    ind = morse_index(man, U, zero_tol, mask=mask).negative_count
    p = k - 2 - ind
    psis = [np.asarray(ps, dtype=float) for ps in psi_samples]
    for ps in psis:
        if np.any(ps[~mask] != 0):
            raise ValueError("test function is not supported in the region")
    e = energy_density(man, U)
    if p <= 0:
        return StabilityInequalityReport(ind, p, True, np.zeros(0), np.zeros(0), 0, slack)
    lhs = np.array([p / (p + 3) * float(man.mass @ (e * ps**2)) for ps in psis])
    rhs = np.array([float(ps @ (man.stiffness @ ps)) for ps in psis])
    return StabilityInequalityReport(ind, p, False, lhs, rhs, int(np.sum(lhs > (1 + slack) * rhs)), slack)


@dataclass(frozen=True)
class MonotonicityTable:
    radii: np.ndarray
    ratios: np.ndarray
    fitted_C: float
    dips: np.ndarray  # relative drop between consecutive radii (0 where increasing)
    flagged: np.ndarray  # radii indices with a drop above the allowance


def graph_distances(man: DiscreteManifold, source: int) -> np.ndarray:
    a, b = man.edges[:, 0], man.edges[:, 1]
    G = sp.coo_matrix((man.edge_lengths, (a, b)), shape=(man.vertex_count,) * 2).tocsr()
    return dijkstra(G, directed=False, indices=source)


def monotonicity_diagnostic(
    man: DiscreteManifold, u_eps, cfg: GLConfig, center_vertex: int, radii, dip_allowance: float = 0.05
) -> MonotonicityTable:
    """r^{2-n} * (GL energy in the graph ball of radius r) for each radius.

    ``fitted_C`` is the smallest C >= 0 making exp(C r^2) * ratio
    nondecreasing; drops larger than ``dip_allowance`` are flagged.
    """
    U = as_field(man, u_eps)
    r = np.asarray(radii, dtype=float)
    if np.any(np.diff(r) <= 0) or r[0] <= 0:
        raise ValueError("radii must be positive and increasing")
    d = graph_distances(man, center_vertex)
    if r[-1] > 0.5 * d[np.isfinite(d)].max():
        raise ValueError("largest radius exceeds half the domain diameter")
    dens = man.mass * gl_energy_density(man, U, cfg)
    ratios = []
    for rr in r:
        inside = d < rr
        if not inside.any():
            raise ValueError(f"ball of radius {rr} is empty")
        ratios.append(rr ** (2 - man.dim) * float(dens[inside].sum()))
    ratios = np.asarray(ratios)
    dips = np.zeros(len(r))
    C = 0.0
    for j in range(len(r) - 1):
        a, b = ratios[j], ratios[j + 1]
        if a > 0 and b < a:
            dips[j + 1] = (a - b) / a
            C = max(C, np.log(a / max(b, 1e-300)) / (r[j + 1] ** 2 - r[j] ** 2))
    return MonotonicityTable(r, ratios, float(C), dips, np.flatnonzero(dips > dip_allowance))


def map_degree(man: DiscreteManifold, u) -> float:
    """Degree of a map from a triangulated sphere to S^2 (signed image area / 4 pi)."""
    if man.elements is None or np.asarray(u).shape[1] != 3:
        raise ValueError("degree needs a triangle mesh and a map into S^2")
    U = normalize_rows(np.asarray(u, dtype=float))
    P = man.positions
    tris = man.elements
    # orient triangles outward on the domain sphere
    nrm = np.cross(P[tris[:, 1]] - P[tris[:, 0]], P[tris[:, 2]] - P[tris[:, 0]])
    sign = np.sign(np.einsum("ij,ij->i", nrm, P[tris].mean(axis=1)))
    a, b, c = U[tris[:, 0]], U[tris[:, 1]], U[tris[:, 2]]
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = 1 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    omega = 2 * np.arctan2(num, den)
    return float((sign * omega).sum() / (4 * np.pi))
