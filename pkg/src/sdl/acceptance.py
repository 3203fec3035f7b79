"""Acceptance checks, shared by ``sdl verify`` and the test suite.

Each check returns a :class:`CriterionResult`; ``fast`` trims sample counts
(never tolerances) for a quick smoke run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import domain, harmonic, optimize, spectral

EIGHT_PI = 8 * np.pi
FOUR_PI = 4 * np.pi
TWO_PI2 = 2 * np.pi**2


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_short(v)}" for k, v in self.details.items())
        return f"[{tag}] criterion {self.number}: {self.name} ({self.seconds:.1f}s) {info}"


def _short(v):
    if isinstance(v, (float, np.floating)):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _timed(number: int, name: str, fn: Callable[[], tuple[bool, dict]], limit: float | None = None) -> CriterionResult:
    t = time.perf_counter()
    try:
        ok, details = fn()
    except Exception as exc:  # a crash is a failed criterion, reported with its message
        ok, details = False, {"error": f"{type(exc).__name__}: {exc}"}
    dt = time.perf_counter() - t
    if limit is not None:
        details["limit_s"] = limit
        ok = ok and dt < limit
    return CriterionResult(number, name, bool(ok), details, dt)


def sphere_seeds(P: np.ndarray) -> list[np.ndarray]:
    """Three distinct non-constant initial densities on a unit sphere."""
    x, y, z = P.T
    return [1 + 0.5 * np.clip(z, 0, None), np.exp(y), 2 + np.sin(3 * x)]


def random_densities(P: np.ndarray, count: int, seed: int = 7) -> list[np.ndarray]:
    """Smooth positive densities exp(a g) with g a random cubic; every tenth
    one is cut to a random half-sphere (degenerate density)."""
    rng = np.random.default_rng(seed)
    x, y, z = P.T
    basis = np.stack([x, y, z, x * y, y * z, z * x, x * x - y * y, 3 * z * z - 1, x**3, y**3, z**3, x * y * z], 1)
    out = []
    for j in range(count):
        g = basis @ rng.standard_normal(basis.shape[1])
        b = np.exp(rng.uniform(0, 2) * g / np.abs(g).max())
        if j % 10 == 0:
            b = b * (P @ rng.standard_normal(3) > 0)
        out.append(b)
    return out


def torus_circle_map(man: domain.DiscreteManifold) -> np.ndarray:
    x = man.positions[:, 0]
    return np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x), np.zeros_like(x)], 1)


# ----------------------------------------------------------------------------


def criterion_1(fast: bool = False) -> CriterionResult:
    def run():
        man = domain.build_icosphere(5)
        lam = spectral.weighted_laplace_spectrum(man, 1.0, 8).eigenvalues
        e1 = np.abs(lam[1:4] / 2 - 1).max()
        e2 = np.abs(lam[4:9] / 6 - 1).max()
        return e1 < 0.005 and e2 < 0.01, {"max_rel_err_l1": e1, "max_rel_err_l2": e2}

    return _timed(1, "sphere spectrum oracle", run, limit=30.0)


def criterion_2(fast: bool = False) -> CriterionResult:
    def run():
        man = domain.build_icosphere(4)
        seeds = sphere_seeds(man.positions)[: 1 if fast else 3]
        F, sd, ok = [], [], True
        for b0 in seeds:
            beta, trace = optimize.maximize_F1(man, b0)
            f = spectral.functional_Fm(man, beta, 1) / EIGHT_PI
            s = float(np.std(beta) / np.mean(beta))
            F.append(f)
            sd.append(s)
            ok = ok and 0.98 <= f <= 1.02 and s < 0.03
        return ok, {"F1_over_8pi": F, "rel_std": sd}

    return _timed(2, "optimizer reaches 8 pi with constant density", run, limit=300.0)


def criterion_3(fast: bool = False) -> CriterionResult:
    def run():
        man = domain.build_icosphere(4)
        dens = random_densities(man.positions, 20 if fast else 100)
        viol, worst_ratio, worst_bound = 0, 0.0, 0.0
        for b in dens:
            bound, _ = optimize.certify_upper_bound_sphere(man, b)
            F = spectral.functional_Fm(man, b, 1)
            worst_ratio = max(worst_ratio, F / bound)
            worst_bound = max(worst_bound, bound / EIGHT_PI)
            viol += int(F > bound or bound > EIGHT_PI * 1.02)
        return viol == 0, {"samples": len(dens), "violations": viol, "max_F_over_bound": worst_ratio, "max_bound_over_8pi": worst_bound}

    return _timed(3, "certified Mobius bound chain", run)


def criterion_4(fast: bool = False) -> CriterionResult:
    def run():
        d = {}
        sph = domain.build_icosphere(4)
        P = sph.positions
        rng = np.random.default_rng(0)
        u0 = harmonic.normalize_rows(P + 0.1 * rng.standard_normal(P.shape))
        uf = harmonic.harmonic_flow(sph, u0)
        ug, tr_s = harmonic.gl_continuation(sph, P, [0.4, 0.2, 0.1, 0.05])
        d["flow_sphere_E"] = domain.dirichlet_energy(sph, uf.values) / FOUR_PI
        d["flow_sphere_deg"] = harmonic.map_degree(sph, uf.values)
        d["gl_sphere_E"] = domain.dirichlet_energy(sph, ug.values) / FOUR_PI
        d["gl_sphere_deg"] = harmonic.map_degree(sph, ug.values)
        d["gl_sphere_potential_ratio"] = tr_s[0].potential_term / tr_s[-1].potential_term

        tor = domain.build_flat_torus([1.0, 1.0], 64)
        x = tor.positions[:, 0]
        ang = 2 * np.pi * x + 0.1 * rng.standard_normal(len(x))
        v0 = np.stack([np.cos(ang), np.sin(ang), np.zeros_like(x)], 1)
        vf = harmonic.harmonic_flow(tor, v0)
        vg, tr_t = harmonic.gl_continuation(tor, torus_circle_map(tor), [0.1, 0.05, 0.025])
        d["flow_torus_E"] = domain.dirichlet_energy(tor, vf.values) / TWO_PI2
        d["gl_torus_E"] = domain.dirichlet_energy(tor, vg.values) / TWO_PI2
        d["gl_torus_potential_ratio"] = tr_t[0].potential_term / tr_t[-1].potential_term
        ok = (
            abs(d["flow_sphere_E"] - 1) <= 0.01
            and abs(d["gl_sphere_E"] - 1) <= 0.01
            and abs(d["flow_sphere_deg"] - 1) < 1e-6
            and abs(d["gl_sphere_deg"] - 1) < 1e-6
            and abs(d["flow_torus_E"] - 1) <= 0.02
            and abs(d["gl_torus_E"] - 1) <= 0.02
            and d["gl_sphere_potential_ratio"] >= 10
            and d["gl_torus_potential_ratio"] >= 10
        )
        return ok, d

    return _timed(4, "harmonic map energies", run)


def criterion_5(fast: bool = False) -> CriterionResult:
    def run():
        d, ok = {}, True
        sph = domain.build_icosphere(3)
        P = sph.positions
        mE = harmonic.morse_index(sph, P, backend="dense")
        sS = harmonic.spectral_index(sph, P)
        d["identity_indE_nullE"] = (mE.negative_count, mE.null_count)
        d["identity_indS_nulS"] = (sS.negative_count, sS.null_count)
        ok &= (mE.negative_count, mE.null_count) == (0, 6)
        ok &= (sS.negative_count, sS.null_count) == (1, 3)

        tor = domain.build_flat_torus([1.0, 1.0], 32)
        u = torus_circle_map(tor)
        tS = harmonic.spectral_index(tor, u)
        d["torus_indS_nulS"] = (tS.negative_count, tS.null_count)
        ok &= (tS.negative_count, tS.null_count) == (1, 4)

        for name, man, m in (("identity", sph, P), ("torus", tor, u)):
            rel = harmonic.check_index_relations(man, m, m.shape[1])
            d[f"{name}_composition"] = (rel.ind_E_embedded, rel.predicted_embedded)
            d[f"{name}_index_bound"] = rel.index_bound_holds
            ok &= rel.composition_holds and rel.index_bound_holds and rel.spectral_invariant
            # the inequality also for the embedded map
            ok &= rel.ind_S_embedded * (rel.k_prime + 1) >= rel.ind_E_embedded
        return bool(ok), d

    return _timed(5, "index oracles and index relations", run)


def criterion_6(fast: bool = False) -> CriterionResult:
    def run():
        man = domain.build_disk_mesh(20)
        sig = spectral.steklov_spectrum(man, 1.0, 4).eigenvalues
        e1 = float(np.abs(sig[1:3] - 1).max())
        e2 = float(np.abs(sig[3:5] / 2 - 1).max())
        fb = optimize.free_boundary_check(man, man.positions[:, :2])
        d = {
            "sigma_1_2_err": e1,
            "sigma_3_4_err": e2,
            "interior_defect": fb.interior_defect,
            "normality_defect": fb.normality_defect,
            "nu2": fb.nu2,
            "zero_tol": fb.zero_tol,
        }
        return e1 < 0.02 and e2 < 0.03 and fb.passed, d

    return _timed(6, "Steklov oracle and free boundary check", run)


def criterion_7(fast: bool = False) -> CriterionResult:
    def run():
        rng = np.random.default_rng(11)
        d, ok = {}, True
        sph = domain.build_icosphere(3)
        P = sph.positions
        beta = np.exp(P @ rng.standard_normal(3))
        # homogeneity
        lam = spectral.weighted_laplace_spectrum(sph, beta, 4).eigenvalues[1:]
        lam3 = spectral.weighted_laplace_spectrum(sph, 3.7 * beta, 4).eigenvalues[1:]
        h1 = float(np.abs(lam3 * 3.7 / lam - 1).max())
        F = [spectral.functional_Fm(sph, c * beta, 1) for c in (1.0, 0.01, 250.0)]
        h2 = float(np.abs(np.array(F) / F[0] - 1).max())
        disk = domain.build_disk_mesh(8)
        rho = 1 + 0.5 * disk.positions[disk.boundary, 0]
        G = [spectral.functional_Gm(disk, c * rho, 1) for c in (1.0, 0.01, 250.0)]
        h3 = float(np.abs(np.array(G) / G[0] - 1).max())
        d["homogeneity"] = max(h1, h2, h3)
        ok &= d["homogeneity"] <= 1e-10

        # Schrodinger monotonicity: V <= V' implies nu_j(V) >= nu_j(V')
        small = domain.build_icosphere(2)
        bad = 0
        for _ in range(10 if fast else 50):
            V = rng.standard_normal(small.vertex_count) * 3
            V2 = V + np.abs(rng.standard_normal(small.vertex_count))
            a = spectral.schrodinger_spectrum(small, V, 6).eigenvalues
            b = spectral.schrodinger_spectrum(small, V2, 6).eigenvalues
            bad += int(np.any(b > a + 1e-10 * (1 + np.abs(a))))
        d["monotonicity_violations"] = bad
        ok &= bad == 0

        # gradient versus central differences
        ico = domain.build_icosphere(1)
        worst = 0.0
        for _ in range(5 if fast else 20):
            cfg = harmonic.GLConfig(rng.uniform(0.1, 0.5))
            U = rng.standard_normal((ico.vertex_count, 3)) * rng.uniform(0.2, 1.2)
            g = harmonic.gl_gradient(ico, U, cfg)
            fd = np.empty_like(U)
            h = 1e-6
            for i in range(U.shape[0]):
                for c in range(3):
                    Up, Um = U.copy(), U.copy()
                    Up[i, c] += h
                    Um[i, c] -= h
                    fd[i, c] = (harmonic.gl_energy(ico, Up, cfg) - harmonic.gl_energy(ico, Um, cfg)) / (2 * h)
            fd /= ico.mass[:, None]
            worst = max(worst, float(np.linalg.norm(fd - g) / np.linalg.norm(g)))
        d["gradient_rel_err"] = worst
        ok &= worst <= 1e-5

        # quadrature identity
        qmax = 0.0
        tor = domain.build_flat_torus([1.0, 2.0, 1.5], 6)
        for man in (sph, disk, tor):
            U = rng.standard_normal((man.vertex_count, 3))
            E = domain.dirichlet_energy(man, U)
            qmax = max(qmax, abs(man.mass @ domain.energy_density(man, U) - 2 * E) / (2 * E))
        d["quadrature_rel_err"] = qmax
        ok &= qmax <= 1e-12

        # Mobius identities
        ys = rng.uniform(-1, 1, (100, 3))
        ys *= (rng.uniform(0, 0.99, 100) / np.linalg.norm(ys, axis=1))[:, None]
        xs = rng.standard_normal((100, 3))
        xs /= np.linalg.norm(xs, axis=1, keepdims=True)
        nerr = ierr = 0.0
        for yv, xv in zip(ys, xs):
            gx = optimize.mobius_apply(yv, xv)
            nerr = max(nerr, abs(np.linalg.norm(gx) - 1))
            ierr = max(ierr, float(np.abs(optimize.mobius_apply(-yv, gx) - xv).max()))
        d["mobius_norm_err"] = nerr
        d["mobius_inverse_err"] = ierr
        ok &= nerr <= 1e-12 and ierr <= 1e-10
        return bool(ok), d

    return _timed(7, "property suites", run)


def criterion_8(fast: bool = False) -> CriterionResult:
    def run():
        man = domain.build_icosphere(3)
        P = man.positions
        u = np.hstack([P, np.zeros((len(P), 1))])
        rng = np.random.default_rng(3)
        total, locals_, p_vals = 0, [], []
        caps = [np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]), np.array([0.0, -0.6, -0.8])]
        for c in caps:
            mask = P @ c > 0.8
            psis = []
            for _ in range(50 if not fast else 10):
                coef = rng.standard_normal(4)
                ps = (P @ c - 0.8) * (coef[0] + P @ coef[1:])
                ps[~mask] = 0.0
                psis.append(ps)
            rep = harmonic.lemma33_check(man, u, mask, psis, slack=0.05)
            total += rep.violations
            locals_.append(rep.local_index)
            p_vals.append(rep.p)
        ok = total == 0 and all(p == 1 for p in p_vals)
        return ok, {"violations": total, "local_indices": locals_, "p": p_vals}

    return _timed(8, "stability inequality on stable caps", run)


def criterion_9(fast: bool = False) -> CriterionResult:
    def run():
        man = domain.build_icosphere(3 if fast else 4)
        b0 = sphere_seeds(man.positions)[0]
        _, trace = optimize.maximize_F1(man, b0, {"ambient_k": 9})
        r = optimize.stabilization_probe(man, trace, 1e-3)
        return r == 3, {"ambient": trace.final_map.values.shape[1], "rank": r}

    return _timed(9, "stabilization probe", run)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9]


def run_all(fast: bool = False, echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    results = []
    for crit in CRITERIA:
        res = crit(fast)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
