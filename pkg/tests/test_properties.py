"""Randomized property checks (scaling, monotonicity, quadrature, Mobius)."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from sdl import domain, harmonic, optimize, spectral

ICO = domain.build_icosphere(2)
DISK = domain.build_disk_mesh(5)
TORUS = domain.build_flat_torus([1.0, 1.7], 6)
SMALL = domain.build_icosphere(1)

seeds = st.integers(0, 2**32 - 1)
common = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def positive_density(rng, n):
    return np.exp(rng.uniform(-1.5, 1.5, n))


@common
@given(seed=seeds, c=st.floats(1e-3, 1e3))
def test_weighted_eigenvalue_homogeneity(seed, c):
    rng = np.random.default_rng(seed)
    beta = positive_density(rng, ICO.vertex_count)
    a = spectral.weighted_laplace_spectrum(ICO, beta, 4).eigenvalues[1:]
    b = spectral.weighted_laplace_spectrum(ICO, c * beta, 4).eigenvalues[1:]
    assert np.abs(b * c / a - 1).max() <= 1e-10


@common
@given(seed=seeds, c=st.floats(1e-3, 1e3))
def test_functionals_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    beta = positive_density(rng, ICO.vertex_count)
    F = spectral.functional_Fm(ICO, beta, 1)
    assert abs(spectral.functional_Fm(ICO, c * beta, 1) / F - 1) <= 1e-10
    rho = positive_density(rng, len(DISK.boundary))
    G = spectral.functional_Gm(DISK, rho, 1)
    assert abs(spectral.functional_Gm(DISK, c * rho, 1) / G - 1) <= 1e-10


@common
@given(seed=seeds)
def test_schrodinger_monotone(seed):
    rng = np.random.default_rng(seed)
    V = 4 * rng.standard_normal(ICO.vertex_count)
    W = V + np.abs(rng.standard_normal(ICO.vertex_count)) * rng.uniform(0, 3)
    a = spectral.schrodinger_spectrum(ICO, V, 8).eigenvalues
    b = spectral.schrodinger_spectrum(ICO, W, 8).eigenvalues
    assert np.all(b <= a + 1e-10 * (1 + np.abs(a)))


@common
@given(seed=seeds, k=st.integers(1, 5))
def test_quadrature_identity(seed, k):
    rng = np.random.default_rng(seed)
    for man in (ICO, DISK, TORUS):
        U = rng.standard_normal((man.vertex_count, k)) * rng.uniform(0.01, 100)
        E = domain.dirichlet_energy(man, U)
        assert abs(man.mass @ domain.energy_density(man, U) - 2 * E) <= 1e-12 * E


@settings(max_examples=10, deadline=None)
@given(seed=seeds)
def test_gl_gradient_matches_differences(seed):
    rng = np.random.default_rng(seed)
    cfg = harmonic.GLConfig(rng.uniform(0.1, 0.6))
    U = rng.standard_normal((SMALL.vertex_count, 3)) * rng.uniform(0.2, 1.3)
    g = harmonic.gl_gradient(SMALL, U, cfg) * SMALL.mass[:, None]
    h = 1e-6
    fd = np.empty_like(U)
    for i in range(U.shape[0]):
        for c in range(3):
            Up, Um = U.copy(), U.copy()
            Up[i, c] += h
            Um[i, c] -= h
            fd[i, c] = (harmonic.gl_energy(SMALL, Up, cfg) - harmonic.gl_energy(SMALL, Um, cfg)) / (2 * h)
    assert np.linalg.norm(fd - g) / np.linalg.norm(g) <= 1e-5


@settings(max_examples=200, deadline=None)
@given(
    y=st.lists(st.floats(-1, 1), min_size=3, max_size=3),
    r=st.floats(0, 0.999),
    x=st.lists(st.floats(-1, 1), min_size=3, max_size=3),
)
def test_mobius_identities(y, r, x):
    y = np.array(y)
    x = np.array(x)
    if np.linalg.norm(y) < 1e-6 or np.linalg.norm(x) < 1e-6:
        return
    y = r * y / np.linalg.norm(y)
    x = x / np.linalg.norm(x)
    g = optimize.mobius_apply(y, x)
    assert abs(np.linalg.norm(g) - 1) <= 1e-12
    assert np.abs(optimize.mobius_apply(-y, g) - x).max() <= 1e-10


@common
@given(seed=seeds)
def test_certificate_sound(seed):
    rng = np.random.default_rng(seed)
    P = ICO.positions
    beta = np.exp(P @ rng.standard_normal(3))
    bound, y = optimize.certify_upper_bound_sphere(ICO, beta)
    assert spectral.functional_Fm(ICO, beta, 1) <= bound * 1.02
    w = ICO.mass * beta
    assert np.linalg.norm(w @ optimize.mobius_apply(y, P)) / w.sum() <= 1e-8
