import numpy as np
import pytest

from sdl import domain
from sdl.domain import dirichlet_energy, energy_density

from conftest import FOUR_PI, TWO_PI2


def rayleigh(man, f):
    return float(f @ (man.stiffness @ f)) / float(man.mass @ f**2)


def psd_with_constant_kernel(man):
    K = man.stiffness.toarray()
    assert np.abs(K - K.T).max() == 0
    ev = np.linalg.eigvalsh(K)
    scale = ev[-1]
    assert ev[0] > -1e-12 * scale
    assert ev[1] > 1e-10 * scale  # one-dimensional kernel on a connected mesh
    assert np.abs(K @ np.ones(len(K))).max() < 1e-12 * scale


class TestFlatTorus:
    def test_volume_is_exact(self):
        man = domain.build_flat_torus([1.0, 1.0], 32)
        assert man.mass.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(man.mass > 0)
        assert not man.has_boundary

    def test_fourier_rayleigh_quotient(self, torus64):
        f = np.cos(2 * np.pi * torus64.positions[:, 0])
        assert rayleigh(torus64, f) == pytest.approx(4 * np.pi**2, rel=0.01)

    def test_circle_first_eigenvalue(self):
        man = domain.build_flat_torus([2 * np.pi], 16)
        ev = np.linalg.eigvalsh(np.diag(1 / np.sqrt(man.mass)) @ man.stiffness.toarray() @ np.diag(1 / np.sqrt(man.mass)))
        assert ev[1] == pytest.approx(1.0, rel=0.02)

    def test_three_dimensional_volume(self):
        man = domain.build_flat_torus([1.0, 2.0, 0.5], 4)
        assert man.dim == 3
        assert man.mass.sum() == pytest.approx(1.0)

    @pytest.mark.parametrize("sides,res", [([0.0, 1.0], 8), ([-1.0], 8), ([1.0, 1.0], 3), ([1, 1, 1, 1], 4)])
    def test_rejects_bad_input(self, sides, res):
        with pytest.raises(ValueError):
            domain.build_flat_torus(sides, res)

    def test_stiffness_psd(self):
        psd_with_constant_kernel(domain.build_flat_torus([1.0, 1.5], 6))


class TestIcosphere:
    def test_area(self, ico4):
        assert abs(ico4.mass.sum() - FOUR_PI) / FOUR_PI < 0.005

    def test_area_converges(self):
        errs = [abs(domain.build_icosphere(s).mass.sum() - FOUR_PI) for s in (1, 2, 3, 4)]
        assert all(b < a for a, b in zip(errs, errs[1:]))

    @pytest.mark.parametrize("sub", [1, 2, 3])
    def test_constants_in_kernel(self, sub):
        man = domain.build_icosphere(sub)
        assert np.abs(man.stiffness @ np.ones(man.vertex_count)).max() < 1e-13
        assert np.allclose(np.linalg.norm(man.positions, axis=1), 1.0, atol=1e-15)

    def test_z_rayleigh(self, ico5):
        assert rayleigh(ico5, ico5.positions[:, 2]) == pytest.approx(2.0, rel=0.005)

    def test_linear_rayleigh_exact_at_every_level(self):
        # cotangent form and lumped mass agree on linear fields of the icosphere
        for s in (1, 2, 3):
            man = domain.build_icosphere(s)
            assert rayleigh(man, man.positions[:, 0]) == pytest.approx(2.0, abs=1e-12)

    def test_area_converges_second_order(self):
        errs, hs = [], []
        for s in (2, 3, 4):
            man = domain.build_icosphere(s)
            errs.append(abs(man.mass.sum() - FOUR_PI))
            hs.append(man.mesh_size)
        rates = np.diff(np.log(errs)) / np.diff(np.log(hs))
        assert np.all(rates >= 1.9)

    @pytest.mark.parametrize("sub", [0, 8])
    def test_rejects_out_of_range(self, sub):
        with pytest.raises(ValueError):
            domain.build_icosphere(sub)

    def test_stiffness_psd(self, ico2):
        psd_with_constant_kernel(ico2)


class TestDisk:
    def test_circumference(self, disk20):
        assert abs(disk20.boundary_mass.sum() - 2 * np.pi) / (2 * np.pi) < 0.01

    def test_boundary_weights(self, disk20):
        s = disk20.boundary_weights_full()
        assert np.all(s[disk20.interior] == 0)
        assert np.all(disk20.boundary_mass > 0)

    def test_boundary_is_ordered(self, disk20):
        Q = disk20.positions[disk20.boundary]
        ang = np.unwrap(np.arctan2(Q[:, 1], Q[:, 0]))
        steps = np.diff(ang)
        assert np.all(steps > 0) or np.all(steps < 0)
        assert abs(abs(ang[-1] - ang[0]) + abs(steps).mean() - 2 * np.pi) < 1e-9

    def test_stiffness_psd(self, disk8):
        psd_with_constant_kernel(disk8)

    def test_rejects_coarse(self):
        with pytest.raises(ValueError):
            domain.build_disk_mesh(2)


class TestEnergy:
    def test_constant_field(self, ico3, torus32, disk8):
        for man in (ico3, torus32, disk8):
            U = np.tile([0.3, -1.0, 2.0], (man.vertex_count, 1))
            assert dirichlet_energy(man, U) == pytest.approx(0.0, abs=1e-12)
            assert np.abs(energy_density(man, U)).max() < 1e-12

    def test_identity_sphere(self, ico5):
        assert dirichlet_energy(ico5, ico5.positions) == pytest.approx(FOUR_PI, rel=0.01)

    def test_circle_map_torus(self, torus64):
        x = torus64.positions[:, 0]
        U = np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x), 0 * x], 1)
        assert dirichlet_energy(torus64, U) == pytest.approx(TWO_PI2, rel=0.01)
        e = energy_density(torus64, U)
        assert np.abs(e / (4 * np.pi**2) - 1).max() < 0.01

    def test_identity_density(self, ico5):
        e = energy_density(ico5, ico5.positions)
        assert np.abs(e / 2 - 1).max() < 0.05

    def test_quadrature_identity(self, ico3, torus32, disk8):
        rng = np.random.default_rng(0)
        for man in (ico3, torus32, disk8):
            U = rng.standard_normal((man.vertex_count, 4))
            E = dirichlet_energy(man, U)
            assert abs(man.mass @ energy_density(man, U) - 2 * E) <= 1e-12 * E

    def test_scalar_field_accepted(self, ico3):
        z = ico3.positions[:, 2]
        assert dirichlet_energy(ico3, z) == pytest.approx(0.5 * z @ (ico3.stiffness @ z))

    def test_dimension_mismatch(self, ico3):
        with pytest.raises(ValueError):
            dirichlet_energy(ico3, np.zeros((ico3.vertex_count + 1, 3)))
        with pytest.raises(ValueError):
            energy_density(ico3, np.zeros(5))

    def test_energy_tensor_trace(self, ico3):
        rng = np.random.default_rng(1)
        U = rng.standard_normal((ico3.vertex_count, 3))
        T = domain.energy_tensor(ico3, U)
        tr = np.trace(T, axis1=-2, axis2=-1) if T.ndim == 3 else None
        if tr is not None and tr.shape == (ico3.vertex_count,):
            assert np.allclose(tr, energy_density(ico3, U), rtol=1e-10, atol=1e-12)
