import numpy as np
import pytest

from sdl import domain

FOUR_PI = 4 * np.pi
TWO_PI2 = 2 * np.pi**2


@pytest.fixture(scope="session")
def ico2():
    return domain.build_icosphere(2)


@pytest.fixture(scope="session")
def ico3():
    return domain.build_icosphere(3)


@pytest.fixture(scope="session")
def ico4():
    return domain.build_icosphere(4)


@pytest.fixture(scope="session")
def ico5():
    return domain.build_icosphere(5)


@pytest.fixture(scope="session")
def torus32():
    return domain.build_flat_torus([1.0, 1.0], 32)


@pytest.fixture(scope="session")
def torus64():
    return domain.build_flat_torus([1.0, 1.0], 64)


@pytest.fixture(scope="session")
def disk20():
    return domain.build_disk_mesh(20)


@pytest.fixture(scope="session")
def disk8():
    return domain.build_disk_mesh(8)


def circle_map(man, amplitude=0.0, rng=None):
    ang = 2 * np.pi * man.positions[:, 0]
    if amplitude:
        ang = ang + amplitude * rng.standard_normal(len(ang))
    return np.stack([np.cos(ang), np.sin(ang), np.zeros_like(ang)], 1)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
