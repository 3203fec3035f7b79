"""Discrete spectral geometry: weighted eigenvalue problems, harmonic maps to
spheres, Ginzburg-Landau relaxation and eigenvalue optimization on meshes."""

__version__ = "0.1.0"

__all__ = ["__version__", "domain", "spectral", "harmonic", "optimize", "export"]


def __getattr__(name):
    # submodules load lazily so the CLI can set thread counts before numpy starts
    if name in ("domain", "spectral", "harmonic", "optimize", "export", "acceptance"):
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(name)
