import numpy as np
import pytest

from svev.ensembles import EnsembleModel, Jacobi, Laguerre


def rel_err(x, y, floor=1e-300):
    return abs(x - y) / max(abs(x), abs(y), floor)


@pytest.fixture(scope="session")
def model_lag0():
    return EnsembleModel(3, Laguerre(0.0))


@pytest.fixture(scope="session")
def model_lag05():
    return EnsembleModel(3, Laguerre(0.5))


@pytest.fixture(scope="session")
def model_jac01():
    return EnsembleModel(3, Jacobi(0.0, 1.0))


@pytest.fixture(scope="session")
def model_jac0515():
    return EnsembleModel(3, Jacobi(0.5, 1.5))


def family_models(ns, families=None):
    """The standard test matrix of ensemble models."""
    fams = families or [Laguerre(0.0), Laguerre(0.5), Jacobi(0.0, 1.0), Jacobi(0.5, 1.5)]
    return [EnsembleModel(n, f) for n in ns for f in fams]


def bulk_grid(model, count, lo_frac=0.08, hi_frac=0.85):
    if model.is_jacobi:
        return np.linspace(lo_frac, hi_frac, count)
    hi = 3.2 * model.n
    return np.linspace(lo_frac * hi, hi_frac * hi, count)
