import numpy as np
import pytest

from csx.model import ModelSpec

WORKED_A = [[1.0, 0.0, 0.25], [2.0, 1.0, 0.2], [2.0, 0.0, 1.0]]


def worked_model():
    return ModelSpec.leslie_gower(WORKED_A, [2.0, 2.0, 2.0], r=[1.1, 1.1, 1.1])


def random_competition_matrix(rng, n, zero_prob=0.2):
    A = rng.uniform(0.1, 1.0, size=(n, n))
    A[rng.random((n, n)) < zero_prob] = 0.0
    np.fill_diagonal(A, rng.uniform(0.5, 2.0, size=n))
    return A


def random_model(rng, family, n):
    """A valid model of the requested family with a provable simplex."""
    A = random_competition_matrix(rng, n)
    if family == "LeslieGower":
        return ModelSpec.leslie_gower(A, rng.uniform(1.5, 3.0, n))
    if family == "AtkinsonAllenGeneral":
        return ModelSpec.atkinson_allen(A, rng.uniform(0.2, 0.8, n), rng.uniform(0.5, 2.0, n))
    if family == "AtkinsonAllenStandard":
        return ModelSpec.atkinson_allen_standard(A, rng.uniform(0.2, 0.8))
    if family == "Ricker":
        # u_i below a_ii / sum_j a_ij keeps the row-sum bound valid
        bound = np.diag(A) / A.sum(axis=1)
        return ModelSpec.ricker(A, rng.uniform(0.5, 0.95) * bound)
    raise ValueError(family)


FAMILIES = ["LeslieGower", "AtkinsonAllenGeneral", "AtkinsonAllenStandard", "Ricker"]


def custom_exp_model(A, u_rate, r=None):
    """Ricker-like response written as a plane-nullcline custom model."""
    A = np.asarray(A, float)
    n = A.shape[0]
    G = [lambda s, k=k: np.exp(u_rate[k] * (1.0 - s)) for k in range(n)]
    dG = [lambda s, k=k: -u_rate[k] * np.exp(u_rate[k] * (1.0 - s)) for k in range(n)]
    return ModelSpec.plane_custom(A, G, dG, u=np.ones(n), r=r)


@pytest.fixture
def worked():
    return worked_model()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
