import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csx import DomainError, ModelError, NoAxialFixedPoint
from csx.model import (
    ModelSpec,
    apply_map,
    axial_fixed_point,
    growth,
    jacobian_growth,
    jacobian_map,
    matrix_m,
    support,
)

from conftest import FAMILIES, custom_exp_model, worked_model, random_model


def fd_jacobian(fun, x, h=1e-6):
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return J


def test_growth_worked_example_values(worked):
    assert growth(worked, [0.5, 0, 0])[0] == pytest.approx(2 / 1.5, rel=1e-15)
    assert growth(worked, [0, 0, 1.0])[0] == pytest.approx(2 / 1.25, rel=1e-15)
    assert growth(worked, [0.39, 0, 1.1])[0] == pytest.approx(2 / 1.665, rel=1e-15)


def test_growth_origin_is_c(worked):
    assert np.array_equal(growth(worked, np.zeros(3)), [2.0, 2.0, 2.0])


def test_ricker_unit_axial_growth():
    m = ModelSpec.ricker(np.eye(3), [1.0, 1.0, 1.0])
    for i in range(3):
        assert growth(m, np.eye(3)[i])[i] == 1.0


def test_non_finite_state_rejected(worked):
    with pytest.raises(DomainError):
        growth(worked, [np.nan, 0, 0])
    with pytest.raises(DomainError):
        apply_map(worked, [np.inf, 0, 0])


def test_apply_map_worked_against_exact_fractions(worked):
    # 8/13, 5/13, 2/5 computed at 40 digits with mpmath
    y = apply_map(worked, [0.5, 0.5, 0.5])
    assert np.allclose(y, [8 / 13, 5 / 13, 0.4], rtol=1e-15, atol=0)


def test_axial_points_are_fixed(worked):
    assert np.array_equal(apply_map(worked, np.zeros(3)), np.zeros(3))
    for i in range(3):
        e = np.eye(3)[i]
        assert np.array_equal(apply_map(worked, e), e)


def test_leslie_gower_axial_fixed_point_generic():
    m = ModelSpec.leslie_gower([[2.0, 0.3], [0.1, 4.0]], [3.0, 1.5])
    q = m.q
    assert q == pytest.approx([1.0, 0.125])
    for i in range(2):
        x = q[i] * np.eye(2)[i]
        assert np.allclose(apply_map(m, x), x, rtol=1e-15)


def test_axial_closed_forms():
    assert axial_fixed_point(worked_model(), 0) == 1.0
    assert axial_fixed_point(ModelSpec.ricker([[4.0, 0], [0, 1.0]], [0.1, 0.1]), 0) == 0.25
    aa = ModelSpec.atkinson_allen([[4.0, 0], [0, 1.0]], [0.5, 0.5], [2.0, 1.0])
    assert axial_fixed_point(aa, 0) == 0.5


def test_custom_axial_by_bisection():
    m = custom_exp_model([[2.0, 0.5], [0.5, 4.0]], [0.3, 0.3])
    assert axial_fixed_point(m, 0) == pytest.approx(0.5, abs=1e-12)
    assert axial_fixed_point(m, 1) == pytest.approx(0.25, abs=1e-12)


def test_axial_outside_box_raises():
    m = ModelSpec.leslie_gower(np.eye(2), [2.0, 2.0], r=[0.5, 2.0])
    with pytest.raises(NoAxialFixedPoint):
        axial_fixed_point(m, 0)
    bad = ModelSpec.leslie_gower(np.eye(2), [0.9, 2.0])
    with pytest.raises(NoAxialFixedPoint):
        axial_fixed_point(bad, 0)


def test_default_box_is_1_1_q():
    m = ModelSpec.leslie_gower([[2.0, 0.3], [0.1, 4.0]], [3.0, 1.5])
    assert np.allclose(m.r, 1.1 * np.array([1.0, 0.125]))


@pytest.mark.parametrize("field,kwargs", [
    ("a_11", dict(A=[[0.0, 1], [1, 1]], c=[2, 2])),
    ("a_12", dict(A=[[1.0, -1], [1, 1]], c=[2, 2])),
    ("c", dict(A=[[1.0, 1], [1, 1]], c=[2, 2, 2])),
])
def test_structural_validation(field, kwargs):
    with pytest.raises(ModelError) as err:
        ModelSpec.leslie_gower(**kwargs)
    assert err.value.field == field


def test_atkinson_allen_c_range():
    with pytest.raises(ModelError):
        ModelSpec.atkinson_allen(np.eye(2), [1.2, 0.5], [1.0, 1.0])


def test_jacobian_growth_leslie_gower_zero_coupling(worked):
    J = jacobian_growth(worked, np.array([0.3, 0.7, 0.2]))
    assert J[0, 1] == 0.0 and J[2, 1] == 0.0


def test_ricker_derivative_formula():
    A = np.array([[1.0, 0.4], [0.3, 2.0]])
    u = np.array([0.4, 0.2])
    m = ModelSpec.ricker(A, u)
    x = np.array([0.2, 0.3])
    f = growth(m, x)
    assert np.allclose(jacobian_growth(m, x), -(u * f)[:, None] * A, rtol=1e-15)


def test_jacobian_map_at_origin_is_diag_c(worked):
    assert np.array_equal(jacobian_map(worked, np.zeros(3)), np.diag([2.0, 2.0, 2.0]))


def test_jacobian_map_worked_at_e1_eigenvalues(worked):
    ev = np.sort(np.linalg.eigvals(jacobian_map(worked, [1.0, 0, 0])).real)
    assert np.allclose(ev, [0.5, 2 / 3, 2 / 3], atol=1e-14)


def test_matrix_m_origin_zero(worked):
    for kind in ("M", "Mtilde"):
        assert np.array_equal(matrix_m(worked, np.zeros(3), kind), np.zeros((3, 3)))


def test_matrix_m_face_structure(worked):
    x = np.array([0.4, 0.0, 0.7])
    assert np.all(matrix_m(worked, x, "M")[1] == 0)
    assert np.all(matrix_m(worked, x, "Mtilde")[:, 1] == 0)


def test_mtilde_ratio(worked):
    x = np.array([0.4, 0.9, 0.7])
    M = matrix_m(worked, x, "M")
    Mt = matrix_m(worked, x, "Mtilde")
    assert np.allclose(Mt, M * x[None, :] / x[:, None], rtol=1e-14)


def test_matrix_m_axial_eigenvalue(worked):
    for i in range(3):
        Q = np.eye(3)[i]
        ev = np.linalg.eigvals(matrix_m(worked, Q, "M"))
        nonzero = ev[np.abs(ev) > 1e-14]
        expected = -1.0 * jacobian_growth(worked, Q)[i, i]
        assert nonzero.size == 1
        assert nonzero[0].real == pytest.approx(expected, abs=1e-12)


def test_support():
    assert support([0, 0, 0]) == frozenset()
    assert support([0, 1, 0]) == {1}
    assert support([0.5, 0, 1.1]) == {0, 2}
    assert support([1e-15, 1.0]) == {1}


def test_restrict(worked):
    sub = worked.restrict([0, 2])
    assert np.array_equal(sub.A, [[1.0, 0.25], [2.0, 1.0]])
    x = np.array([0.3, 0.0, 0.6])
    assert np.allclose(apply_map(sub, x[[0, 2]]), apply_map(worked, x)[[0, 2]])


def test_model_hash_stable_and_distinct(worked):
    assert worked.model_hash == worked_model().model_hash
    assert worked.model_hash != worked.with_box([1.2, 1.2, 1.2]).model_hash


# -- properties over random models of every family --------------------------------------


def _models(rng):
    out = []
    for fam in FAMILIES:
        for n in (2, 3, 4):
            out.append(random_model(rng, fam, n))
    out.append(custom_exp_model([[1.0, 0.3], [0.2, 1.5]], [0.4, 0.5]))
    return out


def test_family_invariants(rng):
    for m in _models(rng):
        X = rng.uniform(0, 1, size=(100, m.n)) * m.r
        f, Df = growth(m, X), jacobian_growth(m, X)
        assert np.all(f > 0)
        assert np.array_equal(apply_map(m, X), X * f)
        M = matrix_m(m, X, "M")
        assert np.allclose(jacobian_map(m, X), f[:, :, None] * (np.eye(m.n) - M), rtol=0, atol=1e-12)
        for k in range(0, 100, 7):
            x = X[k]
            J_fd = fd_jacobian(lambda z: growth(m, z), x)
            assert np.allclose(Df[k], J_fd, rtol=1e-6, atol=1e-9)
            T_fd = fd_jacobian(lambda z: apply_map(m, z), x)
            assert np.allclose(jacobian_map(m, x), T_fd, rtol=1e-6, atol=1e-9)
        for i in range(m.n):
            qi = axial_fixed_point(m, i)
            assert growth(m, qi * np.eye(m.n)[i])[i] == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-10, 1.1)), min_size=3, max_size=3), st.sets(st.integers(0, 2), max_size=2))
def test_faces_forward_invariant(coords, zeroed):
    m = worked_model()
    x = np.array(coords)
    x[list(zeroed)] = 0.0
    assert support(apply_map(m, x)) == support(x)
