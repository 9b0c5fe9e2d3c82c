import numpy as np
import pytest

from csx import BudgetExceeded
from csx.model import ModelSpec, matrix_m
from csx.verify import (
    Status,
    build_grid,
    check_axial,
    check_dissipativity,
    check_inverse_signs,
    check_signs,
    check_spectral,
    spectral_radii,
    verify_all,
)

from conftest import FAMILIES, custom_exp_model, worked_model, random_model


def bumpy_model():
    # G(s) = 2 - s + 2 (s - 1)^2 is positive, G(1) = 1, but increases for s > 1.25
    G = [lambda s: 2 - s + 2 * (s - 1) ** 2] * 2
    dG = [lambda s: -1 + 4 * (s - 1)] * 2
    return ModelSpec.plane_custom([[1.0, 0.5], [0.5, 1.0]], G, dG, u=[1.0, 1.0])


def test_axial_worked(worked):
    v = check_axial(worked)
    assert v.status is Status.VERIFIED_ANALYTIC
    assert "[1.0, 1.0, 1.0]" in v.detail


def test_axial_failures():
    v = check_axial(ModelSpec.leslie_gower(np.eye(2), [0.9, 2.0]))
    assert v.status is Status.FAILED and v.witness is not None
    v = check_axial(ModelSpec.leslie_gower(np.eye(2), [2.0, 2.0], r=[1.0, 1.0]))
    assert v.status is Status.FAILED
    assert np.array_equal(v.witness, [1.0, 0.0])


def test_signs_builtin_analytic(worked, rng):
    g = build_grid(worked, "BoxR", 4)
    assert check_signs(worked, g).status is Status.VERIFIED_ANALYTIC
    ricker = random_model(rng, "Ricker", 3)
    assert check_signs(ricker, build_grid(ricker, "BoxR", 4)).status is Status.VERIFIED_ANALYTIC


def test_signs_custom_failure_has_witness():
    m = bumpy_model()
    v = check_signs(m, build_grid(m, "BoxR", 12))
    assert v.status is Status.FAILED
    s = m.A @ v.witness
    assert np.any(s > 1.25)


def test_signs_custom_sampled_pass_and_strict():
    m = custom_exp_model([[1.0, 0.3], [0.2, 1.5]], [0.4, 0.5])
    g = build_grid(m, "BoxR", 10)
    assert check_signs(m, g).status is Status.VERIFIED
    assert check_signs(m, g, strict=True).status is Status.INCONCLUSIVE


def test_spectral_analytic_families(rng):
    for fam in ("LeslieGower", "AtkinsonAllenGeneral", "AtkinsonAllenStandard"):
        for _ in range(5):
            m = random_model(rng, fam, 3)
            assert check_spectral(m, None).status is Status.VERIFIED_ANALYTIC
    m = ModelSpec.ricker(np.eye(2), [0.4, 0.4])
    assert check_spectral(m, None).status is Status.VERIFIED_ANALYTIC


def test_spectral_ricker_failure():
    m = ModelSpec.ricker([[1.0, 1.0], [1.0, 1.0]], [5.0, 5.0])
    # M(q) = diag(q u) A = 5 [[1, 1], [1, 1]] has spectral radius 10
    rho_m, rho_t = spectral_radii(m, [[1.0, 1.0]])
    assert rho_m[0] == pytest.approx(10.0) and rho_t[0] == pytest.approx(10.0)
    v = check_spectral(m, build_grid(m, "BoxQ", 10))
    assert v.status is Status.FAILED
    assert np.min(spectral_radii(m, [v.witness])) >= 1.0


def test_spectral_sampled_pass_and_floor():
    # outside both closed-form Ricker bounds; M(x) = diag(u x) A is entrywise
    # increasing in x so its Perron root peaks at q = (0.5, 1), where it is ~0.8275
    m = ModelSpec.ricker([[2.0, 0.9], [0.05, 1.0]], [0.8, 0.5])
    assert np.max(spectral_radii(m, [[0.5, 1.0]])) == pytest.approx((1.3 + np.sqrt(0.126)) / 2, abs=1e-12)
    assert check_spectral(m, build_grid(m, "BoxQ", 10)).status is Status.VERIFIED
    assert check_spectral(m, build_grid(m, "BoxQ", 4)).status is Status.INCONCLUSIVE


def test_dissipativity():
    m = ModelSpec.leslie_gower([[2.0, 0.3], [0.1, 4.0]], [3.0, 1.5])
    assert check_dissipativity(m).status is Status.VERIFIED_ANALYTIC
    # f_i <= c_i / (1 + a_ii r_i) < 1 fails once r_i <= q_i
    v = check_dissipativity(m.with_box([0.9, 1.0]))
    assert v.status is Status.FAILED and np.array_equal(v.witness, [0.9, 0.0])
    ricker = ModelSpec.ricker([[1.0, 0.5], [0.5, 1.0]], [0.3, 0.3], r=[3.0, 3.0])
    assert check_dissipativity(ricker).status is Status.VERIFIED_ANALYTIC


def test_dissipativity_custom_is_inconclusive():
    m = custom_exp_model([[1.0, 0.3], [0.2, 1.5]], [0.4, 0.5])
    assert check_dissipativity(m).status is Status.INCONCLUSIVE


def test_inverse_signs_worked(worked):
    g = build_grid(worked, "BoxR", 20)
    assert check_inverse_signs(worked, g).status is Status.VERIFIED
    # at the origin DT = diag(c) so the inverse is diag(1/c)
    assert np.allclose(np.linalg.inv(np.diag([2.0, 2.0, 2.0])), 0.5 * np.eye(3))


def test_inverse_signs_independent_of_spectral():
    m = ModelSpec.ricker([[1.0, 1.0], [1.0, 1.0]], [5.0, 5.0])
    v = check_inverse_signs(m, build_grid(m, "BoxR", 10))
    assert v.status in (Status.VERIFIED, Status.FAILED)


def test_grid_counts_and_domains():
    m = ModelSpec.leslie_gower(np.eye(2), [2.0, 2.0], r=[1.0, 1.0])
    g = build_grid(m, "BoxR", 3)
    base = np.stack(np.meshgrid(*[np.linspace(0, 1, 3)] * 2, indexing="ij"), -1).reshape(-1, 2)
    for p in base:
        assert np.any(np.all(g.points == p, axis=1))
    assert len(g.points) > 9
    gq = build_grid(m, "BoxQ", 3)
    assert not np.any(np.all(gq.points == 0, axis=1))
    assert np.any(np.all(np.isclose(gq.points, [1.0, 1.0]), axis=1))


def test_grid_budget():
    m = ModelSpec.leslie_gower(np.eye(8), np.full(8, 2.0))
    with pytest.raises(BudgetExceeded):
        build_grid(m, "BoxR", 10)


def test_verify_all_worked(worked):
    rep = verify_all(worked, 10)
    assert rep.overall == "SimplexExists"
    assert rep.dissipative.status is Status.VERIFIED_ANALYTIC
    assert rep.inverse_signs.passed
    assert rep.classical_jacobian_negative is False


def test_verify_all_zero_coupling_flags_nonclassical():
    A = [[1.0, 0.5, 0.0], [0.4, 1.0, 0.3], [0.0, 0.6, 1.0]]
    rep = verify_all(ModelSpec.leslie_gower(A, [2.0, 2.5, 1.8]), 6)
    assert rep.simplex_exists and not rep.classical_jacobian_negative
    full = verify_all(ModelSpec.leslie_gower(np.full((2, 2), 0.5) + np.eye(2), [2.0, 2.0]), 6)
    assert full.classical_jacobian_negative


def test_verify_all_not_established():
    assert verify_all(ModelSpec.leslie_gower(np.eye(2), [1.0, 2.0]), 6).overall == "NotEstablished"


def test_rho_bounded_by_row_sum_norm(rng):
    for fam in FAMILIES:
        m = random_model(rng, fam, 3)
        X = rng.uniform(0, 1, (200, 3)) * m.r
        M = matrix_m(m, X, "M")
        rho = np.abs(np.linalg.eigvals(M)).max(axis=-1)
        assert np.all(rho <= np.abs(M).sum(axis=-1).max(axis=-1) + 1e-10)


def test_analytic_signs_imply_nonnegative_m(rng):
    for fam in FAMILIES:
        m = random_model(rng, fam, 3)
        g = build_grid(m, "BoxR", 6)
        assert check_signs(m, g).status is Status.VERIFIED_ANALYTIC
        assert np.all(matrix_m(m, g.points, "M") >= 0)
        assert np.all(matrix_m(m, g.points, "Mtilde") >= 0)


def test_refinement_keeps_failures():
    m = ModelSpec.ricker([[1.0, 1.0], [1.0, 1.0]], [5.0, 5.0])
    coarse = verify_all(m, 5)
    assert coarse.spectral.status is Status.FAILED
    fine = verify_all(m, 10, extra=coarse.witnesses)
    assert fine.spectral.status is Status.FAILED
