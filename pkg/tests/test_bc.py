import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarsturm.bc import (
    CASES,
    BCQuadruple,
    affine_coefficients,
    appendix_classify,
    appendix_construct,
    build_L_blocks,
    check_condition_b,
    check_proposition,
    check_selfadjoint,
    compute_x,
    det_lemma_check,
    family_symplectic_residual,
    necessary_conditions,
    q2_direct,
    random_scalar_selfadjoint,
    random_selfadjoint_bc,
    random_x_for_case,
)
from polarsturm.errors import ConfigError, NumericalError
from polarsturm.instances import separated_bc
from polarsturm.symplectic import blocks, random_symplectic

seeds = st.integers(0, 2**32 - 1)
DIRICHLET = BCQuadruple(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)


@given(st.integers(1, 3), seeds)
def test_random_conditions_are_selfadjoint(n, seed):
    assert check_selfadjoint(random_selfadjoint_bc(n, seed=seed)).ok


def test_perturbed_conditions_are_not_selfadjoint():
    bc = random_selfadjoint_bc(2, seed=1)
    spec = bc.to_spec()
    spec["beta0"] = (np.array(spec["beta0"]) + 1e-3 * np.eye(2)[:, ::-1] * [1, -1]).tolist()
    assert not check_selfadjoint(BCQuadruple.from_spec(spec)).ok


def test_spec_roundtrip_and_validation():
    bc = random_selfadjoint_bc(2, seed=3)
    back = BCQuadruple.from_spec(bc.to_spec())
    np.testing.assert_array_equal(back.Sq, bc.Sq)
    np.testing.assert_array_equal(BCQuadruple.from_S(bc.Sq, bc.Sp).Sp, bc.Sp)
    with pytest.raises(ConfigError):
        BCQuadruple.from_spec({"alpha0": [[1.0]]})
    with pytest.raises(ConfigError):
        BCQuadruple(np.eye(2), np.eye(3), 0, 0, 0, 0, 0, 0)
    with pytest.raises(ConfigError):
        bc.row(2)


@settings(max_examples=20)
@given(st.integers(1, 3), seeds)
def test_separated_conditions_satisfy_condition_b(n, seed):
    rng = np.random.default_rng(seed)
    bc = BCQuadruple.separated(*separated_bc(rng, n))
    assert check_selfadjoint(bc).ok
    assert check_proposition(bc)
    for _ in range(5):
        assert check_condition_b(bc, random_symplectic(n, seed=rng, scale=0.5)).ok


def test_generic_coupled_conditions_fail_the_proposition():
    bc = random_selfadjoint_bc(2, seed=11)
    assert not check_proposition(bc)
    # and condition (b) then fails at some symplectic Phi0
    rng = np.random.default_rng(0)
    assert not all(check_condition_b(bc, random_symplectic(2, seed=rng)).ok for _ in range(10))


def test_condition_b_rejects_non_symplectic():
    with pytest.raises(ConfigError):
        check_condition_b(DIRICHLET, 2 * np.eye(2))


@given(st.integers(1, 3), seeds)
def test_determinant_lemma(n, seed):
    rng = np.random.default_rng(seed)
    a, b, _, _ = blocks(random_symplectic(n, seed=rng, scale=0.5))
    c, d, _, _ = blocks(random_symplectic(n, seed=rng, scale=0.5))
    assert det_lemma_check(a, b, c, d).ok


def test_determinant_lemma_hypotheses():
    with pytest.raises(ConfigError):
        det_lemma_check([[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 0.0]], np.eye(2), np.eye(2))


@settings(max_examples=20)
@given(st.integers(1, 3), seeds)
def test_l_blocks_reproduce_determinant_block(n, seed):
    rng = np.random.default_rng(seed)
    bc = random_selfadjoint_bc(n, seed=rng)
    R0 = rng.standard_normal((n, n)) + 2 * np.eye(n)
    R1 = rng.standard_normal((n, n)) + 2 * np.eye(n)
    L = build_L_blocks(bc, R0, R1)
    assert L.l0_identity_residual < 1e-9
    phi = random_symplectic(n, seed=rng, scale=0.5)
    direct = q2_direct(bc, phi, R0, R1)
    np.testing.assert_allclose(L.apply(phi)[:n, :n], direct, atol=1e-9 * max(1, np.abs(direct).max()))


def test_dirichlet_l_blocks_golden(golden):
    spec = build_L_blocks(DIRICHLET).to_spec()
    for key, value in golden["dirichlet_l_blocks"].items():
        np.testing.assert_allclose(spec[key], value)


def test_l_blocks_reject_singular_scaling():
    with pytest.raises(ConfigError):
        build_L_blocks(DIRICHLET, R0=[[0.0]])


@settings(max_examples=50)
@given(seeds)
def test_x_identity(seed):
    x0, x1, x2, x3, x4 = compute_x(random_scalar_selfadjoint(np.random.default_rng(seed)))
    assert abs(x1 * x4 - x2 * x3 - 0.25 * x0 * x0) <= 1e-12 * max(1.0, x0 * x0, abs(x1 * x4))


def test_x_identity_fails_without_selfadjointness():
    bc = BCQuadruple(1.0, 0.3, 0.2, 0.5, 0.1, 2.0, 0.7, 0.4)
    assert not check_selfadjoint(bc).ok
    with pytest.raises(ConfigError):
        compute_x(bc)


@pytest.mark.parametrize("case", CASES)
@pytest.mark.parametrize("nu", [1, -1])
def test_constructed_families(case, nu):
    rng = np.random.default_rng([CASES.index(case), nu + 1])
    x = random_x_for_case(case, rng)
    L1, L2 = appendix_construct(case, x, 1.3, 0.4, -0.7, nu)
    np.testing.assert_allclose(np.linalg.det(L1), nu, atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(L2), nu, atol=1e-12)
    np.testing.assert_allclose(affine_coefficients(L1, L2), x[1:], atol=1e-12)
    L0 = np.zeros((2, 2))
    assert family_symplectic_residual(L0, L1, L2, 50) <= 1e-9
    assert necessary_conditions(L0, L1, L2).holds()
    assert appendix_classify(L0, L1, L2).case == "c"


def test_classification_of_other_cases():
    L0 = random_symplectic(1, seed=2, scale=0.5)
    zero = np.zeros((2, 2))
    assert appendix_classify(L0, zero, np.eye(2)).case == "b"
    # rank-one factors: L0 + s e1 e2^T has determinant 1 for every s
    e1, e2 = np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])
    assert appendix_classify(np.eye(2), e1 @ e1.T, e1 @ e2.T).case == "a"
    with pytest.raises(ConfigError):
        appendix_classify(np.eye(2), np.eye(2), np.eye(2))


def test_construct_rejects_wrong_constraints():
    with pytest.raises(ConfigError):
        appendix_construct("a", (1.0, 1.0, 0.0, 0.0, 0.0), 1.0)
    with pytest.raises(ConfigError):
        appendix_construct("b", (0.0, 1.0, 0.0, 0.0, 1.0), 1.0)
    with pytest.raises(ConfigError):
        appendix_construct("a", (0.0, 1.0, 0.0, 0.0, 0.0), 0.0)
    with pytest.raises(ConfigError):
        appendix_construct("z", (0.0,) * 5, 1.0)


def test_necessary_conditions_detect_perturbation():
    L1, L2 = appendix_construct("a", (0.0, 1.0, 0.5, 2.0, 1.0), 1.0, 0.2, 0.3)
    L0 = np.zeros((2, 2))
    assert necessary_conditions(L0, L1, L2).holds()
    bumped = L1 + np.array([[1e-3, 0.0], [0.0, 0.0]])
    assert not necessary_conditions(L0, bumped, L2).holds()
    assert family_symplectic_residual(L0, bumped, L2, 20) > 1e-9
    with pytest.raises(ConfigError):
        necessary_conditions(np.eye(4), np.eye(4), np.eye(4))


def test_classify_refuses_inconsistent_family():
    # 2 Phi is never symplectic, so the random test refuses the family
    with pytest.raises((ConfigError, NumericalError)):
        appendix_classify(np.zeros((2, 2)), 2 * np.eye(2), np.eye(2))
