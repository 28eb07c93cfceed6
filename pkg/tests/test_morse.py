import math

import numpy as np
import pytest

from polarsturm.errors import BoundaryDegenerateError, ConfigError
from polarsturm.flow import CoefficientModel, MatrixFunction
from polarsturm.instances import morse_problem
from polarsturm.morse import (
    ActionProblem,
    discretize_quadratic_form,
    invertibility_equivalence_check,
    morse_index,
    morse_track,
    mu_monotonicity_check,
    singular_margin,
)

HARMONIC = CoefficientModel.harmonic(1)


@pytest.mark.parametrize("t,expected", [(1.0, 0), (2.0, 1), (4.0, 1), (5.0, 2), (8.0, 3)])
def test_harmonic_index(t, expected):
    res = morse_index(ActionProblem(HARMONIC, [[0.0]], t))
    assert res.mu == expected
    # conjugate points of q'' + q = 0 with q'(0) = 0 sit at pi/2 + k pi
    np.testing.assert_allclose(res.conjugate_points,
                               [math.pi / 2 + k * math.pi for k in range(expected)], atol=1e-8)


def test_negative_initial_weight_adds_index():
    # N < -tan(t) makes the constant-ish variation a descent direction
    assert morse_index(ActionProblem(HARMONIC, [[-5.0]], 1.0)).mu == 1
    assert discretize_quadratic_form(ActionProblem(HARMONIC, [[-5.0]], 1.0), 200).negative_count() == 1


def test_singular_end_is_refused():
    with pytest.raises(BoundaryDegenerateError):
        morse_index(ActionProblem(HARMONIC, [[0.0]], math.pi / 2))


def test_action_problem_validation():
    with pytest.raises(ConfigError):
        ActionProblem(HARMONIC, [[0.0, 1.0]], 1.0)
    with pytest.raises(ConfigError):
        ActionProblem(HARMONIC, [[0.0]], -1.0)
    neg_c = CoefficientModel.constant([[1.0]], [[0.0]], [[-1.0]])
    with pytest.raises(ConfigError):
        morse_index(ActionProblem(neg_c, [[0.0]], 1.0))


@pytest.mark.parametrize("seed", [1, 3, 4, 7, 11, 19])
def test_random_problems_match_oracle(seed):
    problem = morse_problem(seed)
    if singular_margin(morse_track(problem).phi[-1]) < 0.1:
        pytest.skip("end angle too close to a singular level")
    assert morse_index(problem).mu == discretize_quadratic_form(problem, 400).negative_count()


def test_singular_margin():
    assert singular_margin([0.0]) == pytest.approx(math.pi / 2)
    assert singular_margin([math.pi / 2 + 0.05, 0.0]) == pytest.approx(0.05)
    assert singular_margin([-math.pi / 2 - 0.2]) == pytest.approx(0.2)


def test_discretized_form_is_symmetric_and_converges():
    problem = ActionProblem(HARMONIC, [[0.0]], 2.0)
    form = discretize_quadratic_form(problem, 200)
    np.testing.assert_allclose(form.matrix, form.matrix.T)
    # relative to int g'^2 the form g'^2 - g^2 has smallest eigenvalue 1 - 1/kappa,
    # kappa = (pi/4)^2 the first eigenvalue of -g'' with g'(0) = 0, g(2) = 0
    lam = np.min(form.eigenvalues())
    assert lam == pytest.approx(1 - (4 / math.pi) ** 2, abs=1e-3)
    with pytest.raises(ConfigError):
        discretize_quadratic_form(problem, 1)


def test_invertibility_equivalence():
    near = invertibility_equivalence_check(ActionProblem(HARMONIC, [[0.0]], math.pi / 2 + 1e-9))
    far = invertibility_equivalence_check(ActionProblem(HARMONIC, [[0.0]], 2.0))
    assert near.agree and near.q2_singular
    assert far.agree and not far.q2_singular


def test_mu_monotonicity():
    eye = np.eye(2)
    m3 = CoefficientModel.constant(0.5 * eye, np.zeros((2, 2)), eye)
    m4 = CoefficientModel.constant(2.0 * eye + 0.3, np.zeros((2, 2)), 1.5 * eye)
    rep = mu_monotonicity_check(m3, m4, np.zeros((2, 2)), 2.0)
    assert rep.ok and rep.jsj_max_eigenvalue <= 0
    with pytest.raises(ConfigError):
        mu_monotonicity_check(m4, m3, np.zeros((2, 2)), 2.0)


def test_tabulated_coefficients_give_same_index():
    tau = np.linspace(0.0, 5.0, 401)
    tab = MatrixFunction.tabulated(tau, np.ones((tau.size, 1, 1)))
    model = CoefficientModel(1, tab, MatrixFunction.zeros(1), MatrixFunction.constant([[1.0]]))
    assert morse_index(ActionProblem(model, [[0.0]], 5.0)).mu == 2
