import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarsturm.errors import ConfigError, NumericalError
from polarsturm.flow import (
    CoefficientModel,
    MatrixFunction,
    c2_second_case,
    cumulative_quadrature,
    integrate_block,
    integrate_fundamental,
    lambda_sensitivity,
    propagator,
    second_case_blocks,
    second_case_frame,
    uniform_grid,
)
from polarsturm.instances import positive_c_model
from polarsturm.symplectic import is_symplectic, recover_coefficients


def test_uniform_grid_even_steps():
    g = uniform_grid(1.0, 0.3)
    assert (g.size - 1) % 2 == 0
    assert g[-1] == 1.0
    assert np.max(np.diff(g)) <= 0.3 + 1e-15


@pytest.mark.parametrize("t,h", [(0.0, 0.1), (1.0, 0.0), (-1.0, 0.1)])
def test_uniform_grid_rejects(t, h):
    with pytest.raises(ConfigError):
        uniform_grid(t, h)


def test_matrix_function_kinds():
    poly = MatrixFunction.polynomial([np.eye(2), 2 * np.eye(2)])
    np.testing.assert_allclose(poly(0.5), 2 * np.eye(2))
    tab = MatrixFunction.tabulated([0.0, 1.0], [np.zeros((1, 1)), np.ones((1, 1))])
    np.testing.assert_allclose(tab([0.25, 0.75])[:, 0, 0], [0.25, 0.75])
    with pytest.raises(ConfigError):
        tab(2.0)
    spec = poly.to_spec()
    np.testing.assert_allclose(MatrixFunction.from_spec(spec, 2)(1.3), poly(1.3))


def test_matrix_function_rejects_bad_data():
    with pytest.raises(ConfigError):
        MatrixFunction.constant(np.ones((2, 3)))
    with pytest.raises(ConfigError):
        MatrixFunction.tabulated([1.0, 0.0], np.ones((2, 1, 1)))
    with pytest.raises(ConfigError):
        MatrixFunction.constant([[np.nan]])


def test_model_spec_roundtrip():
    model = positive_c_model(3, 2)
    back = CoefficientModel.from_spec(model.to_spec())
    tau = np.linspace(0, 2, 5)
    for a, b in zip(model.coefficients(tau), back.coefficients(tau)):
        np.testing.assert_allclose(a, b)


def test_model_validate_rejects_asymmetric_A():
    model = CoefficientModel.constant([[0.0, 1.0], [0.0, 0.0]], np.zeros((2, 2)), np.eye(2))
    with pytest.raises(ConfigError):
        model.validate(1.0)


@pytest.mark.parametrize("frequency", [0.5, 1.0, 2.0])
def test_harmonic_matches_closed_form(frequency):
    flow = integrate_fundamental(CoefficientModel.harmonic(1, frequency), 0.0, 3.0, 1e-3)
    w = frequency
    c, s = np.cos(w * flow.tau), np.sin(w * flow.tau)
    np.testing.assert_allclose(flow.frames[:, 0, 0], c, atol=1e-9)
    np.testing.assert_allclose(flow.frames[:, 0, 1], s / w, atol=1e-9)
    np.testing.assert_allclose(flow.frames[:, 1, 0], -w * s, atol=1e-9)


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_flow_stays_symplectic(seed):
    model = positive_c_model(seed)
    flow = integrate_fundamental(model, 0.0, 2.0, 2e-3)
    assert flow.max_residual < 1e-9
    assert is_symplectic(flow.frame_at(1.234)).ok


def test_dense_output_recovers_coefficients():
    model = positive_c_model(5, 2)
    flow = integrate_fundamental(model, 0.0, 2.0, 1e-3)
    k = 700
    A, B, C = recover_coefficients(flow.frames[k], flow.derivatives[k])
    a, b, c = model.coefficients(flow.tau[k])
    np.testing.assert_allclose(A, a, atol=1e-8)
    np.testing.assert_allclose(B, b, atol=1e-8)
    np.testing.assert_allclose(C, c, atol=1e-8)


def test_dense_output_between_nodes():
    flow = integrate_fundamental(CoefficientModel.harmonic(1), 0.0, 2.0, 1e-2)
    s = 1.2345
    np.testing.assert_allclose(flow.frame_at(s)[0, 0], math.cos(s), atol=1e-8)
    with pytest.raises(ConfigError):
        flow.frame_at(2.5)


def test_propagator_composition():
    flow = integrate_fundamental(positive_c_model(1, 2), 0.0, 2.0, 1e-3)
    lhs = propagator(flow, 1.8, 0.3)
    rhs = propagator(flow, 1.8, 1.0) @ propagator(flow, 1.0, 0.3)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_overflow_is_reported():
    model = CoefficientModel.constant([[-400.0]], [[0.0]], [[1.0]])
    with pytest.raises(NumericalError):
        integrate_fundamental(model, 0.0, 50.0, 0.05)


def test_cumulative_quadrature_exact_for_cubics():
    tau = np.linspace(0, 2, 11)
    vals = tau**3
    np.testing.assert_allclose(cumulative_quadrature(vals, tau)[-1], 4.0, rtol=1e-12)


def _sl_model():
    one = MatrixFunction.constant([[1.0]])
    return CoefficientModel.sturm_liouville(one, MatrixFunction.zeros(1), one)


def test_lambda_sensitivity_matches_finite_difference():
    model = _sl_model()
    lam, t, eps = 2.0, 2.0, 1e-5
    sens = lambda_sensitivity(model, lam, t, 1e-3)
    plus = integrate_fundamental(model, lam + eps, t, 1e-3).final
    minus = integrate_fundamental(model, lam - eps, t, 1e-3).final
    dphi = (plus - minus) / (2 * eps)
    phi = sens.flow.final
    np.testing.assert_allclose(sens.M2[-1], dphi @ np.linalg.inv(phi), atol=1e-7)
    assert sens.symmetry_residual() < 1e-10


def test_c2_second_case_boundary_term_and_frame():
    model = _sl_model()
    flow = integrate_fundamental(model, 1.0, math.pi, 1e-3)
    a0, b0 = np.array([[0.0]]), np.array([[1.0]])
    base = c2_second_case(model, 1.0, math.pi, a0, b0, [[0.0]], [[0.0]], flow=flow)
    np.testing.assert_allclose(base[-1, 0, 0], -math.pi / 2, atol=1e-10)
    moved = c2_second_case(model, 1.0, math.pi, a0, b0, [[0.0]], [[1.0]], flow=flow)
    q1 = -second_case_blocks(flow, a0, b0)[0]
    np.testing.assert_allclose(moved - base, q1 @ q1.transpose(0, 2, 1), atol=1e-12)
    frame = second_case_frame(flow, a0, b0, np.zeros((1, 1)))
    assert is_symplectic(frame[-1]).ok


def test_c2_second_case_rejects_unnormalized():
    with pytest.raises(ConfigError):
        c2_second_case(_sl_model(), 0.0, 1.0, [[2.0]], [[0.0]], [[0.0]], [[0.0]])


def test_block_matches_fundamental_subspace():
    model = positive_c_model(2, 2)
    Y0 = np.vstack([np.eye(2), np.zeros((2, 2))])
    blk = integrate_block(model, 0.0, 2.0, Y0, 1e-3)
    full = integrate_fundamental(model, 0.0, 2.0, 1e-3).final @ Y0
    y = blk.block_at(2.0)
    # same column space: projecting one onto the other loses nothing
    q, _ = np.linalg.qr(full)
    np.testing.assert_allclose(q @ (q.T @ y), y, atol=1e-8)
    assert blk.isotropy_residual() < 1e-10
