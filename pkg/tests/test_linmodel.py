import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aempc.linmodel import (
    ConstraintData,
    EconomicCost,
    ParameterBox,
    ParametricLinearModel,
    assemble_A,
    assemble_B,
    check_open_loop_stability,
    regressor,
    step_true,
)
from aempc.presets import A1_CAP, A2_CAP, THETA_STAR

from .conftest import building_state_matrix

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def constant_model(A0, n=2):
    """A(theta) = A0 for every theta (one dummy parameter)."""
    return ParametricLinearModel((A0, np.zeros((n, n))), (np.zeros((n, 1)), np.zeros((n, 1))))


def test_building_A_at_theta_star(bscn):
    t1, t2 = THETA_STAR
    expected = np.array([
        [1 - 0.048 / 0.6125, 0.048 / 0.6125],
        [0.048 / 21.12, 1 - (0.048 + 0.0015) / 21.12],
    ])
    np.testing.assert_allclose(assemble_A(bscn.model, [t1, t2]), expected, rtol=0, atol=1e-15)


def test_A_and_B_at_zero_are_nominal(bscn):
    m = bscn.model
    np.testing.assert_array_equal(assemble_A(m, [0, 0]), m.A_list[0])
    np.testing.assert_array_equal(assemble_B(m, [0, 0]), m.B_list[0])


@pytest.mark.parametrize("theta", [THETA_STAR, (0.005, 0.0004), (0.144, 0.0075)])
def test_building_B_is_parameter_free(bscn, theta):
    np.testing.assert_allclose(assemble_B(bscn.model, theta), [[1 / 0.6125], [0.0]])


def test_regressor_zero(bscn):
    assert np.all(regressor(bscn.model, [0, 0], [0]) == 0)


@pytest.mark.parametrize("x", [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-3.0, 2.5]])
def test_building_regressor_is_derivative_of_state_matrix(bscn, x):
    # central differences of the hand-written 2R2C matrix; exact for an affine map
    x = np.array(x)
    th = np.array(THETA_STAR)
    h = 1e-3
    cols = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        cols.append((building_state_matrix(th + e) - building_state_matrix(th - e)) @ x / (2 * h))
    np.testing.assert_allclose(regressor(bscn.model, x, [0.0]), np.column_stack(cols), atol=1e-12)


def test_building_regressor_unit_states(bscn):
    D = regressor(bscn.model, [1.0, 0.0], [0.0])
    np.testing.assert_allclose(D[:, 0], [-1 / A1_CAP, 1 / A2_CAP])
    np.testing.assert_allclose(D[:, 1], [0.0, 0.0])
    D = regressor(bscn.model, [0.0, 1.0], [0.0])
    np.testing.assert_allclose(D[:, 0], [1 / A1_CAP, -1 / A2_CAP])
    np.testing.assert_allclose(D[:, 1], [0.0, -1 / A2_CAP])


@settings(max_examples=200, deadline=None)
@given(
    x=arrays(float, 2, elements=finite),
    u=arrays(float, 1, elements=finite),
    th=arrays(float, 2, elements=st.floats(-1, 1)),
)
def test_affine_decomposition_identity(bscn, x, u, th):
    m = bscn.model
    lhs = assemble_A(m, th) @ x + assemble_B(m, th) @ u
    rhs = m.A_list[0] @ x + m.B_list[0] @ u + regressor(m, x, u) @ th
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    a=arrays(float, 2, elements=st.floats(-1, 1)),
    b=arrays(float, 2, elements=st.floats(-1, 1)),
    t=st.floats(0, 1),
)
def test_assemble_A_is_affine(bscn, a, b, t):
    m = bscn.model
    lhs = assemble_A(m, t * a + (1 - t) * b)
    rhs = t * assemble_A(m, a) + (1 - t) * assemble_A(m, b)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_step_true_examples(bscn):
    m = bscn.model
    assert np.all(step_true(m, THETA_STAR, [0, 0], [0], [0, 0]) == 0)
    np.testing.assert_array_equal(step_true(m, THETA_STAR, [0, 0], [0], [0.3, -2.0]), [0.3, -2.0])
    np.testing.assert_allclose(
        step_true(m, THETA_STAR, [1, 1], [0], [0, 0]), building_state_matrix(THETA_STAR) @ [1, 1], atol=1e-15
    )


def test_dimension_errors(bscn):
    with pytest.raises(ValueError):
        assemble_A(bscn.model, [0.1])
    with pytest.raises(ValueError):
        regressor(bscn.model, [1, 2, 3], [0])
    with pytest.raises(ValueError):
        ParametricLinearModel((np.eye(2),), (np.zeros((2, 1)),))
    with pytest.raises(ValueError):
        ParametricLinearModel((np.eye(2), np.eye(3)), (np.zeros((2, 1)),) * 2)


def test_parameter_box():
    box = ParameterBox([0.005, 0.0004], [0.144, 0.0075])
    assert len(box.vertices()) == 4
    assert box.contains([0.048, 0.0015])
    assert not box.contains([0.2, 0.0015])
    np.testing.assert_allclose(box.center, [0.0745, 0.00395])
    assert len(box.grid(3)) == 9
    with pytest.raises(ValueError):
        ParameterBox([1.0], [0.0])
    with pytest.raises(ValueError):
        ParameterBox([0.0], [np.inf])


def test_constraint_and_cost_validation():
    with pytest.raises(ValueError):
        ConstraintData([[-1, 0]], [-1], [-1], [1], [-1, -1], [1, 1])  # h < 0 excludes the origin
    with pytest.raises(ValueError):
        ConstraintData([[-1, 0]], [1], [0.1], [1], [-1, -1], [1, 1])  # U misses u = 0
    with pytest.raises(ValueError):
        EconomicCost(np.eye(2), [[1.0]], [0, 0], [0], [[0.0]])  # Lambda must be positive
    with pytest.raises(ValueError):
        EconomicCost(-np.eye(2), [[1.0]], [0, 0], [0], [[1.0]])
    cost = EconomicCost(np.diag([500, 0]), [[0]], [0, 0], [600], [[1e5]])
    np.testing.assert_allclose(cost.Q_bar(np.array([[-1.0, 0.0]])), [[1e5 + 500, 0], [0, 0]])


def _vertex_lmi(model, box, P):
    out = []
    for v in box.vertices():
        A = assemble_A(model, v)
        out.append(np.linalg.eigvalsh(A.T @ P @ A - P + np.eye(model.n))[-1])
    return max(out)


def test_stability_half_identity():
    model = constant_model(0.5 * np.eye(2))
    box = ParameterBox([0.0], [1.0])
    cert = check_open_loop_stability(model, box)
    assert cert.is_stable
    assert _vertex_lmi(model, box, cert.P) <= 1e-8
    # the textbook certificate works too
    assert _vertex_lmi(model, box, 4.0 / 3.0 * np.eye(2)) <= 1e-12


def test_stability_identity_rejected():
    cert = check_open_loop_stability(constant_model(np.eye(2)), ParameterBox([0.0], [1.0]), max_iter=500)
    assert not cert.is_stable
    assert cert.P is None
    assert cert.worst_eig >= 1.0 - 1e-12


def test_stability_building(bscn):
    cert = check_open_loop_stability(bscn.model, bscn.theta_box)
    assert cert.is_stable
    assert np.all(np.linalg.eigvalsh(cert.P) >= 1.0 - 1e-9)
    assert _vertex_lmi(bscn.model, bscn.theta_box, cert.P) <= 1e-8
    assert max(cert.vertex_eigs) <= 1e-8


def test_stability_deterministic(bscn):
    a = check_open_loop_stability(bscn.model, bscn.theta_box)
    b = check_open_loop_stability(bscn.model, bscn.theta_box)
    np.testing.assert_array_equal(a.P, b.P)
    assert a.iterations == b.iterations
