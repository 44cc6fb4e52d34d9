import numpy as np
import pytest

from aempc import qp as qpsolver
from aempc.qp import INFEASIBLE, MAX_ITER, SOLVED, QpSettings, QuadraticProgram, kkt_residuals, solve

from .qp_oracle import enumerate_box_qp, random_box_qp


def test_scalar_box():
    sol = solve(QuadraticProgram([[1.0]], [-1.0], [[1.0]], [0.0], [10.0]))
    assert sol.status == SOLVED
    assert sol.z[0] == pytest.approx(1.0, abs=1e-8)
    assert sol.objective == pytest.approx(-0.5, abs=1e-8)


def test_halfspace_projection():
    sol = solve(QuadraticProgram(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [2.0], [np.inf]))
    assert sol.status == SOLVED
    np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-8)
    assert sol.objective == pytest.approx(1.0, abs=1e-8)


def test_equality_row():
    # min 0.5|z|^2 - z1 s.t. z1 + z2 = 1 -> z = (1, 0)
    sol = solve(QuadraticProgram(np.eye(2), [-1.0, 0.0], [[1.0, 1.0]], [1.0], [1.0]))
    np.testing.assert_allclose(sol.z, [1.0, 0.0], atol=1e-8)


def test_unconstrained():
    sol = solve(QuadraticProgram(2 * np.eye(2), [2.0, -4.0], np.zeros((0, 2)), [], []))
    assert sol.status == SOLVED
    np.testing.assert_allclose(sol.z, [-1.0, 2.0])


@pytest.mark.parametrize("seed", range(20))
def test_random_box_qp_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    nz = int(rng.integers(1, 7))
    P, f, lo, hi = random_box_qp(rng, nz)
    z_ref, obj_ref = enumerate_box_qp(P, f, lo, hi)
    sol = solve(QuadraticProgram(P, f, np.eye(nz), lo, hi))
    assert sol.status == SOLVED
    assert abs(sol.objective - obj_ref) <= 1e-6
    np.testing.assert_allclose(sol.z, z_ref, atol=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_kkt_residuals_general_constraints(seed):
    rng = np.random.default_rng(100 + seed)
    nz, nc = 5, 8
    M = rng.normal(size=(nz, nz))
    P = M @ M.T + 1e-2 * np.eye(nz)
    f = rng.normal(size=nz)
    G = rng.normal(size=(nc, nz))
    z0 = rng.normal(size=nz)
    g = G @ z0
    lo = g - rng.uniform(0, 1, nc)
    hi = g + rng.uniform(0, 1, nc)
    lo[:2] = -np.inf
    qp = QuadraticProgram(P, f, G, lo, hi)
    sol = solve(qp)
    assert sol.status == SOLVED
    res = kkt_residuals(qp, sol)
    scale = max(1.0, np.abs(f).max(), np.abs(P @ sol.z).max())
    assert res["stationarity"] <= 1e-8 + 1e-8 * scale
    assert res["primal"] <= 1e-8
    assert res["complementarity"] <= 1e-7


def test_warm_start_same_optimum():
    rng = np.random.default_rng(7)
    P, f, lo, hi = random_box_qp(rng, 6)
    qp = QuadraticProgram(P, f, np.eye(6), lo, hi)
    cold = solve(qp)
    warm = solve(qp, warm_start=cold.z)
    assert warm.status == SOLVED
    np.testing.assert_allclose(warm.z, cold.z, atol=1e-8)
    assert warm.iterations <= cold.iterations
    # a warm start from a nearby instance converges to that instance's own optimum
    qp2 = QuadraticProgram(P, f + 1e-3, np.eye(6), lo, hi)
    z_ref, _ = enumerate_box_qp(P, f + 1e-3, lo, hi)
    np.testing.assert_allclose(solve(qp2, warm_start=cold.z).z, z_ref, atol=1e-7)


def test_infeasible_detected():
    # z1 + z2 >= 3 and z1, z2 <= 1 cannot both hold
    G = np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    qp = QuadraticProgram(np.eye(2), [0.0, 0.0], G, [3.0, -np.inf, -np.inf], [np.inf, 1.0, 1.0])
    assert solve(qp).status == INFEASIBLE


def test_max_iter_status():
    rng = np.random.default_rng(11)
    nz, nc = 6, 10
    M = rng.normal(size=(nz, nz))
    G = rng.normal(size=(nc, nz))
    qp = QuadraticProgram(M @ M.T, rng.normal(size=nz), G, -rng.uniform(0, 1, nc), rng.uniform(0, 1, nc))
    sol = solve(qp, max_iter=3, settings=QpSettings(polish=False))
    assert sol.status == MAX_ITER
    assert sol.iterations == 3
    assert sol.z.shape == (nz,)


def test_tolerance_override():
    sol = solve(QuadraticProgram([[1.0]], [-1.0], [[1.0]], [0.0], [10.0]), tol={"eps_abs": 1e-4, "eps_rel": 1e-4})
    assert sol.status == SOLVED


def test_invalid_qp_rejected():
    with pytest.raises(ValueError):
        QuadraticProgram([[1.0, 2.0], [0.0, 1.0]], [0, 0], np.eye(2), [0, 0], [1, 1])
    with pytest.raises(ValueError):
        QuadraticProgram(-np.eye(2), [0, 0], np.eye(2), [0, 0], [1, 1])
    with pytest.raises(ValueError):
        QuadraticProgram(np.eye(2), [0, 0], np.eye(2), [1, 0], [0, 1])
    with pytest.raises(ValueError):
        QuadraticProgram(np.eye(2), [0, 0, 0], np.eye(2), [0, 0], [1, 1])


def test_infinite_bounds_are_clamped():
    qp = QuadraticProgram(np.eye(1), [1.0], [[1.0]], [-np.inf], [np.inf])
    assert qp.g_lower[0] == -qpsolver.INF and qp.g_upper[0] == qpsolver.INF
