"""Parameter-dependent terminal cost l_f(x, theta) = |x|_Pf^2 + p(theta)'x."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linmodel import (
    ConstraintData,
    EconomicCost,
    ParameterBox,
    ParametricLinearModel,
    assemble_A,
    check_open_loop_stability,
)

LMI_TOL = 1e-8


class TerminalDesignError(RuntimeError):
    pass


@dataclass(frozen=True)
class TerminalCost:
    P_f: np.ndarray
    q_vec: np.ndarray
    Q_bar: np.ndarray


def vertex_lmi_eigs(model: ParametricLinearModel, theta_box: ParameterBox, P_f, Q_bar) -> list[float]:
    """lambda_max(A(v)'P_f A(v) - P_f + Q_bar) for every vertex v of the box."""
    out = []
    for v in theta_box.vertices():
        A = assemble_A(model, v)
        M = A.T @ P_f @ A - P_f + Q_bar
        out.append(float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1]))
    return out


def design_Pf(
    model: ParametricLinearModel,
    theta_box: ParameterBox,
    Q_bar,
    lyapunov_P=None,
) -> np.ndarray:
    """Scale the common Lyapunov certificate P to P_f = max(1, lambda_max(Q_bar)) * P.

    From A'PA - P <= -I it follows A'P_fA - P_f <= -cI <= -Q_bar on the whole box.
    The vertex LMIs are re-checked numerically before returning.
    """
    Q_bar = np.asarray(Q_bar, dtype=float)
    if lyapunov_P is None:
        cert = check_open_loop_stability(model, theta_box)
        if not cert.is_stable:
            raise TerminalDesignError(
                f"no common Lyapunov matrix found (worst vertex eigenvalue {cert.worst_eig:.3e})"
            )
        lyapunov_P = cert.P
    c = max(1.0, float(np.linalg.eigvalsh(Q_bar)[-1]))
    P_f = c * np.asarray(lyapunov_P, dtype=float)
    P_f = 0.5 * (P_f + P_f.T)
    worst = max(vertex_lmi_eigs(model, theta_box, P_f, Q_bar))
    # eigenvalues of P_f-sized matrices carry roundoff proportional to |P_f|
    if worst > LMI_TOL:
        raise TerminalDesignError(f"terminal LMI violated at a vertex: lambda_max = {worst:.3e}")
    return P_f


def make_terminal_cost(
    model: ParametricLinearModel,
    theta_box: ParameterBox,
    cost: EconomicCost,
    constraints: ConstraintData,
    lyapunov_P=None,
) -> TerminalCost:
    Q_bar = cost.Q_bar(constraints.H)
    P_f = design_Pf(model, theta_box, Q_bar, lyapunov_P)
    return TerminalCost(P_f=P_f, q_vec=cost.q.copy(), Q_bar=Q_bar)


def linear_term(model: ParametricLinearModel, theta, q) -> np.ndarray:
    """p(theta) solving (I - A(theta))' p = q."""
    A = assemble_A(model, theta)
    M = (np.eye(model.n) - A).T
    # a Schur-stable A(theta) keeps I - A(theta) well away from singular
    if np.linalg.cond(M) > 1e14:
        raise np.linalg.LinAlgError("I - A(theta) is singular; theta is outside the certified stable set")
    return np.linalg.solve(M, np.asarray(q, dtype=float))


def eval_terminal(tc: TerminalCost, model: ParametricLinearModel, x, theta) -> float:
    x = np.asarray(x, dtype=float)
    return float(x @ tc.P_f @ x + linear_term(model, theta, tc.q_vec) @ x)


@dataclass(frozen=True)
class DecreaseCheck:
    lhs: float
    rhs: float
    ok: bool


def verify_decrease(
    tc: TerminalCost,
    model: ParametricLinearModel,
    cost: EconomicCost,
    constraints: ConstraintData,
    x,
    theta,
    tol: float = 1e-8,
) -> DecreaseCheck:
    """Evaluate l_f(A(theta)x, theta) - l_f(x, theta) <= -l(x, 0, s) with s = max(Hx - h, 0)."""
    lhs, rhs = decrease_terms(tc, model, cost, constraints, np.asarray(x, dtype=float)[None, :], theta)
    return DecreaseCheck(lhs=float(lhs[0]), rhs=float(rhs[0]), ok=bool(lhs[0] <= rhs[0] + tol))


def decrease_terms(tc: TerminalCost, model: ParametricLinearModel, cost: EconomicCost,
                   constraints: ConstraintData, X, theta):
    """Row-wise (lhs, rhs) of the terminal decrease condition for a batch of states X (k x n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    A = assemble_A(model, theta)
    p = linear_term(model, theta, tc.q_vec)
    AX = X @ A.T
    lhs = np.einsum("ij,jk,ik->i", AX, tc.P_f, AX) + AX @ p - np.einsum("ij,jk,ik->i", X, tc.P_f, X) - X @ p
    S = np.maximum(X @ constraints.H.T - constraints.h, 0.0)
    stage = np.einsum("ij,jk,ik->i", X, cost.Q, X) + X @ cost.q + np.einsum("ij,jk,ik->i", S, cost.Lambda, S)
    return lhs, -stage
