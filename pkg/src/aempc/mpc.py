"""Certainty-equivalent economic MPC with soft state constraints, posed as a condensed QP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qp as qpsolver
from .linmodel import ConstraintData, EconomicCost, ParameterBox, ParametricLinearModel, assemble_A, assemble_B
from .terminal import TerminalCost, eval_terminal, linear_term


class MpcSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class MpcConfig:
    N: int
    cost: EconomicCost
    constraints: ConstraintData
    terminal: TerminalCost
    theta_box: ParameterBox | None = None
    qp_settings: qpsolver.QpSettings | None = None

    def __post_init__(self):
        if int(self.N) < 1:
            raise ValueError("horizon N must be at least 1")


@dataclass
class MpcSolution:
    u_opt: np.ndarray  # (N, m)
    x_pred: np.ndarray  # (N + 1, n)
    s_opt: np.ndarray  # (N, c)
    value: float
    qp_stats: qpsolver.QpSolution


def stage_cost(cost: EconomicCost, x, u, s) -> float:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float).reshape(-1)
    s = np.asarray(s, dtype=float).reshape(-1)
    return float(x @ cost.Q @ x + u @ cost.R @ u + cost.q @ x + cost.r @ u + s @ cost.Lambda @ s)


def slack_of(constraints: ConstraintData, x) -> np.ndarray:
    return np.maximum(constraints.H @ np.asarray(x, dtype=float) - constraints.h, 0.0)


def prediction_matrices(A, B, N):
    """Phi, Gamma with stacked x_hat_j = Phi_j x0 + Gamma_j u for j = 0..N."""
    n, m = B.shape
    Phi = np.zeros(((N + 1) * n, n))
    Gamma = np.zeros(((N + 1) * n, N * m))
    Ak = np.eye(n)
    powers = [Ak]
    for _ in range(N):
        Ak = A @ Ak
        powers.append(Ak)
    for j in range(N + 1):
        Phi[j * n:(j + 1) * n] = powers[j]
        for i in range(j):
            Gamma[j * n:(j + 1) * n, i * m:(i + 1) * m] = powers[j - 1 - i] @ B
    return Phi, Gamma


def _check_inputs(config: MpcConfig, model: ParametricLinearModel, theta_hat, x_k):
    theta_hat = np.asarray(theta_hat, dtype=float).reshape(-1)
    x_k = np.asarray(x_k, dtype=float).reshape(-1)
    if theta_hat.shape[0] != model.d or x_k.shape[0] != model.n:
        raise ValueError("theta_hat or x_k has the wrong dimension")
    if config.theta_box is not None and not config.theta_box.contains(theta_hat, tol=1e-12):
        raise ValueError("theta_hat lies outside the parameter box")
    return theta_hat, x_k


def build_qp(config: MpcConfig, model: ParametricLinearModel, theta_hat, x_k):
    """Condensed QP in z = (u_0..u_{N-1}, s_0..s_{N-1}).

    Returns ``(qp, const, Phi, Gamma)`` where ``const`` is the z-independent part of
    the MPC cost, so that V = qp.objective(z) + const.
    """
    theta_hat, x_k = _check_inputs(config, model, theta_hat, x_k)
    N, n, m = config.N, model.n, model.m
    cost, cons, term = config.cost, config.constraints, config.terminal
    c = cons.c
    A = assemble_A(model, theta_hat)
    B = assemble_B(model, theta_hat)
    Phi, Gamma = prediction_matrices(A, B, N)
    p = linear_term(model, theta_hat, term.q_vec)

    Qblk = np.kron(np.eye(N + 1), cost.Q)
    Qblk[N * n:, N * n:] = term.P_f
    qblk = np.concatenate([np.tile(cost.q, N), p])
    nu, ns = N * m, N * c

    free = Phi @ x_k
    Hu = 2.0 * (Gamma.T @ Qblk @ Gamma + np.kron(np.eye(N), cost.R))
    fu = 2.0 * Gamma.T @ Qblk @ free + Gamma.T @ qblk + np.tile(cost.r, N)
    P_mat = np.zeros((nu + ns, nu + ns))
    P_mat[:nu, :nu] = Hu
    P_mat[nu:, nu:] = 2.0 * np.kron(np.eye(N), cost.Lambda)
    f = np.concatenate([fu, np.zeros(ns)])
    const = float(free @ Qblk @ free + qblk @ free)

    # rows: input box, s >= 0, H x_hat_j - s_j <= h
    Hblk = np.kron(np.eye(N), cons.H)
    G = np.zeros((nu + ns + ns, nu + ns))
    G[:nu, :nu] = np.eye(nu)
    G[nu:nu + ns, nu:] = np.eye(ns)
    G[nu + ns:, :nu] = Hblk @ Gamma[:N * n]
    G[nu + ns:, nu:] = -np.eye(ns)
    lower = np.concatenate([np.tile(cons.u_lower, N), np.zeros(ns), np.full(ns, -np.inf)])
    upper = np.concatenate([
        np.tile(cons.u_upper, N),
        np.full(ns, np.inf),
        np.tile(cons.h, N) - Hblk @ free[:N * n],
    ])
    return qpsolver.QuadraticProgram(P_mat, f, G, lower, upper), const, Phi, Gamma


def build_sparse_qp(config: MpcConfig, model: ParametricLinearModel, theta_hat, x_k):
    """Non-condensed QP in z = (x_0..x_N, u_0..u_{N-1}, s_0..s_{N-1}) with dynamics as equalities.

    Kept as an independent cross-check of the condensed formulation.
    """
    theta_hat, x_k = _check_inputs(config, model, theta_hat, x_k)
    N, n, m = config.N, model.n, model.m
    cost, cons, term = config.cost, config.constraints, config.terminal
    c = cons.c
    A = assemble_A(model, theta_hat)
    B = assemble_B(model, theta_hat)
    p = linear_term(model, theta_hat, term.q_vec)
    nx, nu, ns = (N + 1) * n, N * m, N * c
    nz = nx + nu + ns
    ix = lambda j: slice(j * n, (j + 1) * n)  # noqa: E731
    iu = lambda j: slice(nx + j * m, nx + (j + 1) * m)  # noqa: E731
    is_ = lambda j: slice(nx + nu + j * c, nx + nu + (j + 1) * c)  # noqa: E731

    P_mat = np.zeros((nz, nz))
    f = np.zeros(nz)
    for j in range(N):
        P_mat[ix(j), ix(j)] = 2.0 * cost.Q
        P_mat[iu(j), iu(j)] = 2.0 * cost.R
        P_mat[is_(j), is_(j)] = 2.0 * cost.Lambda
        f[ix(j)] = cost.q
        f[iu(j)] = cost.r
    P_mat[ix(N), ix(N)] = term.P_f
    P_mat[ix(N), ix(N)] *= 2.0
    f[ix(N)] = p

    rows, lo, hi = [], [], []

    def add(row, l, u):
        rows.append(row)
        lo.append(l)
        hi.append(u)

    blk = np.zeros((n, nz))
    blk[:, ix(0)] = np.eye(n)
    add(blk, x_k, x_k)
    for j in range(N):
        blk = np.zeros((n, nz))
        blk[:, ix(j + 1)] = np.eye(n)
        blk[:, ix(j)] = -A
        blk[:, iu(j)] = -B
        add(blk, np.zeros(n), np.zeros(n))
    for j in range(N):
        blk = np.zeros((m, nz))
        blk[:, iu(j)] = np.eye(m)
        add(blk, cons.u_lower, cons.u_upper)
        blk = np.zeros((c, nz))
        blk[:, is_(j)] = np.eye(c)
        add(blk, np.zeros(c), np.full(c, np.inf))
        blk = np.zeros((c, nz))
        blk[:, ix(j)] = cons.H
        blk[:, is_(j)] = -np.eye(c)
        add(blk, np.full(c, -np.inf), cons.h)
    G = np.vstack(rows)
    return qpsolver.QuadraticProgram(P_mat, f, G, np.concatenate(lo), np.concatenate(hi))


def solve_mpc(config: MpcConfig, model: ParametricLinearModel, theta_hat, x_k, warm_start=None) -> MpcSolution:
    """Solve the MPC problem and return the optimal input/state/slack trajectories and V_N*.

    ``warm_start`` is an optional input sequence of shape (N, m); slacks for the warm
    start are filled in from the predicted states.
    """
    qp, const, Phi, Gamma = build_qp(config, model, theta_hat, x_k)
    N, n, m, c = config.N, model.n, model.m, config.constraints.c
    x_k = np.asarray(x_k, dtype=float).reshape(-1)
    z0 = None
    if warm_start is not None:
        u0 = np.asarray(warm_start, dtype=float).reshape(-1)
        xs = (Phi @ x_k + Gamma @ u0).reshape(N + 1, n)
        s0 = np.maximum(xs[:N] @ config.constraints.H.T - config.constraints.h, 0.0).reshape(-1)
        z0 = np.concatenate([u0, s0])
    sol = qpsolver.solve(qp, warm_start=z0, settings=config.qp_settings)
    if sol.status != qpsolver.SOLVED:
        raise MpcSolveError(f"QP solver returned status {sol.status!r} after {sol.iterations} iterations")
    u = sol.z[:N * m]
    s = np.maximum(sol.z[N * m:], 0.0)
    x_pred = (Phi @ x_k + Gamma @ u).reshape(N + 1, n)
    return MpcSolution(
        u_opt=u.reshape(N, m),
        x_pred=x_pred,
        s_opt=s.reshape(N, c),
        value=sol.objective + const,
        qp_stats=sol,
    )


def trajectory_cost(config: MpcConfig, model: ParametricLinearModel, theta_hat, sol: MpcSolution) -> float:
    """Re-evaluate the MPC objective along a returned trajectory."""
    total = sum(stage_cost(config.cost, sol.x_pred[j], sol.u_opt[j], sol.s_opt[j]) for j in range(config.N))
    return total + eval_terminal(config.terminal, model, sol.x_pred[-1], theta_hat)


def shifted_inputs(sol: MpcSolution) -> np.ndarray:
    """Candidate input sequence (u*_{1|k}, ..., u*_{N-1|k}, 0)."""
    return np.vstack([sol.u_opt[1:], np.zeros((1, sol.u_opt.shape[1]))])
