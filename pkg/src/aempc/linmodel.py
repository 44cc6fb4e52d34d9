"""Uncertain linear system x+ = A(theta) x + B(theta) u + w with affine parameter dependence."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


def _as_vec(v, size: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape[0] != size:
        raise ValueError(f"{name} must have dimension {size}, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class ParametricLinearModel:
    """A(theta) = A_0 + sum_i A_i theta_i, B(theta) = B_0 + sum_i B_i theta_i.

    ``A_list`` and ``B_list`` hold d + 1 matrices each, the nominal term first.
    """

    A_list: tuple
    B_list: tuple

    def __post_init__(self):
        A_list = tuple(np.atleast_2d(np.asarray(a, dtype=float)) for a in self.A_list)
        B_list = tuple(np.atleast_2d(np.asarray(b, dtype=float)) for b in self.B_list)
        if len(A_list) < 2 or len(A_list) != len(B_list):
            raise ValueError("need d + 1 >= 2 matrices in both A_list and B_list")
        n = A_list[0].shape[0]
        for a in A_list:
            if a.shape != (n, n):
                raise ValueError(f"all A_i must be {n}x{n}, got {a.shape}")
        m = B_list[0].shape[1]
        for b in B_list:
            if b.shape != (n, m):
                raise ValueError(f"all B_i must be {n}x{m}, got {b.shape}")
        for a in A_list + B_list:
            a.setflags(write=False)
        object.__setattr__(self, "A_list", A_list)
        object.__setattr__(self, "B_list", B_list)

    @property
    def n(self) -> int:
        return self.A_list[0].shape[0]

    @property
    def m(self) -> int:
        return self.B_list[0].shape[1]

    @property
    def d(self) -> int:
        return len(self.A_list) - 1


@dataclass(frozen=True)
class ParameterBox:
    """Axis-aligned compact parameter set [lower, upper]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper must have the same dimension")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("parameter box must be bounded")
        if np.any(lo > hi):
            raise ValueError("parameter box is empty (lower > upper)")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, theta, tol: float = 0.0) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower - tol) and np.all(theta <= self.upper + tol))

    def vertices(self) -> list[np.ndarray]:
        return box_vertices(self.lower, self.upper)

    def grid(self, points_per_axis: int) -> list[np.ndarray]:
        axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(self.lower, self.upper)]
        return [np.array(p) for p in itertools.product(*axes)]


def box_vertices(lower, upper) -> list[np.ndarray]:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    return [np.array(v) for v in itertools.product(*zip(lower, upper))]


@dataclass(frozen=True)
class ConstraintData:
    """Soft state constraints Hx <= h, input box U, state bound box Z and a disturbance bound.

    ``w_bound`` is a magnitude descriptor for W (a bound on ||w_k||); it only feeds
    the analysis constants and is never enforced.
    """

    H: np.ndarray
    h: np.ndarray
    u_lower: np.ndarray
    u_upper: np.ndarray
    z_lower: np.ndarray
    z_upper: np.ndarray
    w_bound: float = 0.0

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        h = np.asarray(self.h, dtype=float).reshape(-1)
        if H.shape[0] != h.shape[0]:
            raise ValueError("H and h row counts differ")
        if np.any(h < 0):
            raise ValueError("h must be componentwise nonnegative so that the origin is admissible")
        u_lo = np.asarray(self.u_lower, dtype=float).reshape(-1)
        u_hi = np.asarray(self.u_upper, dtype=float).reshape(-1)
        z_lo = np.asarray(self.z_lower, dtype=float).reshape(-1)
        z_hi = np.asarray(self.z_upper, dtype=float).reshape(-1)
        if u_lo.shape != u_hi.shape or np.any(u_lo > 0) or np.any(u_hi < 0):
            raise ValueError("input box must contain u = 0")
        if z_lo.shape != z_hi.shape or z_lo.shape[0] != H.shape[1]:
            raise ValueError("state box must have dimension n matching H")
        if np.any(z_lo > 0) or np.any(z_hi < 0):
            raise ValueError("state box must contain x = 0")
        if self.w_bound < 0:
            raise ValueError("w_bound must be nonnegative")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "u_lower", u_lo)
        object.__setattr__(self, "u_upper", u_hi)
        object.__setattr__(self, "z_lower", z_lo)
        object.__setattr__(self, "z_upper", z_hi)
        object.__setattr__(self, "w_bound", float(self.w_bound))

    @property
    def c(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class EconomicCost:
    """l(x, u, s) = |x|_Q^2 + |u|_R^2 + q'x + r'u + |s|_Lambda^2 with diagonal Lambda."""

    Q: np.ndarray
    R: np.ndarray
    q: np.ndarray
    r: np.ndarray
    Lambda: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        Lam = np.atleast_2d(np.asarray(self.Lambda, dtype=float))
        if Lam.shape[0] == 1 and Lam.shape[1] > 1:
            Lam = np.diag(Lam[0])
        for name, M in (("Q", Q), ("R", R)):
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M)[0] < -1e-10:
                raise ValueError(f"{name} must be positive semidefinite")
        if Lam.shape[0] != Lam.shape[1] or np.any(Lam != np.diag(np.diag(Lam))):
            raise ValueError("Lambda must be diagonal")
        if np.any(np.diag(Lam) <= 0):
            raise ValueError("Lambda must have strictly positive diagonal")
        q = np.asarray(self.q, dtype=float).reshape(-1)
        r = np.asarray(self.r, dtype=float).reshape(-1)
        if q.shape[0] != Q.shape[0] or r.shape[0] != R.shape[0]:
            raise ValueError("linear cost terms do not match Q/R dimensions")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "Lambda", Lam)

    def Q_bar(self, H: np.ndarray) -> np.ndarray:
        """Q + H' Lambda H, which majorizes the slack penalty."""
        return self.Q + H.T @ self.Lambda @ H


def assemble_A(model: ParametricLinearModel, theta) -> np.ndarray:
    theta = _as_vec(theta, model.d, "theta")
    A = model.A_list[0].copy()
    for Ai, t in zip(model.A_list[1:], theta):
        A += Ai * t
    return A


def assemble_B(model: ParametricLinearModel, theta) -> np.ndarray:
    theta = _as_vec(theta, model.d, "theta")
    B = model.B_list[0].copy()
    for Bi, t in zip(model.B_list[1:], theta):
        B += Bi * t
    return B


def regressor(model: ParametricLinearModel, x, u) -> np.ndarray:
    """D(x, u) with column i equal to A_i x + B_i u."""
    x = _as_vec(x, model.n, "x")
    u = _as_vec(u, model.m, "u")
    cols = [Ai @ x + Bi @ u for Ai, Bi in zip(model.A_list[1:], model.B_list[1:])]
    return np.column_stack(cols)


def step_true(model: ParametricLinearModel, theta_star, x, u, w) -> np.ndarray:
    x = _as_vec(x, model.n, "x")
    u = _as_vec(u, model.m, "u")
    w = _as_vec(w, model.n, "w")
    return assemble_A(model, theta_star) @ x + assemble_B(model, theta_star) @ u + w


@dataclass
class StabilityCertificate:
    is_stable: bool
    P: np.ndarray | None
    worst_eig: float
    iterations: int
    vertex_eigs: list = field(default_factory=list)


def _lyap_margin(A_vertices, P):
    """max_v lambda_max(A_v' P A_v - P + I) with a subgradient at the maximizer."""
    n = P.shape[0]
    eye = np.eye(n)
    worst, grad, eigs = -np.inf, None, []
    for A in A_vertices:
        w, V = np.linalg.eigh(A.T @ P @ A - P + eye)
        eigs.append(w[-1])
        if w[-1] > worst:
            worst = w[-1]
            e = V[:, -1]
            Ae = A @ e
            grad = np.outer(Ae, Ae) - np.outer(e, e)
    return worst, grad, eigs


def _project_geq_identity(P):
    P = 0.5 * (P + P.T)
    w, V = np.linalg.eigh(P)
    return (V * np.maximum(w, 1.0)) @ V.T


def check_open_loop_stability(
    model: ParametricLinearModel,
    theta_box: ParameterBox,
    max_iter: int = 20000,
    tol: float = 1e-8,
) -> StabilityCertificate:
    """Search a common Lyapunov matrix P >= I with A(v)'PA(v) - P + I <= 0 at every box vertex.

    Projected subgradient descent on f(P) = max_v lambda_max(A_v'PA_v - P + I) over
    {P >= I}, Polyak step towards the target value -1. Vertex feasibility is enough
    because A -> A'PA is matrix convex and A(theta) is affine on the box.
    """
    A_vertices = [assemble_A(model, v) for v in theta_box.vertices()]
    n = model.n
    A_c = assemble_A(model, theta_box.center)
    P = np.eye(n)
    if np.max(np.abs(np.linalg.eigvals(A_c))) < 1.0:
        # discrete Lyapunov solve at the box center as a warm start
        kron = np.eye(n * n) - np.kron(A_c.T, A_c.T)
        P = np.linalg.solve(kron, np.eye(n).reshape(-1)).reshape(n, n)
        P = _project_geq_identity(P)

    target = -1.0
    worst, grad, eigs = _lyap_margin(A_vertices, P)
    it = 0
    for it in range(1, max_iter + 1):
        if worst <= -tol:
            break
        gnorm2 = float(np.sum(grad * grad))
        if gnorm2 < 1e-300:
            break
        P = _project_geq_identity(P - (worst - target) / gnorm2 * grad)
        worst, grad, eigs = _lyap_margin(A_vertices, P)
    ok = worst <= tol
    if ok:
        # f(tP) = 1 + t (f(P) - 1): a mild rescale buys a margin of 1e-3 against roundoff
        P = P * max(1.0, 1.001 / (1.0 - worst))
        worst, _, eigs = _lyap_margin(A_vertices, P)
    return StabilityCertificate(
        is_stable=bool(ok),
        P=P if ok else None,
        worst_eig=float(worst),
        iterations=it,
        vertex_eigs=[float(e) for e in eigs],
    )
