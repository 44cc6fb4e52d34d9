"""Dense operator-splitting (ADMM) solver for convex QPs

    minimize    1/2 z'Pz + f'z
    subject to  g_lower <= G z <= g_upper

The iteration follows the OSQP splitting: Ruiz equilibration, over-relaxation,
per-constraint step sizes with a stiffer value on equality rows, adaptive rho,
and a polishing step that solves the equality-constrained KKT system on the
guessed active set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

INF = 1e20

SOLVED = "solved"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QuadraticProgram:
    P_mat: np.ndarray
    f: np.ndarray
    G: np.ndarray
    g_lower: np.ndarray
    g_upper: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P_mat, dtype=float))
        f = np.asarray(self.f, dtype=float).reshape(-1)
        G = np.asarray(self.G, dtype=float)
        if G.ndim == 1:
            G = G.reshape(0, f.shape[0]) if G.size == 0 else G.reshape(1, -1)
        lo = np.asarray(self.g_lower, dtype=float).reshape(-1)
        hi = np.asarray(self.g_upper, dtype=float).reshape(-1)
        nz = f.shape[0]
        if P.shape != (nz, nz) or G.shape[1] != nz or lo.shape[0] != G.shape[0] or hi.shape != lo.shape:
            raise ValueError("inconsistent QP dimensions")
        if not np.allclose(P, P.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(P).max(initial=0.0))):
            raise ValueError("Hessian must be symmetric")
        P = 0.5 * (P + P.T)
        scale = max(1.0, np.abs(P).max(initial=0.0))
        if nz and np.linalg.eigvalsh(P)[0] < -1e-10 * scale:
            raise ValueError("Hessian must be positive semidefinite")
        if np.any(lo > hi):
            raise ValueError("g_lower must not exceed g_upper")
        object.__setattr__(self, "P_mat", P)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g_lower", np.maximum(lo, -INF))
        object.__setattr__(self, "g_upper", np.minimum(hi, INF))

    @property
    def n_var(self) -> int:
        return self.f.shape[0]

    @property
    def n_con(self) -> int:
        return self.G.shape[0]

    def objective(self, z) -> float:
        return float(0.5 * z @ self.P_mat @ z + self.f @ z)


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    y: np.ndarray = field(repr=False, default=None)
    polished: bool = False


@dataclass
class QpSettings:
    eps_abs: float = 1e-8
    eps_rel: float = 1e-8
    max_iter: int = 50000
    alpha: float = 1.6
    sigma: float = 1e-6
    rho: float = 0.1
    adaptive_rho: bool = True
    adaptive_rho_interval: int = 25
    adaptive_rho_tolerance: float = 5.0
    check_interval: int = 5
    scaling_iter: int = 10
    polish: bool = True
    polish_delta: float = 1e-9
    polish_refine_iter: int = 5
    polish_max_active_iter: int = 50
    polish_interval: int = 25
    eps_prim_inf: float = 1e-8


def _ruiz(P, G, f, iters):
    """Ruiz equilibration of the KKT matrix plus a cost scaling factor."""
    nz, nc = P.shape[0], G.shape[0]
    D = np.ones(nz)
    E = np.ones(nc)
    c = 1.0
    Ps, Gs, fs = P.copy(), G.copy(), f.copy()
    for _ in range(iters):
        col_norm = np.abs(Ps).max(axis=0, initial=0.0)
        if nc:
            col_norm = np.maximum(col_norm, np.abs(Gs).max(axis=0))
            row_norm = np.abs(Gs).max(axis=1)
        else:
            row_norm = np.zeros(0)
        dD = 1.0 / np.sqrt(np.clip(col_norm, 1e-4, 1e4))
        dD[col_norm < 1e-12] = 1.0
        dE = 1.0 / np.sqrt(np.clip(row_norm, 1e-4, 1e4))
        dE[row_norm < 1e-12] = 1.0
        Ps = dD[:, None] * Ps * dD[None, :]
        Gs = dE[:, None] * Gs * dD[None, :]
        fs = dD * fs
        D *= dD
        E *= dE
        mean_col = np.mean(np.abs(Ps).max(axis=0, initial=0.0)) if nz else 1.0
        gamma = 1.0 / np.clip(max(mean_col, np.abs(fs).max(initial=0.0)), 1e-4, 1e4)
        if max(mean_col, np.abs(fs).max(initial=0.0)) < 1e-12:
            gamma = 1.0
        Ps *= gamma
        fs *= gamma
        c *= gamma
    return Ps, Gs, fs, D, E, c


class _Workspace:
    def __init__(self, qp: QuadraticProgram, settings: QpSettings):
        self.qp = qp
        self.s = settings
        self.P, self.G, self.f, self.D, self.E, self.c = _ruiz(qp.P_mat, qp.G, qp.f, settings.scaling_iter)
        lo = qp.g_lower * self.E
        hi = qp.g_upper * self.E
        lo[qp.g_lower <= -INF] = -INF
        hi[qp.g_upper >= INF] = INF
        self.lo, self.hi = lo, hi
        self.Dinv = 1.0 / self.D
        self.Einv = 1.0 / self.E
        self.eq = np.abs(qp.g_upper - qp.g_lower) < 1e-12
        self.free = (qp.g_lower <= -INF) & (qp.g_upper >= INF)
        self.set_rho(settings.rho)

    def set_rho(self, rho):
        self.rho = float(np.clip(rho, 1e-6, 1e6))
        rv = np.full(self.G.shape[0], self.rho)
        rv[self.eq] = 1e3 * self.rho
        rv[self.free] = 1e-6
        self.rho_vec = rv
        K = self.P + self.s.sigma * np.eye(self.P.shape[0]) + self.G.T @ (rv[:, None] * self.G)
        self.factor = sla.cho_factor(K)

    def unscaled_residuals(self, x, z, y):
        """Primal/dual residuals of the unscaled problem and their tolerances."""
        Gx = self.G @ x
        prim = np.abs(self.Einv * (Gx - z)).max(initial=0.0)
        Px = self.P @ x
        Gty = self.G.T @ y
        dual = np.abs(self.Dinv * (Px + self.f + Gty)).max(initial=0.0) / self.c
        eps_p = self.s.eps_abs + self.s.eps_rel * max(
            np.abs(self.Einv * Gx).max(initial=0.0), np.abs(self.Einv * z).max(initial=0.0)
        )
        eps_d = self.s.eps_abs + self.s.eps_rel * max(
            np.abs(self.Dinv * Px).max(initial=0.0),
            np.abs(self.Dinv * Gty).max(initial=0.0),
            np.abs(self.Dinv * self.f).max(initial=0.0),
        ) / self.c
        return prim, dual, eps_p, eps_d

    def scaled_ratio(self, x, z, y):
        Gx = self.G @ x
        Px = self.P @ x
        Gty = self.G.T @ y
        prim = np.abs(Gx - z).max(initial=0.0) / max(np.abs(Gx).max(initial=0.0), np.abs(z).max(initial=0.0), 1e-30)
        dual = np.abs(Px + self.f + Gty).max(initial=0.0) / max(
            np.abs(Px).max(initial=0.0), np.abs(Gty).max(initial=0.0), np.abs(self.f).max(initial=0.0), 1e-30
        )
        return prim, dual

    def _kkt_solve(self, lo_act, hi_act):
        act = lo_act | hi_act
        b = np.where(hi_act, self.hi, self.lo)[act]
        Ga = self.G[act]
        nz, na = self.P.shape[0], Ga.shape[0]
        delta = self.s.polish_delta
        K = np.block([[self.P, Ga.T], [Ga, np.zeros((na, na))]])
        rhs = np.concatenate([-self.f, b])
        candidates = []
        # the plain factorization is the most accurate when K is nonsingular; the
        # regularized one serves degenerate active sets (dependent rows, singular P)
        for shift in (0.0, delta):
            Kf = K if shift == 0.0 else K + np.diag(np.concatenate([np.full(nz, shift), np.full(na, -shift)]))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                try:
                    lu = sla.lu_factor(Kf, check_finite=False)
                except (ValueError, np.linalg.LinAlgError):
                    continue
            with np.errstate(all="ignore"):
                sol = sla.lu_solve(lu, rhs, check_finite=False)
                for _ in range(self.s.polish_refine_iter):
                    sol = sol + sla.lu_solve(lu, rhs - K @ sol, check_finite=False)
            if np.all(np.isfinite(sol)):
                candidates.append((float(np.abs(K @ sol - rhs).max()), sol))
        if not candidates:
            return None
        sol = min(candidates, key=lambda c: c[0])[1]
        y = np.zeros(self.G.shape[0])
        y[act] = sol[nz:]
        return sol[:nz], y

    def polish(self, x, z, y):
        """Active-set refinement of the KKT system, seeded by the set guessed from (z, y).

        Violated rows are added, rows with wrong-signed multipliers dropped one at a
        time; returns None if the iteration budget runs out or the KKT solve fails.
        """
        lo_act = ((z - self.lo < -y) | self.eq) & (self.lo > -INF)
        hi_act = (self.hi - z < y) & ~self.eq & (self.hi < INF)
        ineq = ~self.eq
        feas_tol = 1e-12 * max(1.0, np.abs(self.lo[self.lo > -INF]).max(initial=0.0),
                               np.abs(self.hi[self.hi < INF]).max(initial=0.0))
        for _ in range(self.s.polish_max_active_iter):
            out = self._kkt_solve(lo_act, hi_act)
            if out is None:
                return None
            xp, yp = out
            Gx = self.G @ xp
            v_lo = np.where(~lo_act & ineq, self.lo - Gx, -np.inf)
            v_hi = np.where(~hi_act & ineq, Gx - self.hi, -np.inf)
            if max(v_lo.max(initial=-np.inf), v_hi.max(initial=-np.inf)) > feas_tol:
                add_lo = v_lo > feas_tol
                add_hi = v_hi > feas_tol
                lo_act = lo_act | add_lo
                hi_act = (hi_act | add_hi) & ~lo_act
                continue
            wrong = np.zeros_like(yp)
            wrong[lo_act & ineq] = np.maximum(yp[lo_act & ineq], 0.0)
            wrong[hi_act] = np.maximum(-yp[hi_act], 0.0)
            i = int(np.argmax(wrong))
            if wrong[i] > 0.0:
                lo_act[i] = hi_act[i] = False
                continue
            return xp, np.clip(Gx, self.lo, self.hi), yp
        return None

    def unscale(self, x, y):
        return self.D * x, self.E * y / self.c


def solve(
    qp: QuadraticProgram,
    warm_start=None,
    tol: dict | None = None,
    max_iter: int | None = None,
    settings: QpSettings | None = None,
) -> QpSolution:
    """Solve ``qp``; ``tol`` may carry ``eps_abs`` / ``eps_rel`` overrides."""
    s = QpSettings() if settings is None else QpSettings(**vars(settings))
    if tol:
        s.eps_abs = tol.get("eps_abs", s.eps_abs)
        s.eps_rel = tol.get("eps_rel", s.eps_rel)
    if max_iter is not None:
        s.max_iter = max_iter

    nz, nc = qp.n_var, qp.n_con
    if nc == 0:
        z = np.linalg.lstsq(qp.P_mat, -qp.f, rcond=None)[0]
        res = np.abs(qp.P_mat @ z + qp.f).max(initial=0.0)
        status = SOLVED if res <= s.eps_abs + s.eps_rel * np.abs(qp.f).max(initial=0.0) else INFEASIBLE
        return QpSolution(z, qp.objective(z), status, 0, 0.0, float(res), np.zeros(0), True)

    ws = _Workspace(qp, s)
    if warm_start is not None:
        x = np.asarray(warm_start, dtype=float).reshape(-1) * ws.Dinv
    else:
        x = np.zeros(nz)
    z = np.clip(ws.G @ x, ws.lo, ws.hi)
    y = np.zeros(nc)
    alpha = s.alpha
    prim = dual = np.inf
    best = None
    polish_tried_at = -1

    for it in range(1, s.max_iter + 1):
        y_prev = y
        rhs = s.sigma * x - ws.f + ws.G.T @ (ws.rho_vec * z - y)
        xt = sla.cho_solve(ws.factor, rhs)
        zt = ws.G @ xt
        x = alpha * xt + (1.0 - alpha) * x
        zr = alpha * zt + (1.0 - alpha) * z
        z_new = np.clip(zr + y / ws.rho_vec, ws.lo, ws.hi)
        y = y + ws.rho_vec * (zr - z_new)
        z = z_new

        if it % s.check_interval and it != s.max_iter:
            continue
        prim, dual, eps_p, eps_d = ws.unscaled_residuals(x, z, y)
        if prim <= eps_p and dual <= eps_d:
            out = _finish(ws, x, z, y, it, prim, dual, s, try_polish=True)
            return out
        # polishing a coarse iterate usually lands on the exact optimum long before ADMM converges
        if s.polish and it - polish_tried_at >= s.polish_interval:
            polish_tried_at = it
            out = _try_polish(ws, x, z, y, it)
            if out is not None:
                return out

        dy = y - y_prev
        if _primal_infeasible(ws, dy, s.eps_prim_inf):
            xu, yu = ws.unscale(x, y)
            return QpSolution(xu, qp.objective(xu), INFEASIBLE, it, float(prim), float(dual), yu)

        if s.adaptive_rho and it % s.adaptive_rho_interval == 0:
            rp, rd = ws.scaled_ratio(x, z, y)
            if rd > 0:
                new_rho = ws.rho * np.sqrt(rp / rd)
                if new_rho > s.adaptive_rho_tolerance * ws.rho or new_rho < ws.rho / s.adaptive_rho_tolerance:
                    ws.set_rho(new_rho)
        best = (x, z, y)

    x, z, y = best
    out = _try_polish(ws, x, z, y, s.max_iter) if s.polish else None
    if out is not None:
        return out
    xu, yu = ws.unscale(x, y)
    return QpSolution(xu, qp.objective(xu), MAX_ITER, s.max_iter, float(prim), float(dual), yu)


def _primal_infeasible(ws: _Workspace, dy, eps) -> bool:
    ndy = np.abs(ws.E * dy).max(initial=0.0)
    if ndy < 1e-30:
        return False
    if np.abs(ws.D * (ws.G.T @ dy)).max(initial=0.0) > eps * ndy:
        return False
    hi = np.where(ws.hi >= INF, 0.0, ws.hi)
    lo = np.where(ws.lo <= -INF, 0.0, ws.lo)
    # unbounded sides must not carry multiplier mass
    if np.any((ws.hi >= INF) & (dy > eps * ndy)) or np.any((ws.lo <= -INF) & (dy < -eps * ndy)):
        return False
    return float(hi @ np.maximum(dy, 0.0) + lo @ np.minimum(dy, 0.0)) < -eps * ndy


def _try_polish(ws: _Workspace, x, z, y, it):
    pol = ws.polish(x, z, y)
    if pol is None:
        return None
    xp, zp, yp = pol
    prim, dual, eps_p, eps_d = ws.unscaled_residuals(xp, zp, yp)
    if prim <= eps_p and dual <= eps_d:
        xu, yu = ws.unscale(xp, yp)
        return QpSolution(xu, ws.qp.objective(xu), SOLVED, it, float(prim), float(dual), yu, polished=True)
    return None


def _finish(ws, x, z, y, it, prim, dual, s, try_polish):
    if try_polish and s.polish:
        out = _try_polish(ws, x, z, y, it)
        if out is not None:
            return out
    xu, yu = ws.unscale(x, y)
    return QpSolution(xu, ws.qp.objective(xu), SOLVED, it, float(prim), float(dual), yu)


def kkt_residuals(qp: QuadraticProgram, sol: QpSolution) -> dict:
    """Stationarity, primal feasibility and complementarity of an unscaled primal-dual pair."""
    z, y = sol.z, sol.y
    Gz = qp.G @ z
    stat = np.abs(qp.P_mat @ z + qp.f + qp.G.T @ y).max(initial=0.0)
    prim = np.maximum(np.maximum(qp.g_lower - Gz, Gz - qp.g_upper), 0.0).max(initial=0.0)
    y_hi = np.maximum(y, 0.0)
    y_lo = np.minimum(y, 0.0)
    gap_hi = np.where(qp.g_upper >= INF, 0.0, qp.g_upper - Gz)
    gap_lo = np.where(qp.g_lower <= -INF, 0.0, Gz - qp.g_lower)
    comp = max(np.abs(y_hi * gap_hi).max(initial=0.0), np.abs(y_lo * gap_lo).max(initial=0.0))
    return {"stationarity": float(stat), "primal": float(prim), "complementarity": float(comp)}
