"""Theory constants and empirical audits of the closed-loop performance guarantees.

All audits read logged data only. Asymptotic statements are checked through
tail-window averages against an explicit tolerance.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimator import spectral_norm_sq
from .linmodel import ConstraintData, ParameterBox, ParametricLinearModel, assemble_A, box_vertices, regressor
from .mpc import MpcConfig, solve_mpc
from .sim import SimLog
from .terminal import linear_term

log = logging.getLogger(__name__)

SAFETY = 1.1
REFINE_TOL = 0.01


class GridResolutionWarning(UserWarning):
    pass


@dataclass
class TheoryConstants:
    L: float
    L_f: float
    C_A_prime: float
    C_A: float
    C_V: float
    mu: float
    N: int
    w_bar: float | None = None
    S_w: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def stage_lipschitz(cost, constraints: ConstraintData) -> float:
    """Upper bound on the gradient norm of l(x, u, max(Hx - h, 0)) over Z x U.

    The x-gradient is bounded by |2Qx + q| + |2H'Lambda| |max(Hx - h, 0)| and the
    u-gradient by |2Ru + r|; both bounds are convex, so box vertices suffice.
    """
    HtL = 2.0 * constraints.H.T @ cost.Lambda
    HtL_norm = math.sqrt(spectral_norm_sq(HtL)) if HtL.size else 0.0
    gx = 0.0
    for x in box_vertices(constraints.z_lower, constraints.z_upper):
        s = np.maximum(constraints.H @ x - constraints.h, 0.0)
        gx = max(gx, float(np.linalg.norm(2.0 * cost.Q @ x + cost.q) + HtL_norm * np.linalg.norm(s)))
    gu = 0.0
    for u in box_vertices(constraints.u_lower, constraints.u_upper):
        gu = max(gu, float(np.linalg.norm(2.0 * cost.R @ u + cost.r)))
    return math.hypot(gx, gu)


def _p_jacobian(model, theta, q, theta_box, h_rel=1e-6):
    """Central finite differences of p(theta), one-sided at the box faces."""
    d = model.d
    J = np.zeros((model.n, d))
    span = theta_box.upper - theta_box.lower
    for i in range(d):
        h = h_rel * max(span[i], 1e-12)
        tp, tm = theta.copy(), theta.copy()
        tp[i] = min(theta[i] + h, theta_box.upper[i])
        tm[i] = max(theta[i] - h, theta_box.lower[i])
        if tp[i] == tm[i]:
            continue
        J[:, i] = (linear_term(model, tp, q) - linear_term(model, tm, q)) / (tp[i] - tm[i])
    return J


def terminal_lipschitz_grid(model, theta_box, P_f, q, z_lower, z_upper, points) -> float:
    """sup of |(2 P_f x + p(theta), J_p(theta)' x)| over Z vertices x Theta grid (no inflation)."""
    best = 0.0
    zv = box_vertices(z_lower, z_upper)
    for th in theta_box.grid(points):
        p = linear_term(model, th, q)
        J = _p_jacobian(model, th, q, theta_box)
        for x in zv:
            g = np.concatenate([2.0 * P_f @ x + p, J.T @ x])
            best = max(best, float(np.linalg.norm(g)))
    return best


def power_sum_grid(model, theta_box, N, points) -> float:
    """max over theta in grid and j in [1, N+1] of sum_{i<j} |A(theta)^i|."""
    best = 0.0
    thetas = theta_box.grid(points) + theta_box.vertices()
    for th in thetas:
        A = assemble_A(model, th)
        Ai = np.eye(model.n)
        total = 0.0
        for _ in range(N + 1):
            total += math.sqrt(spectral_norm_sq(Ai))
            Ai = A @ Ai
        # the partial sums increase with j, so j = N + 1 is the maximizer
        best = max(best, total)
    return best


def _refine(fn, start=3, max_points=65, label=""):
    """Double the grid resolution until the value moves by less than 1 %."""
    pts = start
    prev = fn(pts)
    while True:
        nxt_pts = 2 * pts - 1
        if nxt_pts > max_points:
            warnings.warn(f"{label}: grid refinement did not settle below 1 %", GridResolutionWarning, stacklevel=3)
            return prev, pts
        cur = fn(nxt_pts)
        change = abs(cur - prev) / max(abs(prev), 1e-300)
        pts = nxt_pts
        if change < REFINE_TOL:
            return max(cur, prev), pts
        prev = cur


def value_bound(config: MpcConfig, model, theta_box: ParameterBox, theta_points: int = 3) -> float:
    """max |V_N*| over the Z vertices and a Theta grid; V_N* is convex in x, so Z vertices are exact."""
    cons = config.constraints
    best = 0.0
    for th in theta_box.grid(theta_points):
        for x in box_vertices(cons.z_lower, cons.z_upper):
            best = max(best, abs(solve_mpc(config, model, th, x).value))
    return best


def compute_constants(
    model: ParametricLinearModel,
    theta_box: ParameterBox,
    mpc_config: MpcConfig,
    mu: float,
    z_box=None,
    w_bar: float | None = None,
    S_w: float | None = None,
) -> TheoryConstants:
    """L, L_f, C_A', C_A = [L_f + (N-1)L] C_A' + L_f sqrt(mu), and C_V = 2 max|V_N*|.

    ``z_box`` overrides the state box stored in the constraints. L_f and C_V carry a
    10 % safety inflation; grid-based maxima are refined until they settle within 1 %.
    """
    cons = mpc_config.constraints
    if z_box is not None:
        cons = ConstraintData(cons.H, cons.h, cons.u_lower, cons.u_upper, z_box[0], z_box[1], cons.w_bound)
        mpc_config = MpcConfig(mpc_config.N, mpc_config.cost, cons, mpc_config.terminal,
                               mpc_config.theta_box, mpc_config.qp_settings)
    N = mpc_config.N
    term = mpc_config.terminal
    L = stage_lipschitz(mpc_config.cost, cons)
    Lf_raw, _ = _refine(
        lambda k: terminal_lipschitz_grid(model, theta_box, term.P_f, term.q_vec, cons.z_lower, cons.z_upper, k),
        label="L_f",
    )
    L_f = SAFETY * Lf_raw
    C_A_prime, _ = _refine(lambda k: power_sum_grid(model, theta_box, N, k), label="C_A'")
    C_A = (L_f + (N - 1) * L) * C_A_prime + L_f * math.sqrt(mu)
    C_V = 2.0 * SAFETY * value_bound(mpc_config, model, theta_box)
    return TheoryConstants(L=L, L_f=L_f, C_A_prime=C_A_prime, C_A=C_A, C_V=C_V, mu=mu, N=N, w_bar=w_bar, S_w=S_w)


# -- audits -------------------------------------------------------------------------


@dataclass
class AuditEntry:
    """One audited inequality lhs_T <= rhs_T (or a scalar check).

    ``worst_margin`` is the largest (lhs - rhs) normalised as described in ``note``;
    ``passed`` is None when the guarantee does not apply to the run.
    """

    name: str
    lhs: np.ndarray
    rhs: np.ndarray
    worst_margin: float
    tolerance: float
    passed: bool | None
    applicable: bool = True
    note: str = ""

    def summary(self) -> dict:
        out = {
            "name": self.name,
            "applicable": self.applicable,
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "tolerance": self.tolerance,
            "note": self.note,
        }
        if self.lhs.size:
            i = int(np.argmax(self.lhs - self.rhs))
            out.update(worst_index=i, lhs_at_worst=float(self.lhs[i]), rhs_at_worst=float(self.rhs[i]))
        return out


@dataclass
class AuditReport:
    entries: list = field(default_factory=list)

    def add(self, entry: AuditEntry) -> AuditEntry:
        self.entries.append(entry)
        return entry

    @property
    def failed(self) -> list:
        return [e for e in self.entries if e.applicable and e.passed is False]

    @property
    def ok(self) -> bool:
        return not self.failed

    def to_json(self) -> str:
        return json.dumps({"ok": self.ok, "checks": [e.summary() for e in self.entries]}, indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = []
        for e in self.entries:
            state = "n/a " if not e.applicable else ("PASS" if e.passed else "FAIL")
            lines.append(f"[{state}] {e.name:<12} worst margin {e.worst_margin:+.3e} (tol {e.tolerance:.1e}) {e.note}")
        return "\n".join(lines) + "\n"


def _not_applicable(name, why):
    log.info("%s not applicable: %s", name, why)
    return AuditEntry(name, np.zeros(0), np.zeros(0), float("nan"), float("nan"), None, False, why)


def prediction_errors(log_: SimLog, model, theta_star) -> np.ndarray:
    """Rows D(x_k, u_k)(theta* - theta_hat_k)."""
    th = np.asarray(theta_star, dtype=float)
    return np.array([regressor(model, log_.x[k], log_.u[k]) @ (th - log_.theta_hat[k]) for k in range(log_.T)])


def audit_prop1(log_: SimLog, model, theta_star, mu: float | None = None, rel_tol: float = 1e-9) -> AuditEntry:
    """sum_{k<=T} |x~_k|^2 <= |theta_hat_0 - theta*|^2 / mu + sum_{k<=T} |w_k|^2 for every T."""
    name = "prop1"
    if not log_.adapt:
        return _not_applicable(name, "no parameter adaptation in this run")
    mu = log_.mu if mu is None else mu
    xt = prediction_errors(log_, model, theta_star)
    lhs = np.cumsum(np.sum(xt**2, axis=1))
    e0 = log_.theta_hat[0] - np.asarray(theta_star, dtype=float)
    rhs = e0 @ e0 / mu + np.cumsum(np.sum(log_.w**2, axis=1))
    margin = float(np.max((lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)))
    return AuditEntry(name, lhs, rhs, margin, rel_tol, margin <= rel_tol, note="relative to rhs")


def audit_lms_step(log_: SimLog, model, theta_star, rel_tol: float = 1e-9) -> AuditEntry:
    """|theta_{k+1} - theta_k| <= mu |D_k| |x~_k + w_k| at every logged step."""
    name = "lms_step"
    if not log_.adapt:
        return _not_applicable(name, "no parameter adaptation in this run")
    th = np.asarray(theta_star, dtype=float)
    lhs, rhs = [], []
    for k in range(log_.T - 1):
        D = regressor(model, log_.x[k], log_.u[k])
        xt = D @ (th - log_.theta_hat[k])
        lhs.append(np.linalg.norm(log_.theta_hat[k + 1] - log_.theta_hat[k]))
        rhs.append(log_.mu * math.sqrt(spectral_norm_sq(D)) * np.linalg.norm(xt + log_.w[k]))
    lhs, rhs = np.array(lhs), np.array(rhs)
    if lhs.size == 0:
        return AuditEntry(name, lhs, rhs, 0.0, rel_tol, True)
    margin = float(np.max((lhs - rhs) / np.maximum(rhs, 1e-300) * (lhs > 0)))
    return AuditEntry(name, lhs, rhs, margin, rel_tol, margin <= rel_tol, note="relative to rhs")


def audit_thm1(log_: SimLog, window: int = 500, eps: float | None = None, rel_eps: float = 1e-3) -> AuditEntry:
    """Tail-window average of the closed-loop stage cost <= eps (default 1e-3 * peak |l|)."""
    name = "thm1"
    if not log_.finite_energy:
        return _not_applicable(name, "disturbances are not finite-energy; the asymptotic bound does not apply")
    ell = log_.stage_cost
    window = min(window, ell.size)
    running = np.cumsum(ell) / np.arange(1, ell.size + 1)
    if eps is None:
        eps = rel_eps * max(float(np.max(np.abs(ell))), 1e-300)
    tail = float(np.mean(ell[-window:]))
    return AuditEntry(name, running, np.full(ell.size, eps), tail - eps, eps, tail <= eps,
                      note=f"tail mean over last {window} steps = {tail:.3e}")


def audit_thm2(log_: SimLog, constants: TheoryConstants, theta_star, w_bar: float | None = None) -> AuditEntry:
    """sum_{k<T} l_k <= C_V + 2 w_bar C_A T + (C_A / sqrt(mu)) |theta_hat_0 - theta*| sqrt(T)."""
    name = "thm2"
    if not log_.adapt:
        return _not_applicable(name, "bound is stated for the adaptive scheme")
    w_bar = log_.w_bar if w_bar is None else w_bar
    lhs = np.cumsum(log_.stage_cost)
    T = np.arange(1, lhs.size + 1, dtype=float)
    e0 = float(np.linalg.norm(log_.theta_hat[0] - np.asarray(theta_star, dtype=float)))
    c = constants
    rhs = c.C_V + 2.0 * w_bar * c.C_A * T + c.C_A / math.sqrt(c.mu) * e0 * np.sqrt(T)
    margin = float(np.max(lhs - rhs))
    return AuditEntry(name, lhs, rhs, margin, 0.0, margin <= 0.0, note=f"w_bar = {w_bar:.4g}")


def audit_lemma2(log_: SimLog, model, theta_star, window: int = 500, eps: float | None = None,
                 rel_eps: float = 1e-3) -> AuditEntry:
    """Final-window mean of |x~_k| + |w_k| <= eps (default 1e-3 * its peak)."""
    name = "lemma2"
    if not log_.finite_energy:
        return _not_applicable(name, "disturbances are not finite-energy; the limit statement does not apply")
    xt = prediction_errors(log_, model, theta_star)
    trace = np.linalg.norm(xt, axis=1) + np.linalg.norm(log_.w, axis=1)
    running = np.cumsum(trace) / np.arange(1, trace.size + 1)
    window = min(window, trace.size)
    if eps is None:
        eps = rel_eps * max(float(np.max(trace)), 1e-300)
    tail = float(np.mean(trace[-window:]))
    return AuditEntry(name, running, np.full(trace.size, eps), tail - eps, eps, tail <= eps,
                      note=f"tail mean over last {window} steps = {tail:.3e}")


AUDITS = ("prop1", "lms_step", "thm1", "thm2", "lemma2")


def audit_run(log_: SimLog, model, theta_star, constants: TheoryConstants | None, enabled=AUDITS,
              window: int = 500) -> AuditReport:
    report = AuditReport()
    if "prop1" in enabled:
        report.add(audit_prop1(log_, model, theta_star))
    if "lms_step" in enabled:
        report.add(audit_lms_step(log_, model, theta_star))
    if "thm1" in enabled:
        report.add(audit_thm1(log_, window))
    if "thm2" in enabled and constants is not None:
        report.add(audit_thm2(log_, constants, theta_star))
    if "lemma2" in enabled:
        report.add(audit_lemma2(log_, model, theta_star, window))
    return report
