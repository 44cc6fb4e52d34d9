"""Closed-loop simulation of adaptive economic MPC and the fixed-model baseline.

Randomness comes from numpy's PCG64 bit generator seeded through SeedSequence
with the entropy ``(seed, k)``, so the disturbance at step k is a pure function of
the seed and k regardless of how many draws were made before.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .estimator import EstimatorState, lms_update
from .linmodel import ParameterBox, ParametricLinearModel, step_true
from .mpc import MpcConfig, shifted_inputs, solve_mpc, stage_cost

ZERO = "zero"
DECAYING = "decaying"
BUILDING = "building"
RECORDED = "recorded"
KINDS = (ZERO, DECAYING, BUILDING, RECORDED)


def _rng(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(k)])))


@dataclass(frozen=True)
class DisturbanceGenerator:
    """Synthetic disturbance source in raw coordinates.

    ``params`` by kind:
      zero:      dim
      decaying:  w0 (vector), rho (0 <= rho < 1)
      building:  amplitude, noise (half-widths), period, lag; one entry per channel
      recorded:  sequence (T x dim)
    """

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.kind == DECAYING and not 0.0 <= float(self.params["rho"]) < 1.0:
            raise ValueError("decay rate rho must lie in [0, 1)")

    @property
    def dim(self) -> int:
        p = self.params
        if self.kind == ZERO:
            return int(p["dim"])
        if self.kind == DECAYING:
            return len(p["w0"])
        if self.kind == BUILDING:
            return len(p["amplitude"])
        return np.asarray(p["sequence"]).shape[1]

    def finite_energy(self) -> bool:
        return self.kind in (ZERO, DECAYING)

    def component_bound(self) -> np.ndarray:
        """Componentwise bound |w_k| <= b valid for every k."""
        p = self.params
        if self.kind == ZERO:
            return np.zeros(self.dim)
        if self.kind == DECAYING:
            return np.abs(np.asarray(p["w0"], dtype=float))
        if self.kind == BUILDING:
            return np.abs(np.asarray(p["amplitude"], float)) * (1.0 + np.asarray(p["noise"], float))
        return np.abs(np.asarray(p["sequence"], dtype=float)).max(axis=0)


def generate_disturbance(gen: DisturbanceGenerator, k: int) -> np.ndarray:
    if k < 0:
        raise ValueError("time index must be nonnegative")
    p = gen.params
    if gen.kind == ZERO:
        return np.zeros(gen.dim)
    if gen.kind == DECAYING:
        return np.asarray(p["w0"], dtype=float) * float(p["rho"]) ** k
    if gen.kind == RECORDED:
        return np.asarray(p["sequence"], dtype=float)[k].copy()
    amp = np.asarray(p["amplitude"], dtype=float)
    noise = np.asarray(p["noise"], dtype=float)
    lag = np.asarray(p.get("lag", np.zeros(amp.shape)), dtype=float)
    period = float(p.get("period", 144))
    eta = _rng(gen.seed, k).uniform(-1.0, 1.0, size=amp.shape[0]) * noise
    return amp * (np.sin(2.0 * math.pi * (k - lag) / period) + eta)


def disturbance_energy(gen: DisturbanceGenerator, E=None) -> float:
    """Closed-form S_w = sum_k ||E w_k||^2 for finite-energy generators."""
    if gen.kind == ZERO:
        return 0.0
    if gen.kind != DECAYING:
        raise ValueError(f"{gen.kind!r} disturbances do not have finite energy")
    w0 = np.asarray(gen.params["w0"], dtype=float)
    if E is not None:
        w0 = np.asarray(E, dtype=float) @ w0
    rho = float(gen.params["rho"])
    return float(w0 @ w0 / (1.0 - rho**2))


def disturbance_bound(gen: DisturbanceGenerator, E=None) -> float:
    """Pointwise bound w_bar >= ||E w_k|| (exact sup over the componentwise box)."""
    b = gen.component_bound()
    E = np.eye(b.shape[0]) if E is None else np.asarray(E, dtype=float)
    return max(float(np.linalg.norm(E @ (np.array(sgn) * b))) for sgn in itertools.product((-1.0, 1.0), repeat=b.shape[0]))


@dataclass(frozen=True)
class ScenarioConfig:
    model: ParametricLinearModel
    theta_star: np.ndarray
    theta_hat_0: np.ndarray
    theta_box: ParameterBox
    mpc_config: MpcConfig
    disturbance: DisturbanceGenerator
    T_steps: int
    mu: float
    adapt: bool = True
    seed: int = 0
    x0: np.ndarray | None = None
    disturbance_matrix: np.ndarray | None = None

    def __post_init__(self):
        if not self.theta_box.contains(self.theta_star):
            raise ValueError("theta_star must lie in the parameter box")
        if not self.theta_box.contains(self.theta_hat_0):
            raise ValueError("theta_hat_0 must lie in the parameter box")
        if self.T_steps < 1:
            raise ValueError("T_steps must be positive")

    @property
    def E(self) -> np.ndarray:
        if self.disturbance_matrix is None:
            return np.eye(self.model.n)
        return np.asarray(self.disturbance_matrix, dtype=float)

    @property
    def w_bar(self) -> float:
        return disturbance_bound(self.disturbance, self.E)


@dataclass
class SimLog:
    """Per-step closed-loop record; row k holds x_k, u_k, w_k, theta_hat_k, s*_{0|k}, l_k, V_N*_k."""

    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    theta_hat: np.ndarray
    slack: np.ndarray
    stage_cost: np.ndarray
    value_fn: np.ndarray
    qp_iters: np.ndarray
    x_final: np.ndarray
    z_violations: int
    mu: float
    adapt: bool
    seed: int
    finite_energy: bool = False
    w_bar: float = 0.0

    @property
    def T(self) -> int:
        return self.x.shape[0]

    @property
    def accumulated_cost(self) -> np.ndarray:
        return np.cumsum(self.stage_cost)

    def header(self) -> list[str]:
        n, m, d, c = self.x.shape[1], self.u.shape[1], self.theta_hat.shape[1], self.slack.shape[1]
        return (
            ["k"]
            + [f"x{i}" for i in range(n)]
            + [f"u{i}" for i in range(m)]
            + [f"w{i}" for i in range(n)]
            + [f"theta_hat{i}" for i in range(d)]
            + [f"slack{i}" for i in range(c)]
            + ["stage_cost", "value_fn", "qp_iters"]
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        for k in range(self.T):
            row = [str(k)]
            for arr in (self.x[k], self.u[k], self.w[k], self.theta_hat[k], self.slack[k]):
                row.extend(repr(float(v)) for v in arr)
            row += [repr(float(self.stage_cost[k])), repr(float(self.value_fn[k])), str(int(self.qp_iters[k]))]
            writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n: int, m: int, d: int, c: int, **meta) -> "SimLog":
        rows = list(csv.reader(io.StringIO(text)))
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        cols = np.cumsum([1, n, m, n, d, c])
        meta.setdefault("x_final", np.full(n, np.nan))
        meta.setdefault("z_violations", 0)
        meta.setdefault("mu", float("nan"))
        meta.setdefault("adapt", True)
        meta.setdefault("seed", 0)
        return cls(
            x=data[:, cols[0]:cols[1]],
            u=data[:, cols[1]:cols[2]],
            w=data[:, cols[2]:cols[3]],
            theta_hat=data[:, cols[3]:cols[4]],
            slack=data[:, cols[4]:cols[5]],
            stage_cost=data[:, cols[5]],
            value_fn=data[:, cols[5] + 1],
            qp_iters=data[:, cols[5] + 2].astype(int),
            **meta,
        )


def run_closed_loop(scenario: ScenarioConfig) -> SimLog:
    """Measure, adapt, refresh the terminal cost, solve, apply, step the plant.

    At step k the estimator consumes the transition (x_{k-1}, u_{k-1}, x_k); there is
    no update at k = 0. The terminal linear term is recomputed inside the QP build
    from the current estimate.
    """
    model = scenario.model
    cfg: MpcConfig = scenario.mpc_config
    cons = cfg.constraints
    gen = replace(scenario.disturbance, seed=scenario.seed)
    E = scenario.E
    T, n, m, d, c = scenario.T_steps, model.n, model.m, model.d, cons.c

    xs = np.zeros((T, n))
    us = np.zeros((T, m))
    ws = np.zeros((T, n))
    ths = np.zeros((T, d))
    ss = np.zeros((T, c))
    ells = np.zeros(T)
    vals = np.zeros(T)
    iters = np.zeros(T, dtype=int)
    z_viol = 0

    x = np.zeros(n) if scenario.x0 is None else np.asarray(scenario.x0, dtype=float).copy()
    est = EstimatorState(np.asarray(scenario.theta_hat_0, dtype=float).copy(), scenario.mu)
    x_prev = u_prev = None
    warm = None
    for k in range(T):
        if scenario.adapt and k > 0:
            est = lms_update(est, model, scenario.theta_box, x_prev, u_prev, x)
        if np.any(x < cons.z_lower) or np.any(x > cons.z_upper):
            z_viol += 1
        sol = solve_mpc(cfg, model, est.theta_hat, x, warm_start=warm)
        u = sol.u_opt[0].copy()
        s0 = sol.s_opt[0].copy()
        w = E @ generate_disturbance(gen, k)

        xs[k], us[k], ws[k], ths[k], ss[k] = x, u, w, est.theta_hat, s0
        ells[k] = stage_cost(cfg.cost, x, u, s0)
        vals[k] = sol.value
        iters[k] = sol.qp_stats.iterations

        x_prev, u_prev = x, u
        x = step_true(model, scenario.theta_star, x, u, w)
        warm = shifted_inputs(sol)

    return SimLog(
        x=xs, u=us, w=ws, theta_hat=ths, slack=ss, stage_cost=ells, value_fn=vals, qp_iters=iters,
        x_final=x, z_violations=z_viol, mu=scenario.mu, adapt=scenario.adapt, seed=scenario.seed,
        finite_energy=gen.finite_energy(), w_bar=scenario.w_bar,
    )
