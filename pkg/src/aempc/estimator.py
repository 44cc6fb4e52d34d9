"""Projected least-mean-squares adaptation of the model parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linmodel import ParameterBox, ParametricLinearModel, box_vertices, regressor


@dataclass(frozen=True)
class EstimatorState:
    theta_hat: np.ndarray
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("LMS gain must be positive")
        object.__setattr__(self, "theta_hat", np.asarray(self.theta_hat, dtype=float).reshape(-1))


def spectral_norm_sq(D: np.ndarray) -> float:
    """||D||^2 = lambda_max(D'D)."""
    return float(np.linalg.eigvalsh(D.T @ D)[-1])


def max_regressor_norm_sq(model: ParametricLinearModel, z_lower, z_upper, u_lower, u_upper) -> float:
    """Exact sup of ||D(x, u)||^2 over the box Z x U.

    ||D||^2 is convex in (x, u) since D is linear, so the maximum sits on a vertex.
    """
    n = model.n
    lo = np.concatenate([np.asarray(z_lower, float), np.asarray(u_lower, float)])
    hi = np.concatenate([np.asarray(z_upper, float), np.asarray(u_upper, float)])
    best = 0.0
    for v in box_vertices(lo, hi):
        best = max(best, spectral_norm_sq(regressor(model, v[:n], v[n:])))
    return best


def choose_gain(model: ParametricLinearModel, z_box, u_box) -> float:
    """Largest admissible LMS gain, mu = 1 / max_{Z x U} ||D(x, u)||^2.

    ``z_box`` and ``u_box`` are (lower, upper) pairs.
    """
    bound = max_regressor_norm_sq(model, z_box[0], z_box[1], u_box[0], u_box[1])
    if bound <= 0.0:
        raise ValueError("regressor vanishes on Z x U; no parameter direction is identifiable")
    return 1.0 / bound


def predict_one_step(model: ParametricLinearModel, theta_hat, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    D = regressor(model, x, u)
    return model.A_list[0] @ x + model.B_list[0] @ u + D @ np.asarray(theta_hat, dtype=float)


def project_box(theta_tilde, theta_box: ParameterBox) -> np.ndarray:
    """Euclidean projection onto a box is a componentwise clamp."""
    return np.clip(np.asarray(theta_tilde, dtype=float), theta_box.lower, theta_box.upper)


def lms_update(
    state: EstimatorState,
    model: ParametricLinearModel,
    theta_box: ParameterBox,
    x_k,
    u_k,
    x_next,
) -> EstimatorState:
    D = regressor(model, x_k, u_k)
    innovation = np.asarray(x_next, dtype=float) - predict_one_step(model, state.theta_hat, x_k, u_k)
    theta_tilde = state.theta_hat + state.mu * D.T @ innovation
    return EstimatorState(project_box(theta_tilde, theta_box), state.mu)


def parametric_error(model: ParametricLinearModel, theta_star, theta_hat, x, u) -> np.ndarray:
    """One-step parametric prediction error D(x, u)(theta* - theta_hat)."""
    D = regressor(model, x, u)
    return D @ (np.asarray(theta_star, dtype=float) - np.asarray(theta_hat, dtype=float))
