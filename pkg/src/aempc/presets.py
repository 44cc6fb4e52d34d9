"""Building temperature control case: 2R2C zone model at 10-minute sampling.

States are room and wall temperature deviations, the input is a heat flow, and the
two disturbance channels are a heat flow (e.g. solar gain) and the outdoor
temperature. The outdoor temperature enters through the true wall conductance, so
the additive disturbance seen by the plant is ``E w`` with E = diag(1/a1, theta2*/a2).
"""

from __future__ import annotations

import numpy as np

A1_CAP = 0.6125
A2_CAP = 21.12

THETA_STAR = (0.048, 0.0015)
THETA_HAT_0 = (0.1, 0.0075)
THETA_LOWER = (0.005, 0.0004)
THETA_UPPER = (0.144, 0.0075)

Q_DIAG = (500.0, 0.0)
R_LIN = 600.0
SLACK_PENALTY = 1e5
HORIZON = 18
LMS_GAIN = 5e-5
U_BOUND = 0.8
Z_BOUND = (20.0, 10.0)
ROOM_TEMP_MIN = -1.0

STEPS_PER_DAY = 144
DIST_AMPLITUDE = (0.595, 7.0)
DIST_NOISE = (0.2, 0.5)
DIST_LAG = (0, 9)


def model_matrices(a1: float = A1_CAP, a2: float = A2_CAP) -> dict:
    """A_0..A_2 and B_0..B_2 of the affine parametrization."""
    A0 = np.eye(2)
    A1 = np.array([[-1.0 / a1, 1.0 / a1], [1.0 / a2, -1.0 / a2]])
    A2 = np.array([[0.0, 0.0], [0.0, -1.0 / a2]])
    B0 = np.array([[1.0 / a1], [0.0]])
    zero = np.zeros((2, 1))
    return {"A": [A0, A1, A2], "B": [B0, zero, zero.copy()]}


def disturbance_matrix(theta_star=THETA_STAR, a1: float = A1_CAP, a2: float = A2_CAP) -> np.ndarray:
    return np.diag([1.0 / a1, theta_star[1] / a2])


def preset_dict() -> dict:
    """Expanded configuration mapping for the building case (config-file schema)."""
    mats = model_matrices()
    return {
        "model": {
            "A": [a.tolist() for a in mats["A"]],
            "B": [b.tolist() for b in mats["B"]],
        },
        "parameters": {
            "theta_star": list(THETA_STAR),
            "theta_hat_0": list(THETA_HAT_0),
            "lower": list(THETA_LOWER),
            "upper": list(THETA_UPPER),
        },
        "constraints": {
            "H": [[-1.0, 0.0]],
            "h": [-ROOM_TEMP_MIN],
            "u_lower": [-U_BOUND],
            "u_upper": [U_BOUND],
            "z_lower": [-Z_BOUND[0], -Z_BOUND[1]],
            "z_upper": [Z_BOUND[0], Z_BOUND[1]],
        },
        "cost": {
            "Q": np.diag(Q_DIAG).tolist(),
            "R": [[0.0]],
            "q": [0.0, 0.0],
            "r": [R_LIN],
            "Lambda": [[SLACK_PENALTY]],
        },
        "mpc": {"N": HORIZON},
        "estimator": {"mu": LMS_GAIN},
        "disturbance": {
            "kind": "building",
            "amplitude": list(DIST_AMPLITUDE),
            "noise": list(DIST_NOISE),
            "period": STEPS_PER_DAY,
            "lag": list(DIST_LAG),
            "matrix": disturbance_matrix().tolist(),
        },
        "simulation": {"steps": 30 * STEPS_PER_DAY, "x0": [0.0, 0.0], "adapt": True, "baseline": True},
    }


PRESETS = {"building": preset_dict}
