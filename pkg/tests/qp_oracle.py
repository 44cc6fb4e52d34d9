"""Brute-force reference solver for small box-constrained QPs."""

import itertools

import numpy as np


def random_box_qp(rng, nz):
    """Strictly convex 0.5 z'Pz + f'z over a random box that usually cuts off the unconstrained minimizer."""
    M = rng.normal(size=(nz, nz))
    P = M @ M.T + 0.5 * np.eye(nz)
    f = rng.normal(size=nz) * 3.0
    lo = -rng.uniform(0.1, 1.5, nz)
    hi = rng.uniform(0.1, 1.5, nz)
    return P, f, lo, hi


def enumerate_box_qp(P, f, lo, hi):
    """Try every (free, at lower, at upper) pattern; solve the reduced KKT system; keep the best feasible point."""
    nz = f.shape[0]
    best_z, best_obj = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=nz):
        z = np.zeros(nz)
        fixed = np.array([p != 0 for p in pattern])
        for i, p in enumerate(pattern):
            if p == 1:
                z[i] = lo[i]
            elif p == 2:
                z[i] = hi[i]
        free = ~fixed
        if free.any():
            rhs = -f[free] - P[np.ix_(free, fixed)] @ z[fixed]
            z[free] = np.linalg.solve(P[np.ix_(free, free)], rhs)
        if np.any(z < lo - 1e-12) or np.any(z > hi + 1e-12):
            continue
        obj = 0.5 * z @ P @ z + f @ z
        if obj < best_obj:
            best_z, best_obj = z, obj
    return best_z, best_obj
