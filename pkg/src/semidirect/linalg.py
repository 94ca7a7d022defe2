"""Dense normal-equation helpers shared by the optimizers."""

from __future__ import annotations

import numpy as np


def schur_marginalize(H, b, keep, drop, damping: float = 0.0):
    """Eliminate the `drop` variables of a Gaussian system by Schur complement.

    For the quadratic 0.5 x^T H x + b^T x, returns (H', b') over the `keep`
    variables such that minimizing the reduced quadratic gives the same keep
    values as minimizing the full one.  `damping` regularizes H_dd against
    rank deficiency.
    """
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    keep = np.asarray(keep, dtype=int)
    drop = np.asarray(drop, dtype=int)
    H_kk = H[np.ix_(keep, keep)]
    H_kd = H[np.ix_(keep, drop)]
    H_dd = H[np.ix_(drop, drop)]
    if damping > 0.0:
        H_dd = H_dd + damping * np.eye(len(drop))
    sol = np.linalg.solve(H_dd, np.concatenate([H_kd.T, b[drop][:, None]], axis=1))
    H_out = H_kk - H_kd @ sol[:, :-1]
    b_out = b[keep] - H_kd @ sol[:, -1]
    return 0.5 * (H_out + H_out.T), b_out


def solve_damped(H, g, lam: float) -> np.ndarray:
    """Levenberg step -(H + lam * diag(H))^-1 g with an absolute floor."""
    H = np.asarray(H, dtype=float)
    d = np.diag(H).copy()
    d[d < 1e-12] = 1e-12
    H_damped = H + lam * np.diag(d)
    try:
        return -np.linalg.solve(H_damped, g)
    except np.linalg.LinAlgError:
        return -np.linalg.lstsq(H_damped, g, rcond=None)[0]
