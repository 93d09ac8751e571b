"""Four-parameter logistic mapping from objective scores onto the MOS scale.

    f(x) = (b1 - b2) / (1 + exp(-(x - b3) / |b4|)) + b2

Fitting is least squares by damped Gauss-Newton (Levenberg-Marquardt
style).  |b4| keeps the curve monotone regardless of the sign the
optimizer wanders into, so mapped values preserve the order of the
predictions whenever b1 > b2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

MAX_ITERATIONS = 200


@dataclass(frozen=True)
class LogisticParams:
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    converged: bool = True

    def as_array(self) -> np.ndarray:
        return np.array([self.beta1, self.beta2, self.beta3, self.beta4], dtype=np.float64)


def logistic(params, x) -> np.ndarray:
    """Evaluate the four-parameter logistic at x.

    ``params`` is a LogisticParams or any length >= 4 array-like.
    """
    if isinstance(params, LogisticParams):
        params = params.as_array()
    b1, b2, b3, b4 = np.asarray(params, dtype=np.float64)[:4]
    x = np.asarray(x, dtype=np.float64)
    u = (x - b3) / abs(b4)
    s = expit(u)
    return (b1 - b2) * s + b2


def _jacobian(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    b1, b2, b3, b4 = beta
    u = (x - b3) / abs(b4)
    s = expit(u)
    ds = s * (1.0 - s)
    J = np.empty((len(x), 4), dtype=np.float64)
    J[:, 0] = s
    J[:, 1] = 1.0 - s
    J[:, 2] = -(b1 - b2) * ds / abs(b4)
    J[:, 3] = -(b1 - b2) * ds * u * np.sign(b4) / abs(b4)
    return J


def logistic_fit(pred, mos, max_iter: int = MAX_ITERATIONS) -> tuple[LogisticParams, np.ndarray]:
    """Fit the logistic to (pred, mos) and return (params, mapped_pred).

    Initialization: b1 = max(mos), b2 = min(mos), b3 = median(pred),
    b4 = std(pred).  Non-convergence within ``max_iter`` damped
    Gauss-Newton iterations falls back to the best iterate seen, flagged
    via ``converged=False``.
    """
    pred = np.asarray(pred, dtype=np.float64)
    mos = np.asarray(mos, dtype=np.float64)
    if pred.shape != mos.shape or pred.ndim != 1:
        raise ValueError("pred and mos must be 1-D arrays of equal length")
    if len(pred) < 4:
        raise ValueError("logistic fit needs at least 4 points")
    if np.ptp(pred) == 0:
        raise ValueError("logistic fit is undefined for constant predictions")

    beta = np.array([mos.max(), mos.min(), float(np.median(pred)),
                     float(np.std(pred))], dtype=np.float64)
    if beta[3] == 0.0:  # unreachable given the ptp check, kept for safety
        beta[3] = 1.0

    def sse(b):
        r = logistic(b, pred) - mos
        return float(r @ r)

    best_beta = beta.copy()
    best_sse = sse(beta)
    mu = 1e-3
    converged = False
    for _ in range(max_iter):
        r = logistic(beta, pred) - mos
        J = _jacobian(beta, pred)
        g = J.T @ r
        if np.linalg.norm(g, ord=np.inf) < 1e-12:
            converged = True
            break
        H = J.T @ J
        try:
            step = np.linalg.solve(H + mu * np.eye(4), -g)
        except np.linalg.LinAlgError:
            mu *= 10.0
            continue
        candidate = beta + step
        if abs(candidate[3]) < 1e-12:
            candidate[3] = 1e-12
        current = sse(beta)
        improved = sse(candidate)
        if improved < current:
            beta = candidate
            mu = max(mu / 3.0, 1e-12)
            if improved < best_sse:
                best_sse = improved
                best_beta = beta.copy()
            if np.linalg.norm(step) < 1e-12 * (1.0 + np.linalg.norm(beta)):
                converged = True
                break
            # progress has flattened out: accept the minimum we are in
            if current - improved <= 1e-12 * max(current, 1e-300):
                converged = True
                break
        else:
            mu *= 2.0
            if mu > 1e12:
                break

    if sse(beta) <= best_sse:
        best_beta = beta
    params = LogisticParams(beta1=float(best_beta[0]), beta2=float(best_beta[1]),
                            beta3=float(best_beta[2]), beta4=float(best_beta[3]),
                            converged=converged)
    return params, logistic(best_beta, pred)
