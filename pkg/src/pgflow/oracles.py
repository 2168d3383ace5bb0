"""Ground-truth references used to validate the estimators.

Everything here is deliberately independent of the tape/training code:
closed forms for diagonal Gaussians, an exact assignment-based empirical
Wasserstein-1, a brute-force convex conjugate, central finite
differences, and the analytic two-Dirac value of the Lipschitz-regularized
f-divergence.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist


def gaussian_w2_squared(m1, C1, m2, C2) -> float:
    """Squared W2 between diagonal-covariance Gaussians (commuting case)."""
    m1, m2 = np.asarray(m1, dtype=np.float64), np.asarray(m2, dtype=np.float64)
    C1, C2 = np.asarray(C1, dtype=np.float64), np.asarray(C2, dtype=np.float64)
    if np.any(C1 <= 0) or np.any(C2 <= 0):
        raise ValueError("variances must be positive")
    return float(np.sum((m1 - m2) ** 2) + np.sum((np.sqrt(C1) - np.sqrt(C2)) ** 2))


def gaussian_kl(m1, C1, m2, C2) -> float:
    """KL(N(m1, diag C1) || N(m2, diag C2))."""
    m1, m2 = np.asarray(m1, dtype=np.float64), np.asarray(m2, dtype=np.float64)
    C1, C2 = np.asarray(C1, dtype=np.float64), np.asarray(C2, dtype=np.float64)
    if np.any(C1 <= 0) or np.any(C2 <= 0):
        raise ValueError("variances must be positive")
    d = m1.size
    return float(0.5 * (np.sum(C1 / C2) + np.sum((m2 - m1) ** 2 / C2) - d
                        + np.sum(np.log(C2)) - np.sum(np.log(C1))))


def empirical_w1_exact(A, B) -> float:
    """Exact empirical W1 between equal-size point sets (n <= 256).

    Mean Euclidean cost of the minimum-cost perfect matching.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape != B.shape:
        raise ValueError(f"point sets must match in shape, got {A.shape} vs {B.shape}")
    n = A.shape[0]
    if n > 256:
        raise ValueError("empirical_w1_exact is capped at n=256")
    cost = cdist(A, B)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def _golden_min(fn, lo, hi, iters=200):
    """Golden-section minimization of a unimodal fn on [lo, hi]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    x = (a + b) / 2.0
    return x, fn(x)


def fgamma_two_dirac(f: str, L: float, dist: float) -> float:
    """Lipschitz-regularized f-divergence between two Diracs at distance dist.

    reverse_kl: min over a in (0,1] of (-log a + L a dist); kl: L * dist.
    """
    if dist < 0:
        raise ValueError("dist must be nonnegative")
    if f == "kl":
        return L * dist
    if f != "reverse_kl":
        raise ValueError(f"unknown f kind {f!r}")
    if dist == 0.0:
        return 0.0
    _, val = _golden_min(lambda a: -np.log(a) + L * a * dist, 1e-12, 1.0)
    return float(min(val, L * dist))  # endpoint a=1 gives L*dist


def finite_diff_grad(fn, x, eps: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function, per coordinate."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = out.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        xp = xf.copy()
        xm = xf.copy()
        xp[i] += eps
        xm[i] -= eps
        flat[i] = (fn(xp.reshape(x.shape)) - fn(xm.reshape(x.shape))) / (2 * eps)
    return out


def conjugate_check(f: str, y: float, lo: float = 1e-6, hi: float = 1e6,
                    num: int = 100_000) -> float:
    """Brute-force conjugate sup_x {x y - f(x)} over a log-spaced grid.

    Returns +inf when the sup keeps growing at the grid's upper edge,
    which is how out-of-domain arguments show up.
    """
    x = np.logspace(np.log10(lo), np.log10(hi), num)
    if f == "reverse_kl":
        vals = x * y + np.log(x)
    elif f == "kl":
        vals = x * y - x * np.log(x)
    else:
        raise ValueError(f"unknown f kind {f!r}")
    k = int(np.argmax(vals))
    if k == num - 1:
        return np.inf
    return float(vals[k])
