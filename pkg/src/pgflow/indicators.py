"""A-posteriori optimality indicators along simulated trajectories.

A trained flow should satisfy a backward Hamilton-Jacobi equation whose
terminal slope matches the discriminator's; the two residuals below
monitor that.  They never feed back into the loss.
"""

from __future__ import annotations

import numpy as np

from . import divergence, nn
from .flow import TrajectoryBatch, potential_apply
from .tape import Tape


def hj_residual(U: nn.MlpParams, traj: TrajectoryBatch, lam: float,
                literal_sign: bool = False) -> float:
    """(h/M) sum over path points of |-dU/dt + |grad U|^2 / (2 lam)|.

    literal_sign flips the time-derivative term to +dU/dt for comparison;
    the default follows the optimality equation -dU/dt + |grad U|^2/(2 lam) = 0.
    """
    M, Kp1, d = traj.points.shape
    K = Kp1 - 1
    # all K*M evaluation points in one batch
    pts = traj.points[:, :K, :].transpose(1, 0, 2).reshape(M * K, d)
    ts = np.repeat(np.arange(K) * traj.h, M).reshape(-1, 1)
    tape = Tape()
    leaves = nn.param_leaves(tape, U)
    yleaf = tape.leaf("y", pts)
    tleaf = tape.leaf("t", ts)
    # trajectory time horizon: potential was trained with time normalized
    # by T = K * h
    u = potential_apply(tape, U.spec, leaves, yleaf, tleaf, K * traj.h)
    gy, gt = tape.gradient(tape.sum(u), [yleaf, tleaf])
    grad_sq = np.sum(np.asarray(gy.value) ** 2, axis=1)
    dt = np.asarray(gt.value).ravel()
    sign = 1.0 if literal_sign else -1.0
    per_point = np.abs(sign * dt + grad_sq / (2.0 * lam))
    return float(traj.h / M * np.sum(per_point))


def terminal_error(U: nn.MlpParams, phi_star: nn.MlpParams, endpoints,
                   T: float, f: str = "reverse_kl", eps_dom: float = 1e-3) -> float:
    """Mean |grad U(Y_K, T) - grad phi*(Y_K)| over the endpoint batch.

    Gradients are compared rather than values because the terminal
    condition only pins the potential down up to an additive constant.
    """
    Y = np.atleast_2d(np.asarray(endpoints, dtype=np.float64))
    M = Y.shape[0]
    tape = Tape()
    uleaves = nn.param_leaves(tape, U, prefix="U")
    yleaf = tape.leaf("yU", Y)
    tcol = tape.constant(np.full((M, 1), T))
    u = potential_apply(tape, U.spec, uleaves, yleaf, tcol, T)
    (gU,) = tape.gradient(tape.sum(u), [yleaf])

    pleaves = nn.param_leaves(tape, phi_star, prefix="phi")
    yleaf2 = tape.leaf("yphi", Y)
    phi = divergence.discriminator_output(tape, phi_star.spec, pleaves, yleaf2,
                                          f, eps_dom)
    (gP,) = tape.gradient(tape.sum(phi), [yleaf2])
    diff = np.asarray(gU.value) - np.asarray(gP.value)
    return float(np.mean(np.linalg.norm(diff, axis=1)))


def should_stop(history, residual_threshold: float, terminal_threshold: float,
                window: int = 50) -> bool:
    """True once both indicators sit below their thresholds over a full
    trailing window of outer iterations."""
    if not history:
        raise ValueError("history must be nonempty")
    if len(history) < window:
        return False
    tail = history[-window:]
    return all(r.hj_residual <= residual_threshold
               and r.terminal_error <= terminal_threshold for r in tail)
