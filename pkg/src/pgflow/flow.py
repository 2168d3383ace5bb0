"""Trajectory simulation and adversarial training of the generative flow.

Particles follow the Euler recurrence

    Y_{k+1} = Y_k - (h / lam) * grad_x U(Y_k, k h),

with the velocity given by the gradient of a learned potential.  The
generator objective is the discriminator's dual estimate at the endpoints
plus (in the kinetic modes) the Riemann-sum kinetic energy; its parameter
gradient flows through every unrolled step, which is why the tape's
backward pass has to be differentiable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import divergence, nn
from .datasets import sample_reference
from .tape import Tape, NonFiniteError

MODES = ("unregularized", "w2_only", "w1_only", "w1w2")

# modes whose generator objective includes the kinetic term
KINETIC_MODES = ("w2_only", "w1w2")
# modes whose discriminator is Lipschitz-constrained
CONSTRAINED_MODES = ("w1_only", "w1w2")


@dataclass
class FlowConfig:
    d: int = 2
    mode: str = "w1w2"
    lam: float = 0.05
    T: float = 5.0
    K: int = 5
    M: int = 64
    n_target_batch: int = 0  # 0 means M
    n_outer: int = 500
    lr: float = 1e-4
    widths_potential: tuple = (512, 512, 512)
    widths_discriminator: tuple = (256, 256, 256)
    activation: str = "softplus"
    seed: int = 0
    blowup_threshold: float = 1e3
    compute_indicators: bool = True
    lr_decay: float = 1.0       # multiplies both step sizes every lr_decay_every iters
    lr_decay_every: int = 0     # 0 disables the schedule

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.K < 1 or self.T <= 0:
            raise ValueError("K >= 1 and T > 0 required")
        if self.mode in KINETIC_MODES and self.lam <= 0:
            raise ValueError(f"mode {self.mode} requires lam > 0")

    @property
    def h(self):
        return self.T / self.K

    def potential_spec(self):
        return nn.MlpSpec(self.d, tuple(self.widths_potential), self.activation,
                          time_input=True)

    def discriminator_spec(self):
        return nn.MlpSpec(self.d, tuple(self.widths_discriminator), self.activation)


@dataclass
class MetricsRecord:
    iter: int
    dual_estimate: float
    kinetic_energy: float
    hj_residual: float
    terminal_error: float
    wallclock_s: float

    FIELDS = ("iter", "dual_estimate", "kinetic_energy", "hj_residual",
              "terminal_error", "wallclock_s")

    def as_line(self):
        return (f"{self.iter} {self.dual_estimate:.10g} {self.kinetic_energy:.10g} "
                f"{self.hj_residual:.10g} {self.terminal_error:.10g} "
                f"{self.wallclock_s:.6g}")


@dataclass
class TrajectoryBatch:
    """M particle paths of K+1 points, with their graph still attached."""

    points: np.ndarray        # (M, K+1, d)
    grads: np.ndarray         # (M, K, d) potential gradients along the path
    h: float
    lam: float
    tape: Tape = None
    y_nodes: list = field(default_factory=list)
    g_nodes: list = field(default_factory=list)
    u_leaves: list = None


def potential_apply(tape, spec, leaves, Y, t_col, T):
    """U on the tape with the raw time column scaled by 1/T before entry."""
    tn = tape.mul(t_col, tape.constant(1.0 / T))
    return nn.apply_mlp(tape, spec, leaves, Y, t=tn)


def velocity(U: nn.MlpParams, x, t: float, lam: float, T: float = 1.0) -> np.ndarray:
    """-grad_x U(x, t) / lam for a batch (or single vector) of points.

    T must match the terminal time the potential was trained with, since
    the time coordinate is normalized by it on entry.
    """
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    tape = Tape()
    leaves = nn.param_leaves(tape, U)
    Xleaf = tape.leaf("x", X)
    tcol = tape.constant(np.full((X.shape[0], 1), float(t)))
    out = potential_apply(tape, U.spec, leaves, Xleaf, tcol, T)
    (G,) = tape.gradient(tape.sum(out), [Xleaf])
    V = -np.asarray(G.value) / lam
    return V[0] if np.asarray(x).ndim == 1 else V


def simulate(U: nn.MlpParams, initial, cfg: FlowConfig) -> TrajectoryBatch:
    """Forward Euler through the potential's gradient field, on one tape."""
    Y0 = np.atleast_2d(np.asarray(initial, dtype=np.float64))
    M = Y0.shape[0]
    h, lam = cfg.h, cfg.lam
    tape = Tape()
    leaves = nn.param_leaves(tape, U, prefix="U")
    y = tape.constant(Y0)
    y_nodes, g_nodes = [y], []
    step_scale = tape.constant(-h / lam)
    for k in range(cfg.K):
        t_col = tape.constant(np.full((M, 1), k * h))
        u = potential_apply(tape, U.spec, leaves, y, t_col, cfg.T)
        (g,) = tape.gradient(tape.sum(u), [y])
        y = tape.add(y, tape.mul(step_scale, g))
        if not np.all(np.isfinite(y.value)):
            raise FloatingPointError(f"non-finite trajectory position at step {k}")
        y_nodes.append(y)
        g_nodes.append(g)
    points = np.stack([n.value for n in y_nodes], axis=1)
    grads = np.stack([n.value for n in g_nodes], axis=1)
    return TrajectoryBatch(points, grads, h, lam, tape, y_nodes, g_nodes, leaves)


def kinetic_energy(traj: TrajectoryBatch, lam: float) -> float:
    """Riemann-sum estimate of lam * integral of |v|^2 / 2 along the flow."""
    M = traj.points.shape[0]
    return float(traj.h / (2.0 * lam * M) * np.sum(traj.grads**2))


def _kinetic_node(traj: TrajectoryBatch, lam: float):
    tape = traj.tape
    M = traj.points.shape[0]
    total = None
    for g in traj.g_nodes:
        sq = tape.dot(g, g)
        total = sq if total is None else tape.add(total, sq)
    return tape.mul(tape.constant(traj.h / (2.0 * lam * M)), total)


def generator_objective(U: nn.MlpParams, phi_star: nn.MlpParams,
                        traj: TrajectoryBatch, target_samples,
                        cfg: FlowConfig, div_cfg: divergence.DivergenceConfig):
    """Objective node on the trajectory tape, plus its scalar pieces.

    phi_star enters as constants, so its parameters receive no gradient;
    the theta_U gradient flows through all K unrolled steps.
    Returns (objective node, dual estimate float, kinetic energy float).
    """
    tape = traj.tape
    target = np.atleast_2d(np.asarray(target_samples, dtype=np.float64))
    phi_leaves = []
    for i, (W, b) in enumerate(phi_star.layers()):
        phi_leaves.append((tape.constant(W), tape.constant(b.reshape(1, -1))))
    dual = divergence._dual_estimate_node(
        tape, phi_star.spec, phi_leaves, traj.y_nodes[-1], tape.constant(target),
        div_cfg.f, div_cfg.eps_dom)
    dual_val = float(dual.value)
    ke_val = kinetic_energy(traj, cfg.lam)
    if cfg.mode in KINETIC_MODES:
        obj = tape.add(dual, _kinetic_node(traj, cfg.lam))
    else:
        obj = dual
    return obj, dual_val, ke_val


@dataclass
class TrainResult:
    potential: nn.MlpParams
    discriminator: nn.MlpParams
    history: list
    blown_up: bool = False
    stop_iteration: int = -1


def effective_div_config(cfg: FlowConfig, div_cfg: divergence.DivergenceConfig):
    """Unconstrained-discriminator modes drop the Lipschitz penalty."""
    if cfg.mode in CONSTRAINED_MODES:
        return div_cfg
    return replace(div_cfg, penalty_weight=0.0)


def train(target_sampler, cfg: FlowConfig, div_cfg: divergence.DivergenceConfig,
          callback=None) -> TrainResult:
    """Alternating minimax loop over the potential and the discriminator.

    target_sampler(n, seed) must return an (n, d) array.  Stops early
    when |dual estimate| exceeds the blow-up threshold, which is the
    expected outcome for the unconstrained modes on manifold targets.
    """
    from . import indicators

    div_eff = effective_div_config(cfg, div_cfg)
    master = np.random.default_rng(cfg.seed)
    seeds = master.integers(0, 2**62, size=4 * cfg.n_outer + 4)

    final_bias = np.log(np.e - 1.0) if div_eff.f == "reverse_kl" else 0.0
    U = nn.init(cfg.potential_spec(), int(seeds[0]))
    phi = nn.init(cfg.discriminator_spec(), int(seeds[1]), final_bias=final_bias)
    u_state = nn.OptimizerState.fresh(U.spec.flat_len, lr=cfg.lr)
    phi_state = nn.OptimizerState.fresh(phi.spec.flat_len, lr=div_eff.lr)

    n_tgt = cfg.n_target_batch or cfg.M
    history = []
    blown_up = False
    stop_iter = -1
    t0 = time.perf_counter()
    for l in range(cfg.n_outer):
        if cfg.lr_decay_every and l and l % cfg.lr_decay_every == 0:
            u_state = replace(u_state, lr=u_state.lr * cfg.lr_decay)
            phi_state = replace(phi_state, lr=phi_state.lr * cfg.lr_decay)
        y0 = sample_reference(cfg.d, cfg.M, int(seeds[4 * l + 2]))
        try:
            traj = simulate(U, y0, cfg)
        except (FloatingPointError, NonFiniteError):
            blown_up = True
            stop_iter = l
            break
        endpoints = traj.points[:, -1]
        target = np.asarray(target_sampler(n_tgt, int(seeds[4 * l + 3])), dtype=np.float64)

        try:
            phi, phi_state = divergence.train_discriminator(
                endpoints, target, div_eff, phi, int(seeds[4 * l + 4]),
                opt_state=phi_state, return_state=True)
        except (nn.GradientError, NonFiniteError):
            blown_up = True
            stop_iter = l
            break

        try:
            obj, dual_val, ke_val = generator_objective(U, phi, traj, target, cfg, div_eff)
            flat_leaves = [leaf for group in traj.u_leaves for leaf in group]
            grads = traj.tape.gradient(obj, flat_leaves)
        except NonFiniteError:
            blown_up = True
            stop_iter = l
            break
        grouped, i = [], 0
        for group in traj.u_leaves:
            grouped.append(tuple(grads[i : i + len(group)]))
            i += len(group)
        gvec = nn.flatten_grads(U, grouped)
        try:
            U, u_state = nn.adam_step(U, gvec, u_state)
        except nn.GradientError:
            blown_up = True
            stop_iter = l
        if cfg.compute_indicators and not blown_up:
            hj = indicators.hj_residual(U, traj, cfg.lam)
            terr = indicators.terminal_error(U, phi, endpoints, cfg.T,
                                             f=div_eff.f, eps_dom=div_eff.eps_dom)
        else:
            hj = terr = float("nan")
        rec = MetricsRecord(l, dual_val, ke_val, hj, terr,
                            time.perf_counter() - t0)
        history.append(rec)
        if callback is not None:
            callback(rec)
        if abs(dual_val) > cfg.blowup_threshold:
            blown_up = True
            stop_iter = l
        if blown_up:
            break
    return TrainResult(U, phi, history, blown_up, stop_iter)


def generate(U: nn.MlpParams, n: int, K_gen: int, seed: int, cfg: FlowConfig,
             initial=None, return_paths: bool = False):
    """Integrate the learned field from fresh reference draws.

    K_gen may differ from the training step count; with h' = T / K_gen
    the same terminal time is reached.  Deterministic per (seed, K_gen).
    """
    if K_gen < 1:
        raise ValueError("K_gen must be >= 1")
    Y = np.atleast_2d(initial) if initial is not None else sample_reference(cfg.d, n, seed)
    Y = np.asarray(Y, dtype=np.float64)
    h = cfg.T / K_gen
    paths = [Y]
    for k in range(K_gen):
        tape = Tape()
        leaves = nn.param_leaves(tape, U)
        yleaf = tape.leaf("y", Y)
        t_col = tape.constant(np.full((Y.shape[0], 1), k * h))
        u = potential_apply(tape, U.spec, leaves, yleaf, t_col, cfg.T)
        (g,) = tape.gradient(tape.sum(u), [yleaf])
        Y = Y - (h / cfg.lam) * np.asarray(g.value)
        paths.append(Y)
    if return_paths:
        return np.stack(paths, axis=1)
    return Y
