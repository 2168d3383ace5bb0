"""Lipschitz-regularized f-divergence estimation with a neural discriminator.

Supported generator-vs-target costs: reverse KL (f(x) = -log x, the
default) and forward KL (f(x) = x log x).  The dual estimate is

    mean phi(gen) - mean f*(phi(target)),

maximized over discriminators whose Lipschitz constant is pushed below L
by a one-sided gradient penalty on random interpolates.  For reverse KL
the conjugate f*(y) = -1 - log(-y) only exists for y < 0, so the raw
network output is passed through -softplus(.) - eps; the penalty is
applied to this composed function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .tape import Tape

F_KINDS = ("reverse_kl", "kl")


class DomainError(ValueError):
    """Discriminator value outside the domain of the convex conjugate."""


@dataclass
class DivergenceConfig:
    f: str = "reverse_kl"
    L: float = 1.0
    penalty_weight: float = 10.0
    inner_iters: int = 5
    eps_dom: float = 1e-3
    lr: float = 1e-4

    def __post_init__(self):
        if self.f not in F_KINDS:
            raise ValueError(f"unknown f kind {self.f!r}")
        if self.L <= 0 or self.eps_dom <= 0:
            raise ValueError("L and eps_dom must be positive")


def f_star(f: str, y, eps_dom: float = 1e-3):
    """Convex conjugate of f, with a +inf sentinel outside the domain."""
    y = np.asarray(y, dtype=np.float64)
    if f == "reverse_kl":
        out = np.full(y.shape, np.inf)
        ok = y <= -eps_dom
        out[ok] = -1.0 - np.log(-y[ok])
        return out if out.ndim else float(out)
    if f == "kl":
        out = np.exp(y - 1.0)
        return out if out.ndim else float(out)
    raise ValueError(f"unknown f kind {f!r}")


def f_star_prime(f: str, y):
    """(f*)'(y); the likelihood-ratio map of the dual problem."""
    y = np.asarray(y, dtype=np.float64)
    if f == "reverse_kl":
        if np.any(y >= 0):
            raise DomainError("(f*)' of reverse_kl needs a negative argument")
        out = -1.0 / y
    elif f == "kl":
        out = np.exp(y - 1.0)
    else:
        raise ValueError(f"unknown f kind {f!r}")
    return out if out.ndim else float(out)


def f_star_node(tape: Tape, y, f: str):
    """Tape version of f_star; y is an (n,1) node of in-domain values."""
    if f == "reverse_kl":
        return tape.add(tape.constant(-1.0), tape.neg(tape.log(tape.neg(y))))
    if f == "kl":
        return tape.exp(tape.add(y, tape.constant(-1.0)))
    raise ValueError(f"unknown f kind {f!r}")


def discriminator_output(tape: Tape, spec, leaves, X, f: str, eps_dom: float):
    """Composed discriminator on the tape; output is guaranteed in-domain.

    For reverse_kl the network output u becomes -softplus(u) - eps_dom,
    which stays strictly below -eps_dom so the conjugate is finite; for
    kl the raw output passes through.
    """
    raw = nn.apply_mlp(tape, spec, leaves, X)
    if f == "reverse_kl":
        return tape.add(tape.neg(tape.softplus(raw)), tape.constant(-eps_dom))
    return raw


def discriminator_values(params: nn.MlpParams, X, f: str, eps_dom: float):
    """Numpy evaluation of the composed discriminator."""
    raw = nn.forward_np(params, X)
    if f == "reverse_kl":
        return -np.logaddexp(0.0, raw) - eps_dom
    return raw


def dual_estimate(params: nn.MlpParams, gen_samples, target_samples,
                  f: str = "reverse_kl", eps_dom: float = 1e-3) -> float:
    """Plug-in estimate of E_gen[phi] - E_target[f*(phi)]."""
    gen_samples = np.atleast_2d(gen_samples)
    target_samples = np.atleast_2d(target_samples)
    if gen_samples.shape[0] < 1 or target_samples.shape[0] < 1:
        raise ValueError("both sample sets must be nonempty")
    phi_gen = discriminator_values(params, gen_samples, f, eps_dom)
    phi_tgt = discriminator_values(params, target_samples, f, eps_dom)
    fs = f_star(f, phi_tgt, eps_dom)
    if not np.all(np.isfinite(fs)):
        bad = int(np.argmax(~np.isfinite(fs.ravel())))
        raise DomainError(f"f* diverges on target sample {bad}")
    return float(np.mean(phi_gen) - np.mean(fs))


def _dual_estimate_node(tape, spec, leaves, gen_X, tgt_X, f, eps_dom):
    phi_gen = discriminator_output(tape, spec, leaves, gen_X, f, eps_dom)
    phi_tgt = discriminator_output(tape, spec, leaves, tgt_X, f, eps_dom)
    m = gen_X.shape[0]
    n = tgt_X.shape[0]
    mean_gen = tape.mul(tape.sum(phi_gen), tape.constant(1.0 / m))
    mean_fst = tape.mul(tape.sum(f_star_node(tape, phi_tgt, f)), tape.constant(1.0 / n))
    return tape.add(mean_gen, tape.neg(mean_fst))


def _penalty_node(tape, spec, leaves, gen, target, L, rng, f, eps_dom):
    """One-sided Lipschitz penalty at uniform interpolates; returns (node, Z leaf)."""
    n = min(len(gen), len(target))
    c = rng.uniform(0.0, 1.0, size=(n, 1))
    Z = c * gen[:n] + (1.0 - c) * target[:n]
    Zleaf = tape.leaf(f"gp_z{len(tape.nodes)}", Z)
    phi = discriminator_output(tape, spec, leaves, Zleaf, f, eps_dom)
    (G,) = tape.gradient(tape.sum(phi), [Zleaf])
    sq = tape.sum(tape.mul(G, G), axis=1)
    hinge = tape.maximum(tape.add(sq, tape.constant(-L * L)), tape.constant(np.zeros((n, 1))))
    return tape.neg(tape.sum(hinge)), Zleaf


def gradient_penalty(params: nn.MlpParams, gen_samples, target_samples,
                     L: float, seed: int, f: str = "reverse_kl",
                     eps_dom: float = 1e-3) -> float:
    """Standalone evaluation of the penalty term (always <= 0)."""
    tape = Tape()
    leaves = nn.param_leaves(tape, params)
    rng = np.random.default_rng(seed)
    pen, _ = _penalty_node(tape, params.spec, leaves,
                           np.atleast_2d(gen_samples), np.atleast_2d(target_samples),
                           L, rng, f, eps_dom)
    return float(pen.value)


def train_discriminator(gen_samples, target_samples, cfg: DivergenceConfig,
                        init_or_warm: nn.MlpParams, seed: int,
                        opt_state: nn.OptimizerState = None,
                        return_state: bool = False):
    """Ascent steps on the dual estimate plus the weighted penalty.

    Warm-starting from the previous outer iteration's parameters is the
    intended use; a fresh optimizer state is created unless one is passed.
    """
    gen = np.atleast_2d(np.asarray(gen_samples, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target_samples, dtype=np.float64))
    if len(gen) < 1 or len(target) < 1:
        raise ValueError("both sample sets must be nonempty")
    params = init_or_warm.copy()
    rng = np.random.default_rng(seed)
    state = opt_state or nn.OptimizerState.fresh(params.spec.flat_len, lr=cfg.lr)
    for it in range(cfg.inner_iters):
        tape = Tape()
        leaves = nn.param_leaves(tape, params)
        gen_X = tape.constant(gen)
        tgt_X = tape.constant(target)
        obj = _dual_estimate_node(tape, params.spec, leaves, gen_X, tgt_X,
                                  cfg.f, cfg.eps_dom)
        if cfg.penalty_weight != 0.0:
            pen, _ = _penalty_node(tape, params.spec, leaves, gen, target,
                                   cfg.L, rng, cfg.f, cfg.eps_dom)
            obj = tape.add(obj, tape.mul(tape.constant(cfg.penalty_weight), pen))
        if not np.isfinite(obj.value):
            raise FloatingPointError(f"non-finite discriminator objective at inner step {it}")
        flat_leaves = [leaf for group in leaves for leaf in group]
        grads = tape.gradient(obj, flat_leaves)
        grouped, i = [], 0
        for group in leaves:
            grouped.append(tuple(grads[i : i + len(group)]))
            i += len(group)
        gvec = nn.flatten_grads(params, grouped)
        params, state = nn.adam_step(params, gvec, state, maximize=True)
    if return_state:
        return params, state
    return params


def sigma_likelihood_ratio(phi_star: nn.MlpParams, x, c: float,
                           f: str = "reverse_kl", eps_dom: float = 1e-3):
    """(f*)'(phi*(x) - c): likelihood ratio of the implicit proximal measure."""
    vals = discriminator_values(phi_star, np.atleast_2d(x), f, eps_dom) - c
    return f_star_prime(f, vals)
