"""Scalar-output MLPs on the autodiff tape, plus Adam and checkpoints.

Two networks are used throughout: a discriminator mapping points to a
scalar, and a potential mapping (point, time) to a scalar.  Both are
stored as one flat float64 parameter vector with layer-shape metadata.
The time coordinate enters the potential through a separate first-layer
weight row so that per-sample time derivatives fall out of the tape.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .tape import Tape, Node, TapeError

_ACTIVATIONS = ("softplus", "tanh", "relu")

CHECKPOINT_MAGIC = b"PGFLOWNN"


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a scalar-valued MLP.

    in_dim counts the point coordinates only; when time_input is set the
    effective first-layer fan-in is in_dim + 1.
    """

    in_dim: int
    widths: tuple
    activation: str = "softplus"
    time_input: bool = False

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not self.widths:
            raise ValueError("widths must be nonempty")
        if any(w <= 0 for w in self.widths):
            raise ValueError("zero-width layer")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def layer_dims(self):
        fan_in = self.in_dim + (1 if self.time_input else 0)
        return list(zip((fan_in,) + self.widths, self.widths + (1,)))

    @property
    def flat_len(self):
        return sum(a * b + b for a, b in self.layer_dims)


@dataclass
class MlpParams:
    spec: MlpSpec
    flat: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=np.float64)
        if self.flat.shape != (self.spec.flat_len,):
            raise ValueError(
                f"flat length {self.flat.shape} does not match spec ({self.spec.flat_len},)"
            )

    def copy(self):
        return MlpParams(self.spec, self.flat.copy(), self.seed)

    def layers(self):
        """Yield (W, b) views into the flat vector, W of shape (fan_in, fan_out)."""
        out = []
        off = 0
        for a, b in self.spec.layer_dims:
            W = self.flat[off : off + a * b].reshape(a, b)
            off += a * b
            bias = self.flat[off : off + b]
            off += b
            out.append((W, bias))
        return out


def init(spec: MlpSpec, seed: int, final_bias: float = 0.0) -> MlpParams:
    """Uniform(-1,1)/sqrt(fan_in) weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    chunks = []
    dims = spec.layer_dims
    for i, (a, b) in enumerate(dims):
        W = rng.uniform(-1.0, 1.0, size=(a, b)) / np.sqrt(a)
        bias = np.zeros(b)
        if i == len(dims) - 1:
            bias[:] = final_bias
        chunks.append(W.ravel())
        chunks.append(bias)
    return MlpParams(spec, np.concatenate(chunks), seed)


def param_leaves(tape: Tape, params: MlpParams, prefix: str = "p"):
    """Create one leaf per layer weight/bias on the tape.

    For a time-carrying potential the first-layer weight is split into a
    point block (in_dim, w) and a time row (1, w) so both stay plain
    matmul operands.
    """
    leaves = []
    for i, (W, b) in enumerate(params.layers()):
        if i == 0 and params.spec.time_input:
            d = params.spec.in_dim
            leaves.append(
                (
                    tape.leaf(f"{prefix}_W{i}x", W[:d, :]),
                    tape.leaf(f"{prefix}_W{i}t", W[d:, :]),
                    tape.leaf(f"{prefix}_b{i}", b.reshape(1, -1)),
                )
            )
        else:
            leaves.append(
                (
                    tape.leaf(f"{prefix}_W{i}", W),
                    tape.leaf(f"{prefix}_b{i}", b.reshape(1, -1)),
                )
            )
    return leaves


def apply_mlp(tape: Tape, spec: MlpSpec, leaves, X: Node, t: Node = None) -> Node:
    """Batch forward pass; X is (n, in_dim), returns (n, 1).

    t, required iff the spec carries a time input, is an (n, 1) column of
    (possibly shared) time values.
    """
    if X.shape[1] != spec.in_dim:
        raise TapeError(f"input dim {X.shape[1]} != spec in_dim {spec.in_dim}")
    if spec.time_input:
        if t is None:
            raise TapeError("spec has a time input but no t was given")
        Wx, Wt, b = leaves[0]
        z = tape.add(tape.add(tape.matmul(X, Wx), tape.matmul(t, Wt)), b)
    else:
        W, b = leaves[0]
        z = tape.add(tape.matmul(X, W), b)
    h = tape.activation(z, spec.activation)
    for layer in leaves[1:-1]:
        W, b = layer
        h = tape.activation(tape.add(tape.matmul(h, W), b), spec.activation)
    W, b = leaves[-1]
    return tape.add(tape.matmul(h, W), b)


def forward(params: MlpParams, x, t: float = None):
    """Evaluate the net on one input vector; returns a scalar node on a fresh tape."""
    tape = Tape()
    leaves = param_leaves(tape, params)
    X = tape.constant(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    tnode = None
    if params.spec.time_input:
        tnode = tape.constant(np.full((X.shape[0], 1), float(t)))
    out = apply_mlp(tape, params.spec, leaves, X, tnode)
    return tape.sum(out)


def forward_np(params: MlpParams, X, t=None):
    """Plain-numpy batch evaluation, for metrics and generation paths.

    Matches the tape forward bit-for-bit (same op order and dtypes).
    """
    from .tape import _ACTIVATIONS as _ACT

    X = np.asarray(X, dtype=np.float64)
    spec = params.spec
    layers = params.layers()
    if spec.time_input:
        d = spec.in_dim
        W0, b0 = layers[0]
        tcol = np.asarray(t, dtype=np.float64).reshape(-1, 1)
        if tcol.shape[0] == 1:
            tcol = np.full((X.shape[0], 1), tcol[0, 0])
        z = X @ W0[:d, :] + tcol @ W0[d:, :] + b0.reshape(1, -1)
    else:
        W0, b0 = layers[0]
        z = X @ W0 + b0.reshape(1, -1)
    h = _ACT[spec.activation](z)
    for W, b in layers[1:-1]:
        h = _ACT[spec.activation](h @ W + b.reshape(1, -1))
    W, b = layers[-1]
    return h @ W + b.reshape(1, -1)


def flatten_grads(params: MlpParams, grad_nodes) -> np.ndarray:
    """Reassemble per-layer gradient nodes into one flat vector."""
    chunks = []
    for group in grad_nodes:
        if len(group) == 3:
            gWx, gWt, gb = group
            chunks.append(np.concatenate([np.asarray(gWx.value).ravel(), np.asarray(gWt.value).ravel()]))
            chunks.append(np.asarray(gb.value).ravel())
        else:
            gW, gb = group
            chunks.append(np.asarray(gW.value).ravel())
            chunks.append(np.asarray(gb.value).ravel())
    flat = np.concatenate(chunks)
    if flat.shape != params.flat.shape:
        raise ValueError("gradient length does not match parameter length")
    return flat


# --- optimizer ---------------------------------------------------------


@dataclass
class OptimizerState:
    """Adaptive-moment accumulators for one flat parameter vector."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = None
    v: np.ndarray = None

    @classmethod
    def fresh(cls, n, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
                   m=np.zeros(n), v=np.zeros(n))


class GradientError(RuntimeError):
    """Non-finite gradient, with the iteration it occurred on."""

    def __init__(self, step):
        super().__init__(f"non-finite gradient at optimizer step {step}")
        self.step = step


def adam_step(params: MlpParams, grads: np.ndarray, state: OptimizerState,
              maximize: bool = False):
    """Bias-corrected adaptive-moment update; returns new (params, state)."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.flat.shape:
        raise ValueError("gradient length mismatch")
    if not np.all(np.isfinite(grads)):
        raise GradientError(state.step + 1)
    t = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grads
    v = state.beta2 * state.v + (1 - state.beta2) * grads**2
    mhat = m / (1 - state.beta1**t)
    vhat = v / (1 - state.beta2**t)
    delta = state.lr * mhat / (np.sqrt(vhat) + state.eps)
    flat = params.flat + delta if maximize else params.flat - delta
    new_state = replace(state, step=t, m=m, v=v)
    return MlpParams(params.spec, flat, params.seed), new_state


# --- checkpoints -------------------------------------------------------

_ACT_CODE = {name: i for i, name in enumerate(_ACTIVATIONS)}
_ACT_NAME = {i: name for name, i in _ACT_CODE.items()}


def save_checkpoint(path, params: MlpParams):
    """Little-endian float64 flat vector behind a shape header."""
    spec = params.spec
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        header = struct.pack(
            "<qqqq",
            spec.in_dim,
            _ACT_CODE[spec.activation],
            1 if spec.time_input else 0,
            len(spec.widths),
        )
        fh.write(header)
        fh.write(struct.pack(f"<{len(spec.widths)}q", *spec.widths))
        fh.write(struct.pack("<qq", params.seed, spec.flat_len))
        fh.write(params.flat.astype("<f8").tobytes())


def load_checkpoint(path) -> MlpParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic in {path}")
        in_dim, act, timed, nw = struct.unpack("<qqqq", fh.read(32))
        widths = struct.unpack(f"<{nw}q", fh.read(8 * nw))
        seed, flat_len = struct.unpack("<qq", fh.read(16))
        data = np.frombuffer(fh.read(8 * flat_len), dtype="<f8")
        if data.shape[0] != flat_len:
            raise ValueError(f"truncated checkpoint {path}")
    spec = MlpSpec(in_dim, tuple(widths), _ACT_NAME[act], bool(timed))
    return MlpParams(spec, data.astype(np.float64), seed)
