import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pgflow import nn, oracles
from pgflow.tape import NonFiniteError, Tape, TapeError, gradient_of_gradient, record


def test_record_square():
    root = record(lambda n: n["x"] * n["x"], x=3.0)
    assert root.value == 9.0


def test_record_exp_zero():
    root = record(lambda n: n["x"].tape.exp(n["x"]), x=0.0)
    assert root.value == 1.0


def test_record_product_plus():
    root = record(lambda n: n["x"] * n["y"] + n["x"], x=2.0, y=5.0)
    assert root.value == 12.0


def test_record_rejects_nonfinite_leaf():
    with pytest.raises(TapeError):
        record(lambda n: n["x"], x=np.nan)


def test_nonfinite_intermediate_names_op():
    tape = Tape()
    x = tape.leaf("x", -1.0)
    with pytest.raises(NonFiniteError) as err:
        tape.log(x)
    assert err.value.op == "log"


def test_gradient_power_rule():
    tape = Tape()
    x = tape.leaf("x", 3.0)
    (g,) = tape.gradient(x * x, [x])
    assert g.value == 6.0


def test_gradient_product_rule():
    tape = Tape()
    x = tape.leaf("x", 2.0)
    y = tape.leaf("y", 5.0)
    gx, gy = tape.gradient(x * y, [x, y])
    assert gx.value == 5.0
    assert gy.value == 2.0


def test_gradient_unreachable_leaf_is_zero():
    tape = Tape()
    x = tape.leaf("x", 2.0)
    z = tape.leaf("z", 1.0)
    (gz,) = tape.gradient(x * x, [z])
    assert gz.value == 0.0


def test_gradient_requires_scalar():
    tape = Tape()
    x = tape.leaf("x", np.ones((2, 2)))
    with pytest.raises(TapeError):
        tape.gradient(x, [x])


def test_mlp_gradient_matches_finite_differences():
    spec = nn.MlpSpec(4, (12, 12))
    params = nn.init(spec, 3)
    x0 = np.random.default_rng(0).standard_normal(4)

    def f(x):
        return float(nn.forward_np(params, x[None, :]).item())

    tape = Tape()
    leaves = nn.param_leaves(tape, params)
    xl = tape.leaf("x", x0[None, :])
    out = nn.apply_mlp(tape, spec, leaves, xl)
    (g,) = tape.gradient(tape.sum(out), [xl])
    fd = oracles.finite_diff_grad(f, x0, 1e-5)
    assert np.linalg.norm(g.value.ravel() - fd) / np.linalg.norm(fd) < 1e-6


def test_second_order_cube():
    # output x^3 at x=2: outer scalar (3x^2)^2 = 144, derivative 2*12*12 = 288
    tape = Tape()
    x = tape.leaf("x", 2.0)
    y = tape.power(x, 3.0)
    (gg,) = gradient_of_gradient(
        y, [x], lambda inner: inner[0] * inner[0], [x])
    (inner,) = tape.gradient(y, [x])
    assert inner.value == 12.0
    assert gg.value == 288.0


def test_second_order_polynomial():
    # p(x) = x^2 + x at x=1: |p'|^2 = 9, d/dx = 2*3*2 = 12
    tape = Tape()
    x = tape.leaf("x", 1.0)
    p = tape.power(x, 2.0) + x
    (gg,) = gradient_of_gradient(p, [x], lambda inner: inner[0] * inner[0], [x])
    assert gg.value == 12.0


def test_second_order_mlp_penalty_vs_finite_differences():
    spec = nn.MlpSpec(3, (8, 8))
    base = nn.init(spec, 1)
    X = np.random.default_rng(2).standard_normal((4, 3))

    def loss(flat):
        q = nn.MlpParams(spec, flat)
        tape = Tape()
        leaves = nn.param_leaves(tape, q)
        xl = tape.leaf("x", X)
        out = nn.apply_mlp(tape, spec, leaves, xl)
        (G,) = tape.gradient(tape.sum(out), [xl])
        return float(tape.sum(tape.mul(G, G)).value)

    tape = Tape()
    leaves = nn.param_leaves(tape, base)
    xl = tape.leaf("x", X)
    out = nn.apply_mlp(tape, spec, leaves, xl)
    (G,) = tape.gradient(tape.sum(out), [xl])
    sq = tape.sum(tape.mul(G, G))
    flat_leaves = [leaf for group in leaves for leaf in group]
    grads = tape.gradient(sq, flat_leaves)
    grouped, i = [], 0
    for group in leaves:
        grouped.append(tuple(grads[i : i + len(group)]))
        i += len(group)
    gvec = nn.flatten_grads(base, grouped)
    fd = oracles.finite_diff_grad(loss, base.flat.copy(), 1e-5)
    assert np.linalg.norm(gvec - fd) / np.linalg.norm(fd) < 1e-5


def test_deep_nesting_matches_analytic():
    # (K+1)-fold nesting on exp: every derivative of exp is exp
    tape = Tape()
    x = tape.leaf("x", 0.7)
    node = tape.exp(x)
    for _ in range(6):
        (node,) = tape.gradient(node, [x])
    assert abs(node.value - np.exp(0.7)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3),
       x=st.floats(-2, 2), y=st.floats(-2, 2))
def test_gradient_linearity(a, b, x, y):
    tape = Tape()
    xl = tape.leaf("x", x)
    yl = tape.leaf("y", y)
    f = tape.exp(xl * 0.3) * yl
    g = xl * xl + yl
    combo = a * f + b * g
    (gc,) = tape.gradient(combo, [xl])
    (gf,) = tape.gradient(f, [xl])
    (gg,) = tape.gradient(g, [xl])
    assert np.isclose(gc.value, a * gf.value + b * gg.value,
                      rtol=1e-12, atol=1e-12)


def test_replay_determinism():
    spec = nn.MlpSpec(3, (10,))
    params = nn.init(spec, 5)
    tape = Tape()
    leaves = nn.param_leaves(tape, params)
    xl = tape.leaf("x", np.random.default_rng(1).standard_normal((6, 3)))
    out = nn.apply_mlp(tape, spec, leaves, xl)
    tape.gradient(tape.sum(out), [xl])
    assert tape.replay() == 0.0


def test_max_subgradient_zero_at_tie():
    tape = Tape()
    x = tape.leaf("x", 0.0)
    m = tape.maximum(x, 0.0)
    (g,) = tape.gradient(m, [x])
    assert g.value == 0.0


def test_nodes_reject_cross_tape_mixing():
    t1, t2 = Tape(), Tape()
    a = t1.leaf("a", 1.0)
    b = t2.leaf("b", 2.0)
    with pytest.raises(TapeError):
        t1.add(a, b)
