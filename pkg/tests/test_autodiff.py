"""Tape engine checks: every primitive against central finite differences."""

import numpy as np
import pytest

from pgdpo.autodiff import Tape, backward_sweep
from pgdpo.rng import stream

FD_STEP = 1e-6
FD_RTOL = 1e-5


def fd_gradient(f, x, step=FD_STEP):
    """Central finite-difference gradient of scalar f at flat array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = step
        gf[i] = (f((flat + e).reshape(x.shape)) - f((flat - e).reshape(x.shape))) / (
            2 * step
        )
    return g


def taped_gradient(build, x):
    """Adjoint of the single input produced by build(tape, x_var)."""
    tape = Tape()
    xv = tape.input(x)
    root = build(tape, xv)
    adj = backward_sweep(tape, root)
    return np.asarray(adj[xv.index])


UNARY_CASES = [
    ("exp", lambda tp, v: tp.mean(tp.exp(v)), lambda rng, n: rng.normal(0, 1, n)),
    ("log", lambda tp, v: tp.mean(tp.log(v)), lambda rng, n: rng.uniform(0.2, 3, n)),
    (
        "power",
        lambda tp, v: tp.mean(tp.power(v, -1.7)),
        lambda rng, n: rng.uniform(0.5, 2, n),
    ),
    (
        "leaky_relu",
        lambda tp, v: tp.mean(tp.leaky_relu(v)),
        lambda rng, n: rng.normal(0, 1, n) + 0.05,
    ),
    ("softplus", lambda tp, v: tp.mean(tp.softplus(v)), lambda rng, n: rng.normal(0, 3, n)),
    ("sigmoid", lambda tp, v: tp.mean(tp.sigmoid(v)), lambda rng, n: rng.normal(0, 3, n)),
]


@pytest.mark.parametrize("name,build,sample", UNARY_CASES, ids=[c[0] for c in UNARY_CASES])
def test_unary_primitives_match_fd(name, build, sample):
    rng = stream(11, "test", hash(name) % 1000)
    for trial in range(100):
        x = sample(rng, 6)

        def f(xx, build=build):
            tp = Tape()
            return float(build(tp, tp.input(xx)).value)

        got = taped_gradient(build, x)
        want = fd_gradient(f, x)
        scale = np.abs(want).max() + 1e-12
        assert np.abs(got - want).max() <= FD_RTOL * scale, f"{name} trial {trial}"


def test_binary_and_matrix_primitives_match_fd():
    rng = stream(12, "test")
    for _ in range(100):
        a = rng.uniform(0.3, 2.0, (4, 3))
        b = rng.uniform(0.3, 2.0, (3, 5))
        w = rng.normal(0, 1, 5)
        vec = rng.uniform(0.5, 2.0, 3)
        rows = rng.uniform(0.5, 1.5, 4)

        def build(tp, x):
            y = tp.matmul(x, b)  # (4,5)
            z = tp.add_bias(y, w)
            s = tp.rowsum(tp.mul(z, z))  # (4,)
            q = tp.matvec(x, vec)  # (4,)
            rd = tp.row_dot(x, tp.scale_rows(x, rows))  # (4,)
            d = tp.dot(tp.rowsum(x), rows + 0.5)  # scalar through rowsum
            return tp.add(tp.mean(tp.add(tp.add(s, q), rd)), d)

        def f(av):
            tp = Tape()
            return float(build(tp, tp.input(av)).value)

        got = taped_gradient(build, a)
        want = fd_gradient(f, a)
        scale = np.abs(want).max() + 1e-12
        assert np.abs(got - want).max() <= FD_RTOL * scale


def test_softmax_rows_matches_fd():
    rng = stream(13, "test")
    for _ in range(100):
        z = rng.normal(0, 2, (3, 4))
        w = rng.normal(0, 1, (3, 4))

        def build(tp, v):
            return tp.mean(tp.rowsum(tp.mul(tp.softmax_rows(v), w)))

        def f(zz):
            tp = Tape()
            return float(build(tp, tp.input(zz)).value)

        got = taped_gradient(build, z)
        want = fd_gradient(f, z)
        scale = np.abs(want).max() + 1e-12
        assert np.abs(got - want).max() <= FD_RTOL * scale


def test_product_rule_example():
    tape = Tape()
    x = tape.input(3.0)
    y = tape.input(4.0)
    adj = backward_sweep(tape, tape.mul(x, y))
    assert adj[x.index] == 4.0
    assert adj[y.index] == 3.0


def test_exp_at_zero():
    tape = Tape()
    x = tape.input(0.0)
    adj = backward_sweep(tape, tape.exp(x))
    assert adj[x.index] == 1.0


def test_root_adjoint_is_one_and_all_finite():
    tape = Tape()
    x = tape.input(np.array([1.0, 2.0]))
    y = tape.softplus(tape.mul(x, x))
    root = tape.mean(y)
    adj = backward_sweep(tape, root)
    assert adj[root.index] == 1.0
    assert all(np.all(np.isfinite(a)) for a in adj if a is not None)


def test_backward_sweep_rejects_vector_root():
    tape = Tape()
    x = tape.input(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        backward_sweep(tape, x)


def test_backward_sweep_deterministic():
    def run():
        tape = Tape()
        x = tape.input(np.linspace(0.5, 2.0, 32))
        y = tape.exp(tape.mul(tape.log(x), 0.7))
        z = tape.softmax_rows(tape.stack_cols([y, x, tape.sigmoid(x)]))
        root = tape.mean(tape.rowsum(z))
        adj = backward_sweep(tape, root)
        return np.asarray(adj[x.index])

    a, b = run(), run()
    assert a.tobytes() == b.tobytes()


def test_fanout_accumulates():
    # y = x*x + x used twice; dy/dx = 2x + 1
    tape = Tape()
    x = tape.input(1.5)
    root = tape.add(tape.mul(x, x), x)
    adj = backward_sweep(tape, root)
    assert np.isclose(adj[x.index], 2 * 1.5 + 1)


def test_slice_and_stack_roundtrip_gradients():
    rng = stream(14, "test")
    a = rng.normal(0, 1, (5, 4))

    def build(tp, v):
        c0 = tp.col(v, 0)
        rest = tp.slice_cols(v, 1, 4)
        return tp.add(tp.mean(tp.mul(c0, c0)), tp.mean(tp.rowsum(rest)))

    def f(av):
        tp = Tape()
        return float(build(tp, tp.input(av)).value)

    got = taped_gradient(build, a)
    want = fd_gradient(f, a)
    assert np.abs(got - want).max() <= FD_RTOL * (np.abs(want).max() + 1e-12)
