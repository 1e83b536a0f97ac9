"""Autodiff kernel checked against central finite differences."""

import numpy as np
import pytest

from peepvec.rng import SplitMix64
from peepvec.tensor import Adam, Tensor, _unbroadcast


def fd_grads(fn, params, eps=1e-6):
    """Central-difference gradient of the scalar fn() w.r.t. each param."""
    out = []
    for p in params:
        g = np.zeros_like(p.data)
        flat, gf = p.data.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(fn().data)
            flat[i] = orig - eps
            lo = float(fn().data)
            flat[i] = orig
            gf[i] = (hi - lo) / (2 * eps)
        out.append(g)
    return out


def check(fn, params, rtol=1e-5, atol=1e-7):
    for p in params:
        p.grad = None
    fn().backward()
    for p, ref in zip(params, fd_grads(fn, params)):
        np.testing.assert_allclose(p.grad, ref, rtol=rtol, atol=atol)


def _param(rng, shape, lo=-2.0, hi=2.0):
    flat = [lo + (hi - lo) * rng.uniform() for _ in range(int(np.prod(shape)))]
    return Tensor(np.array(flat).reshape(shape), requires_grad=True)


@pytest.mark.parametrize("expr", [
    lambda a, b: (a + b).sum(),
    lambda a, b: (a - b).sum(),
    lambda a, b: (a * b).sum(),
    lambda a, b: (a / (b + 3.0)).sum(),
    lambda a, b: (-a + 2.0 * b).sum(),
    lambda a, b: (1.0 - a).sum() + (1.0 / (b + 3.0)).sum(),
    lambda a, b: (a.exp() + b.sigmoid()).sum(),
    lambda a, b: ((a * a + 1.0).log() * b).sum(),
    lambda a, b: (a * a + 1.0).sqrt().sum() * (b.silu()).mean(),
    lambda a, b: ((a + b) * (a - b) + a * b).mean(),
])
def test_elementwise_grads_match_fd(expr):
    rng = SplitMix64(17)
    a = _param(rng, (3, 4))
    b = _param(rng, (3, 4))
    check(lambda: expr(a, b), [a, b])


def test_broadcast_grads_match_fd():
    rng = SplitMix64(5)
    a = _param(rng, (3, 1))
    b = _param(rng, (1, 4))
    s = _param(rng, ())
    check(lambda: ((a + b) * s).sum(), [a, b, s])
    check(lambda: (a * b - s).mean(), [a, b, s])


def test_matmul_and_transpose_grads():
    rng = SplitMix64(29)
    a = _param(rng, (4, 3))
    b = _param(rng, (3, 5))
    check(lambda: (a @ b).sum(), [a, b])
    check(lambda: ((a @ b).T @ a).sum(), [a, b])


@pytest.mark.parametrize("axis,keepdims", [
    (None, False), (0, False), (1, False), (0, True), (1, True)])
def test_reduction_grads(axis, keepdims):
    rng = SplitMix64(41)
    a = _param(rng, (3, 4))
    check(lambda: (a.sum(axis=axis, keepdims=keepdims) * 2.0).sum(), [a])
    check(lambda: (a.mean(axis=axis, keepdims=keepdims)
                   * a.mean(axis=axis, keepdims=keepdims)).sum(), [a])


def test_shared_subexpression_accumulates():
    x = Tensor([1.5, -0.5], requires_grad=True)
    (x * x + x).sum().backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_two_backward_calls_accumulate_on_leaf():
    x = Tensor([2.0], requires_grad=True)
    (x * 3.0).sum().backward()
    (x * 3.0).sum().backward()
    np.testing.assert_allclose(x.grad, [6.0])


def test_detach_blocks_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x.detach() * x).sum().backward()
    np.testing.assert_allclose(x.grad, x.data)  # only the live factor


def test_max_detached_is_constant():
    x = Tensor([[1.0, 5.0], [2.0, 0.5]], requires_grad=True)
    m = x.max_detached(axis=1, keepdims=True)
    assert not m.requires_grad
    ((x - m) * (x - m)).sum().backward()
    np.testing.assert_allclose(
        x.grad, 2 * (x.data - x.data.max(axis=1, keepdims=True)))


def test_sigmoid_saturates_without_overflow():
    with np.errstate(over="raise"):
        v = Tensor(np.array([-800.0, 0.0, 800.0])).sigmoid()
    np.testing.assert_allclose(v.data, [0.0, 0.5, 1.0])


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_matmul_requires_2d():
    with pytest.raises(ValueError):
        Tensor([1.0, 2.0], requires_grad=True) @ Tensor([[1.0], [2.0]])
    with pytest.raises(ValueError):
        Tensor([1.0]).T


def test_unbroadcast_shapes():
    g = np.ones((2, 3, 4))
    assert _unbroadcast(g, (3, 4)).shape == (3, 4)
    assert _unbroadcast(g, (1, 4)).shape == (1, 4)
    assert _unbroadcast(g, ()).shape == ()
    np.testing.assert_allclose(_unbroadcast(g, (1, 4)), np.full((1, 4), 6.0))


# ------------------------------------------------------------------ Adam

def _adam_reference(data, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    x = data.copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return x


def test_adam_matches_reference_updates():
    rng = SplitMix64(7)
    p = _param(rng, (2, 3))
    start = p.data.copy()
    grads = [np.array([[rng.uniform() - 0.5 for _ in range(3)]
                       for _ in range(2)]) for _ in range(4)]
    opt = Adam([p], lr=0.05)
    for g in grads:
        p.grad = g.copy()
        opt.step()
    np.testing.assert_allclose(p.data, _adam_reference(start, grads, 0.05),
                               rtol=1e-12)


def test_adam_skips_gradless_params_and_zero_grad():
    p = Tensor([1.0], requires_grad=True)
    q = Tensor([2.0], requires_grad=True)
    opt = Adam([p, q], lr=0.1)
    p.grad = np.array([1.0])
    opt.step()
    assert q.data[0] == 2.0
    assert p.data[0] != 1.0
    opt.zero_grad()
    assert p.grad is None and q.grad is None


def test_adam_first_step_size_is_lr():
    # bias correction makes the very first step lr * g/|g| (eps aside)
    p = Tensor([0.0], requires_grad=True)
    opt = Adam([p], lr=0.01)
    p.grad = np.array([42.0])
    opt.step()
    np.testing.assert_allclose(p.data, [-0.01], rtol=1e-6)
