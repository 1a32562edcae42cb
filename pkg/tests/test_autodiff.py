"""Reverse-mode engine: every backward rule against central differences."""

import numpy as np
import pytest

from lgmix import autodiff as ad
from lgmix import spectral
from lgmix.autodiff import Node, Parameter


def fd_grad(loss_fn, arr, h=1e-6):
    """Central differences through a scalar loss of one array."""
    view = arr.view(np.float64) if np.iscomplexobj(arr) else arr
    flat = view.ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        lp = loss_fn()
        flat[i] = orig - h
        lm = loss_fn()
        flat[i] = orig
        grad[i] = (lp - lm) / (2 * h)
    return grad.reshape(view.shape)


def test_hadamard_product_rule():
    rng = np.random.default_rng(0)
    xv = rng.standard_normal((1, 2, 5))
    yv = rng.standard_normal((1, 2, 5))
    x, y = Node(xv), Node(yv)
    out = ad.hadamard(x, y)
    loss = ad.mean_all(out)
    ad.backward(loss)
    # adjoint of x is (1/size) * y
    assert np.allclose(x.grad, yv / xv.size, atol=1e-15)
    assert np.allclose(y.grad, xv / xv.size, atol=1e-15)


def test_channel_map_weight_grad_one_hot_input():
    # one-hot input makes dL/dW an outer product with that input
    x = np.zeros((1, 3, 4))
    x[0, 1, 2] = 1.0
    w = Parameter("w", np.random.default_rng(1).standard_normal((2, 3)))
    b = Parameter("b", np.zeros(2))

    def loss_fn():
        out = ad.channel_map(Node(x), ad.param_node(w), ad.param_node(b))
        return ad.mean_all(out)

    w.zero_grad()
    ad.backward(loss_fn())
    ref = fd_grad(lambda: float(loss_fn().value), w.value)
    assert np.allclose(w.grad, ref, atol=1e-9)
    # only the hot input channel receives weight gradient
    assert np.all(w.grad[:, [0, 2]] == 0.0)


def test_spectral_multiply_grad_matches_fd():
    rng = np.random.default_rng(2)
    d, n, modes = 2, 16, 4
    sw = spectral.init_spectral_weights(rng, d, d, (modes,))
    wp = Parameter("spec", sw.w)
    sw.w = wp.value
    xv = rng.standard_normal((1, d, n))

    def loss_fn():
        out = ad.spectral_multiply(Node(xv), ad.param_node(wp), sw)
        return ad.mse(out, np.zeros_like(out.value))

    wp.zero_grad()
    ad.backward(loss_fn())
    ref = fd_grad(lambda: float(loss_fn().value), wp.value)
    got = wp.grad.view(np.float64)
    assert np.max(np.abs(got - ref)) <= 1e-7
    ref_x = fd_grad(lambda: float(loss_fn().value), xv)
    node = Node(xv)
    out = ad.spectral_multiply(node, ad.param_node(wp), sw)
    ad.backward(ad.mse(out, np.zeros_like(out.value)))
    assert np.max(np.abs(node.grad - ref_x)) <= 1e-7


def test_backward_mean_of_constant():
    x = Node(np.full((1, 2, 8), 3.0))
    ad.backward(ad.mean_all(x))
    assert np.all(x.grad == 1.0 / 16)


def test_backward_mean_of_square():
    rng = np.random.default_rng(3)
    xv = rng.standard_normal((1, 1, 6))
    x = Node(xv)
    ad.backward(ad.mean_all(ad.hadamard(x, x)))
    assert np.allclose(x.grad, 2 * xv / xv.size, atol=1e-15)


def test_backward_rejects_non_scalar():
    x = Node(np.zeros((1, 2, 3)))
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(ad.add(x, x))


def test_grad_accumulates_without_zero():
    p = Parameter("p", np.array([2.0]))

    def run():
        ad.backward(ad.mean_all(ad.hadamard(ad.param_node(p), ad.param_node(p))))

    run()
    once = p.grad.copy()
    run()
    assert np.array_equal(p.grad, 2 * once)


def test_zero_grad_then_backward_matches_fresh_bitwise():
    rng = np.random.default_rng(4)
    p = Parameter("p", rng.standard_normal((3, 3)))
    x = rng.standard_normal((1, 3, 5))

    def run():
        out = ad.channel_map(Node(x), ad.param_node(p))
        ad.backward(ad.mse(out, np.ones_like(out.value)))

    run()
    first = p.grad.tobytes()
    p.zero_grad()
    run()
    assert p.grad.tobytes() == first


def test_unreachable_parameter_grad_is_exactly_zero():
    used = Parameter("used", np.array([[1.0]]))
    unused = Parameter("unused", np.array([[5.0]]))
    x = Node(np.ones((1, 1, 4)))
    out = ad.channel_map(x, ad.param_node(used))
    used.zero_grad()
    unused.zero_grad()
    ad.backward(ad.mean_all(out))
    assert np.all(unused.grad == 0.0)
    assert np.any(used.grad != 0.0)


def test_gradient_of_sum_is_sum_of_gradients():
    rng = np.random.default_rng(5)
    p = Parameter("p", rng.standard_normal((2, 2)))
    x1 = rng.standard_normal((1, 2, 4))
    x2 = rng.standard_normal((1, 2, 4))

    def loss_for(x):
        out = ad.channel_map(Node(x), ad.param_node(p))
        return ad.mean_all(out)

    p.zero_grad()
    ad.backward(loss_for(x1))
    g1 = p.grad.copy()
    p.zero_grad()
    ad.backward(loss_for(x2))
    g2 = p.grad.copy()
    p.zero_grad()
    ad.backward(ad.add(loss_for(x1), loss_for(x2)))
    assert np.array_equal(p.grad, g1 + g2)


def test_scalar_scale_grads():
    rng = np.random.default_rng(6)
    xv = rng.standard_normal((1, 2, 4))
    s = Parameter("s", np.asarray(0.7))
    x = Node(xv)
    s.zero_grad()
    out = ad.scalar_scale(x, ad.param_node(s))
    ad.backward(ad.mean_all(out))
    assert np.allclose(x.grad, 0.7 / xv.size, atol=1e-15)
    assert np.allclose(s.grad, xv.mean(), atol=1e-15)


@pytest.mark.parametrize("kind", ["gelu", "tanh"])
def test_activation_derivative_matches_fd(kind):
    xv = np.linspace(-3, 3, 31).reshape(1, 1, 31)
    x = Node(xv)
    ad.backward(ad.mean_all(ad.activation(x, kind)))
    ref = fd_grad(lambda: float(np.mean(_act_value(xv, kind))), xv)
    assert np.max(np.abs(x.grad - ref)) <= 1e-8


def _act_value(x, kind):
    if kind == "tanh":
        return np.tanh(x)
    return 0.5 * x * (1 + np.tanh(ad.GELU_A * (x + ad.GELU_B * x**3)))


def test_concat_and_slice_grads():
    rng = np.random.default_rng(7)
    a = Node(rng.standard_normal((1, 2, 4)))
    b = Node(rng.standard_normal((1, 3, 4)))
    cat = ad.concat([a, b])
    sl = ad.slice_channels(cat, 1, 4)
    ad.backward(ad.mean_all(sl))
    size = sl.value.size
    assert np.all(a.grad[:, 0] == 0) and np.all(a.grad[:, 1] == 1 / size)
    assert np.all(b.grad[:, :2] == 1 / size) and np.all(b.grad[:, 2] == 0)


def test_relative_mse_value_and_grad():
    rng = np.random.default_rng(8)
    pv = rng.standard_normal((2, 1, 4))
    tv = rng.standard_normal((2, 1, 4))
    node = Node(pv)
    loss = ad.relative_mse(node, tv)
    per = [np.sum((pv[i] - tv[i]) ** 2) / np.sum(tv[i] ** 2) for i in range(2)]
    assert float(loss.value) == pytest.approx(np.mean(per))
    ad.backward(loss)
    ref = fd_grad(lambda: float(ad.relative_mse(Node(pv), tv).value), pv)
    assert np.max(np.abs(node.grad - ref)) <= 1e-8


def test_relative_mse_zero_norm_target_rejected():
    with pytest.raises(ValueError, match="zero norm"):
        ad.relative_mse(Node(np.ones((1, 1, 3))), np.zeros((1, 1, 3)))


def test_grad_check_full_toy_model():
    # two mixing layers end to end; the engine's own finite differences
    from lgmix.model import ModelConfig, build_model
    from lgmix.training import LossWeights, compute_loss

    model = build_model(ModelConfig(d_u=1, d_m=3, depth=2, modes=(3,)), 11, "f64")
    rng = np.random.default_rng(9)
    window = rng.uniform(-1, 1, (2, 1, 16))
    target = rng.uniform(-1, 1, (2, 1, 16))

    def loss_fn():
        return compute_loss(model, window, target, LossWeights(1.0, 0.1))

    report = ad.grad_check(model.parameters(), loss_fn, tolerance=1e-4)
    assert report.passed, report.format()


def test_grad_check_linear_model_tight_tolerance():
    from lgmix.model import ModelConfig, build_model
    from lgmix.training import LossWeights, compute_loss

    model = build_model(
        ModelConfig(d_u=1, d_m=3, depth=2, modes=(3,), variant="linear-only"), 12, "f64"
    )
    rng = np.random.default_rng(10)
    window = rng.uniform(-1, 1, (1, 1, 8))
    target = rng.uniform(-1, 1, (1, 1, 8))

    def loss_fn():
        return compute_loss(model, window, target, LossWeights(1.0, 0.0))

    report = ad.grad_check(model.parameters(), loss_fn, tolerance=1e-6)
    assert report.passed, report.format()


def test_grad_check_zero_tolerance_reports_every_parameter():
    from lgmix.model import ModelConfig, build_model
    from lgmix.training import LossWeights, compute_loss

    model = build_model(ModelConfig(d_u=1, d_m=2, depth=1, modes=(2,)), 13, "f64")
    rng = np.random.default_rng(11)
    window = rng.uniform(-1, 1, (1, 1, 8))
    target = rng.uniform(-1, 1, (1, 1, 8))

    def loss_fn():
        return compute_loss(model, window, target, LossWeights(1.0, 0.1))

    report = ad.grad_check(model.parameters(), loss_fn, tolerance=0.0)
    assert len(report.entries) == len([p for p in model.parameters() if p.trainable])
    assert len(report.failures) == len(report.entries)
