import math

import numpy as np
import pytest

from losslab.errors import DimensionError, ParameterError
from losslab.model import (
    Batch,
    ModelSpec,
    ParamVector,
    exact_hessian,
    forward,
    he_init,
    hvp,
    loss_grad,
)
from losslab.rng import Rng

from conftest import random_instance, smooth_grad_instance, smooth_hvp_instance
from oracles import central_diff_grad, central_diff_hvp, jacobi_eigenvalues, mlp_forward_loops


def small_net(seed=0, widths=(5,), d=3, c=3, batch=8):
    r = Rng(seed)
    spec = ModelSpec(input_dim=d, hidden_widths=widths, num_classes=c)
    theta = he_init(spec, r.split("init"))
    dr = r.split("data")
    x = dr.normals(batch * d).reshape(batch, d)
    y = np.array([dr.integer(c) for _ in range(batch)], dtype=np.int64)
    return spec, theta, Batch(x, y)


def test_param_count_and_layout():
    spec = ModelSpec(input_dim=4, hidden_widths=(8, 3), num_classes=2)
    assert spec.param_count == 4 * 8 + 8 + 8 * 3 + 3 + 3 * 2 + 2
    assert spec.layout()[0] == (0, "weight", (4, 8))
    assert spec.layout()[-1] == (2, "bias", (2,))


def test_flatten_unflatten_roundtrip_bit_exact():
    spec = ModelSpec(input_dim=3, hidden_widths=(4,), num_classes=2)
    theta = he_init(spec, Rng(5))
    flat_again = np.concatenate([np.concatenate([w.ravel(), b]) for w, b in theta.views()])
    assert np.array_equal(flat_again, theta.values)


def test_zero_theta_zero_logits():
    spec, _, batch = small_net()
    theta = ParamVector.zeros(spec)
    assert np.all(forward(spec, theta, batch.X) == 0.0)


def test_identity_single_layer_is_identity():
    spec = ModelSpec(input_dim=3, hidden_widths=(), num_classes=3)
    theta = ParamVector.zeros(spec)
    w, b = theta.views()[0]
    w[...] = np.eye(3)
    x = Rng(2).normals(12).reshape(4, 3)
    assert np.array_equal(forward(spec, theta, x), x)


def test_forward_matches_loop_oracle():
    spec, theta, batch = small_net(seed=3, widths=(6, 4), d=5, c=3, batch=7)
    logits = forward(spec, theta, batch.X)
    pairs = [(w.tolist(), b.tolist()) for w, b in theta.views()]
    for i in range(batch.size):
        ref = mlp_forward_loops(pairs, batch.X[i])
        assert np.allclose(logits[i], ref, rtol=1e-12, atol=1e-12)


def test_forward_shape_errors():
    spec, theta, batch = small_net()
    with pytest.raises(DimensionError):
        forward(spec, theta, np.zeros((4, spec.input_dim + 1)))
    other = ModelSpec(input_dim=spec.input_dim, hidden_widths=(9,), num_classes=3)
    with pytest.raises(DimensionError):
        forward(other, theta, batch.X)


def test_zero_theta_loss_is_log_c():
    for c in (2, 3, 7):
        spec = ModelSpec(input_dim=4, hidden_widths=(3,), num_classes=c)
        theta = ParamVector.zeros(spec)
        x = Rng(1).normals(20).reshape(5, 4)
        y = np.zeros(5, dtype=np.int64)
        loss, _ = loss_grad(spec, theta, Batch(x, y), weight_decay=0.0)
        assert abs(loss - math.log(c)) < 1e-12


def test_regularizer_gradient_vanishes_at_origin():
    spec, _, batch = small_net()
    theta = ParamVector.zeros(spec)
    _, grad = loss_grad(spec, theta, batch, weight_decay=0.7, data_weight=0.0)
    assert np.all(grad.values == 0.0)


def test_empty_batch_rejected():
    spec, theta, _ = small_net()
    empty = Batch(np.zeros((0, spec.input_dim)), np.zeros(0, dtype=np.int64))
    with pytest.raises(ParameterError):
        loss_grad(spec, theta, empty, weight_decay=0.0)


def grad_flat(spec, batch, wd, values, layout, data_weight=1.0):
    theta = ParamVector(layout, values)
    return loss_grad(spec, theta, batch, wd, data_weight)[1].values


def test_gradient_matches_central_differences():
    for trial in range(10):
        spec, theta, batch = smooth_grad_instance(1000 + 50 * trial, h=1e-5)
        wd = 0.0 if trial % 2 == 0 else 1e-3
        _, grad = loss_grad(spec, theta, batch, wd)

        def f(values):
            return loss_grad(spec, ParamVector(spec.layout(), values), batch, wd)[0]

        fd = central_diff_grad(f, theta.values, h=1e-5)
        assert np.allclose(grad.values, fd, rtol=1e-6, atol=1e-9), trial


def test_softmax_shift_invariance():
    spec, theta, batch = small_net(seed=9)
    loss0, grad0 = loss_grad(spec, theta, batch, weight_decay=0.0)
    shifted = theta.copy()
    w_last, b_last = shifted.views()[-1]
    b_last += 13.5  # same constant added to every logit
    loss1, _ = loss_grad(spec, shifted, batch, weight_decay=0.0)
    assert abs(loss0 - loss1) < 1e-12
    # data-term gradient w.r.t. everything below the logit shift is unchanged
    _, grad1 = loss_grad(spec, shifted, batch, weight_decay=0.0)
    n_last = w_last.size + b_last.size
    assert np.allclose(grad0.values[:-n_last], grad1.values[:-n_last], atol=1e-12)


def test_hvp_zero_vector():
    spec, theta, batch = small_net()
    v = ParamVector.zeros(spec)
    out = hvp(spec, theta, batch, weight_decay=0.3, v=v)
    assert np.all(out.values == 0.0)


def test_hvp_pure_quadratic_penalty():
    spec, theta, batch = small_net(seed=4)
    lam = 0.1
    r = Rng(77)
    v = ParamVector(spec.layout(), r.normals(spec.param_count))
    out = hvp(spec, theta, batch, weight_decay=lam, v=v, data_weight=0.0)
    assert np.allclose(out.values, 2.0 * lam * v.values, rtol=1e-12, atol=1e-15)


def test_hvp_matches_finite_difference_of_gradients():
    for trial in range(10):
        spec, theta, batch, v_flat = smooth_hvp_instance(2000 + 50 * trial, h=1e-4)
        wd = 5e-4
        v = ParamVector(spec.layout(), v_flat)
        hv = hvp(spec, theta, batch, wd, v).values

        def g(values):
            return grad_flat(spec, batch, wd, values, spec.layout())

        fd = central_diff_hvp(g, theta.values, v.values, h=1e-4)
        assert np.allclose(hv, fd, rtol=1e-4, atol=1e-8), trial


def test_hvp_symmetry_and_linearity():
    for trial in range(5):
        spec, theta, batch = random_instance(seed=3000 + trial)
        r = Rng(400 + trial)
        u = ParamVector(spec.layout(), r.normals(spec.param_count))
        v = ParamVector(spec.layout(), r.normals(spec.param_count))
        hu = hvp(spec, theta, batch, 1e-3, u).values
        hv = hvp(spec, theta, batch, 1e-3, v).values
        lhs = float(v.values @ hu)
        rhs = float(u.values @ hv)
        assert abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-30) < 1e-8

        a, b = 0.7, -1.3
        combo = ParamVector(spec.layout(), a * u.values + b * v.values)
        h_combo = hvp(spec, theta, batch, 1e-3, combo).values
        ref = a * hu + b * hv
        scale = float(np.linalg.norm(ref)) + 1e-30
        assert float(np.linalg.norm(h_combo - ref)) / scale < 1e-10


def test_hvp_layout_mismatch():
    spec, theta, batch = small_net()
    other = ModelSpec(input_dim=spec.input_dim, hidden_widths=(9,), num_classes=3)
    v = ParamVector.zeros(other)
    with pytest.raises(DimensionError):
        hvp(spec, theta, batch, 0.0, v)


def test_exact_hessian_symmetric_and_consistent():
    spec, theta, batch = small_net(seed=6, widths=(4,), d=3, c=3)
    h = exact_hessian(spec, theta, batch, weight_decay=1e-3)
    assert np.linalg.norm(h - h.T) / np.linalg.norm(h) < 1e-8
    diag_sum = 0.0
    basis = ParamVector.zeros(spec)
    for j in range(spec.param_count):
        basis.values[:] = 0.0
        basis.values[j] = 1.0
        diag_sum += hvp(spec, theta, batch, 1e-3, basis).values[j]
    assert abs(np.trace(h) - diag_sum) < 1e-12 * max(1.0, abs(diag_sum))


def test_exact_hessian_eigenvalues_match_jacobi_oracle():
    # ~50-parameter net: 3 -> 5 -> 4 gives 3*5+5+5*4+4 = 44
    spec, theta, batch = small_net(seed=8, widths=(5,), d=3, c=4)
    h = exact_hessian(spec, theta, batch, weight_decay=1e-3)
    h = 0.5 * (h + h.T)
    dense = np.linalg.eigvalsh(h)
    jac = jacobi_eigenvalues(h)
    scale = max(1.0, float(np.max(np.abs(dense))))
    assert np.max(np.abs(dense - jac)) / scale < 1e-8


def test_exact_hessian_guard():
    spec = ModelSpec(input_dim=100, hidden_widths=(100,), num_classes=10)
    theta = ParamVector.zeros(spec)
    batch = Batch(np.zeros((2, 100)), np.zeros(2, dtype=np.int64))
    with pytest.raises(ParameterError):
        exact_hessian(spec, theta, batch, 0.0)
