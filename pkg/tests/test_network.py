import numpy as np
import pytest

from eigencurve import network
from eigencurve.geometry import Ball, PointBatch, Rectangle, sample_interior
from eigencurve.network import (MlpParams, deserialize_params, forward_jet, forward_jets,
                                forward_values, init_params, loss_gradient, params_to_vector,
                                serialize_params, snapshot_ref, trial_jet, trial_jets,
                                vector_to_params)


def test_init_determinism_and_bound():
    a = init_params([2, 32, 32, 1], seed=7)
    b = init_params([2, 32, 32, 1], seed=7)
    for Wa, Wb in zip(a.weights, b.weights):
        assert np.array_equal(Wa, Wb)
    bound = np.sqrt(6.0 / (2 + 32))
    assert np.abs(a.weights[0]).max() <= bound
    assert np.abs(a.weights[0]).max() > 0.8 * bound  # 64 uniform draws reach near the bound
    assert all(np.array_equal(bb, np.zeros_like(bb)) for bb in a.biases)


def test_init_validation():
    with pytest.raises(ValueError):
        init_params([2, 32, 1], seed=0)          # only one hidden layer
    with pytest.raises(ValueError):
        init_params([2, 32, 32, 2], seed=0)      # non-scalar output
    with pytest.raises(ValueError):
        init_params([2, 0, 32, 1], seed=0)


def _zero_params(widths, out_bias=0.0):
    Ws = [np.zeros((widths[i + 1], widths[i])) for i in range(3)]
    bs = [np.zeros(widths[i + 1]) for i in range(3)]
    bs[2][0] = out_bias
    return MlpParams(widths=tuple(widths), weights=tuple(Ws), biases=tuple(bs))


def test_zero_network():
    p = _zero_params([2, 8, 8, 1])
    X = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    v, g, h = forward_jets(p, X)
    assert np.array_equal(v, np.zeros(20))
    assert np.array_equal(g, np.zeros((20, 2)))
    assert np.array_equal(h, np.zeros((20, 2, 2)))


def test_constant_output_bias():
    p = _zero_params([3, 4, 4, 1], out_bias=2.5)
    jet = forward_jet(p, np.array([0.3, -0.2, 0.9]))
    assert jet.value == 2.5
    assert np.array_equal(jet.gradient, np.zeros(3))
    assert np.array_equal(jet.hessian, np.zeros((3, 3)))


def test_near_linear_network_jet():
    # scale trick: with |z| ~ 1e-6 through both tanh layers the network is
    # affine up to O(z^2) ~ 1e-12, so the jet must match w.x + b tightly
    rng = np.random.default_rng(3)
    w = rng.standard_normal(2)
    eps = 1e-6
    W1 = np.zeros((4, 2)); W1[0] = eps * w
    W2 = np.zeros((4, 4)); W2[0, 0] = 1.0
    W3 = np.zeros((1, 4)); W3[0, 0] = 1.0 / eps
    p = MlpParams(widths=(2, 4, 4, 1),
                  weights=(W1, W2, W3),
                  biases=(np.zeros(4), np.zeros(4), np.array([0.25])))
    x = np.array([0.37, -0.81])
    jet = forward_jet(p, x)
    assert jet.value == pytest.approx(float(w @ x) + 0.25, rel=1e-9)
    assert jet.gradient == pytest.approx(w, rel=1e-9)
    assert np.abs(jet.hessian).max() < 1e-4


def _fd_jet_of_net(p, x, h=1e-4):
    d = x.size
    grad = np.empty(d)
    hess = np.empty((d, d))
    f = lambda q: forward_values(p, q[None, :])[0]
    f0 = f(x)
    for i in range(d):
        e = np.zeros(d); e[i] = h
        grad[i] = (f(x + e) - f(x - e)) / (2 * h)
        hess[i, i] = (f(x + e) - 2 * f0 + f(x - e)) / h**2
        for j in range(i + 1, d):
            u = np.zeros(d); u[j] = h
            hess[i, j] = (f(x + e + u) - f(x + e - u) - f(x - e + u) + f(x - e - u)) / (4 * h**2)
            hess[j, i] = hess[i, j]
    return f0, grad, hess


def _rel(a, b, floor=1.0):
    return np.abs(a - b) / np.maximum(floor, np.abs(b))


def test_jets_match_finite_differences():
    rng = np.random.default_rng(11)
    for trial in range(10):
        p = init_params([2, 5, 5, 1], seed=trial)
        x = rng.uniform(-0.9, 0.9, 2)
        jet = forward_jet(p, x)
        f0, gfd, hfd = _fd_jet_of_net(p, x)
        assert jet.value == pytest.approx(f0, rel=1e-12)
        assert _rel(jet.gradient, gfd).max() < 1e-5
        assert _rel(jet.hessian, hfd).max() < 1e-5


def test_hessian_symmetry():
    # within 1e-12 always; tiny asymmetry can enter through BLAS/FMA grouping
    p = init_params([4, 16, 16, 1], seed=2)
    X = np.random.default_rng(1).uniform(-1, 1, (50, 4))
    _, _, H = forward_jets(p, X)
    assert np.abs(H - np.swapaxes(H, 1, 2)).max() < 1e-12


def test_trial_jet_boundary_zero():
    # rectangle boundary coordinates are exact, so the factor vanishes exactly;
    # sampled disk boundary points carry one ulp of radius error
    square = Rectangle.unit_square()
    ps = init_params([2, 8, 8, 1], seed=4)
    for x in square.sample_boundary(50, seed=9):
        assert trial_jet(ps, square, x).value == 0.0
    disk = Ball(2, 1.0)
    pd = init_params([2, 8, 8, 1], seed=4)
    for x in disk.sample_boundary(50, seed=9):
        assert abs(trial_jet(pd, disk, x).value) < 1e-12


def test_trial_jet_constant_network_laplacian():
    # N identically 1 on the unit disk: u = B, so trace(hess) = -4 in 2D
    disk = Ball(2, 1.0)
    p = _zero_params([2, 8, 8, 1], out_bias=1.0)
    for x in sample_interior(disk, 20, seed=3).points:
        jet = trial_jet(p, disk, x)
        assert jet.laplacian == pytest.approx(-4.0, rel=1e-14)


def test_trial_jets_match_fd_of_product():
    disk = Ball(2, 1.0)
    p = init_params([2, 6, 6, 1], seed=8)
    h = 1e-4

    def u(q):
        b, _, _ = disk.boundary_jets(q[None, :])
        return (b * forward_values(p, q[None, :]))[0]

    for x in sample_interior(disk, 10, seed=5).points * 0.8:
        jet = trial_jet(p, disk, x)
        d = 2
        gfd = np.empty(d); hfd = np.empty((d, d))
        u0 = u(x)
        for i in range(d):
            e = np.zeros(d); e[i] = h
            gfd[i] = (u(x + e) - u(x - e)) / (2 * h)
            hfd[i, i] = (u(x + e) - 2 * u0 + u(x - e)) / h**2
            for j in range(i + 1, d):
                f = np.zeros(d); f[j] = h
                hfd[i, j] = (u(x + e + f) - u(x + e - f) - u(x - e + f) + u(x - e - f)) / (4 * h**2)
                hfd[j, i] = hfd[i, j]
        assert jet.value == pytest.approx(u0, rel=1e-12)
        assert _rel(jet.gradient, gfd).max() < 1e-5
        assert _rel(jet.hessian, hfd).max() < 1e-5


class _QuadJetLoss:
    """sum of squared jet components; generic smooth test loss over raw jets."""

    domain = None

    def __call__(self, v, g, h):
        value = float((v**2).sum() + (g**2).sum() + (h**2).sum())
        return value, (2 * v, 2 * g, 2 * h)


def test_loss_gradient_matches_directional_fd():
    disk = Ball(2, 1.0)
    batch = sample_interior(disk, 32, seed=6)
    p = init_params([2, 6, 6, 1], seed=12)
    loss = _QuadJetLoss()
    value, grad = loss_gradient(p, batch, loss)
    gvec = grad.to_vector()
    theta = params_to_vector(p)
    rng = np.random.default_rng(0)
    eps = 1e-5
    for _ in range(20):
        direction = rng.standard_normal(theta.size)
        tp = vector_to_params(theta + eps * direction, p.widths)
        tm = vector_to_params(theta - eps * direction, p.widths)
        vp, _ = loss_gradient(tp, batch, loss)
        vm, _ = loss_gradient(tm, batch, loss)
        fd = (vp - vm) / (2 * eps)
        an = float(direction @ gvec)
        assert abs(fd - an) / max(1.0, abs(fd)) < 1e-5


def test_loss_gradient_dead_unit_is_exactly_zero():
    p = init_params([2, 6, 6, 1], seed=1)
    W3 = p.weights[2].copy()
    W3[0, 3] = 0.0  # unit 3 of the second hidden layer has no path to the output
    p = MlpParams(widths=p.widths, weights=(p.weights[0], p.weights[1], W3), biases=p.biases)
    batch = sample_interior(Ball(2, 1.0), 16, seed=2)
    _, grad = loss_gradient(p, batch, _QuadJetLoss())
    assert grad.biases[1][3] == 0.0
    assert np.array_equal(grad.weights[1][3], np.zeros(6))


def test_loss_gradient_linear_in_closure():
    p = init_params([2, 5, 5, 1], seed=3)
    batch = sample_interior(Ball(2, 1.0), 16, seed=4)
    base = _QuadJetLoss()

    class Doubled:
        domain = None

        def __call__(self, v, g, h):
            value, (wv, wg, wh) = base(v, g, h)
            return 2.0 * value, (2.0 * wv, 2.0 * wg, 2.0 * wh)

    v1, g1 = loss_gradient(p, batch, base)
    v2, g2 = loss_gradient(p, batch, Doubled())
    assert v2 == 2.0 * v1
    for a, b in zip(g1.weights, g2.weights):
        assert np.array_equal(2.0 * a, b)
    for a, b in zip(g1.biases, g2.biases):
        assert np.array_equal(2.0 * a, b)


def test_empty_batch_rejected():
    p = init_params([2, 4, 4, 1], seed=0)
    batch = PointBatch(points=np.zeros((0, 2)), seed=0)
    with pytest.raises(ValueError):
        loss_gradient(p, batch, _QuadJetLoss())


def test_serialization_roundtrip():
    p = init_params([3, 16, 16, 1], seed=42)
    blob = serialize_params(p)
    q = deserialize_params(blob)
    assert q.widths == p.widths
    for Wa, Wb in zip(p.weights, q.weights):
        assert np.array_equal(Wa, Wb)
    for ba, bb in zip(p.biases, q.biases):
        assert np.array_equal(ba, bb)
    assert serialize_params(q) == blob
    assert snapshot_ref(blob) == snapshot_ref(serialize_params(q))


def test_trial_jets_batched_agree_with_single():
    dom = Rectangle.unit_square()
    p = init_params([2, 7, 7, 1], seed=5)
    X = sample_interior(dom, 8, seed=6).points
    u, Gu, Hu = trial_jets(p, dom, X)
    for i, x in enumerate(X):
        jet = trial_jet(p, dom, x)
        assert jet.value == u[i]
        assert np.array_equal(jet.gradient, Gu[i])
        assert np.array_equal(jet.hessian, Hu[i])
