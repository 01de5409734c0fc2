import numpy as np
import pytest

from eigencurve.errors import NonFiniteLossError
from eigencurve.geometry import Ball, PointBatch, Rectangle, sample_interior
from eigencurve.jets import Jet2
from eigencurve.network import MlpParams, init_params
from eigencurve.residuals import (LinearOperator, LossConfig, PLaplaceOperator, Potential,
                                  TrialLoss, assemble_loss, mu_schedule, p_laplacian,
                                  potential_eval, residual_linear, residual_p)


def test_potential_eval():
    zero = Potential("zero")
    harm = Potential("harmonic", omega=1.0)
    assert potential_eval(zero, np.array([0.3, -0.7])) == 0.0
    assert potential_eval(harm, np.array([1.0, 0.0])) == pytest.approx(0.5)
    assert potential_eval(Potential("harmonic", omega=10.0), np.array([0.0, 0.0])) == 0.0
    batch = np.array([[1.0, 0.0], [0.0, 2.0]])
    np.testing.assert_allclose(potential_eval(harm, batch), [0.5, 2.0])
    with pytest.raises(ValueError):
        Potential("harmonic", omega=0.0)
    with pytest.raises(ValueError):
        Potential("step")


def test_residual_linear_examples():
    # constructed zero: hessian trace equals -E with unit value
    jet = Jet2(1.0, np.zeros(2), np.diag([-3.0, -2.0]))
    assert residual_linear(jet, 0.0, 5.0) == 0.0
    # analytic eigenfunction of the unit square at E = 2 pi^2
    x = np.array([0.25, 0.25])
    s1, c1 = np.sin(np.pi * x[0]), np.cos(np.pi * x[0])
    s2, c2 = np.sin(np.pi * x[1]), np.cos(np.pi * x[1])
    u = s1 * s2
    grad = np.pi * np.array([c1 * s2, s1 * c2])
    hess = -np.pi**2 * np.array([[s1 * s2, -c1 * c2], [-c1 * c2, s1 * s2]])
    jet = Jet2(u, grad, hess)
    assert abs(residual_linear(jet, 0.0, 2 * np.pi**2)) < 1e-12
    jet = Jet2(1.0, np.zeros(2), np.zeros((2, 2)))
    assert residual_linear(jet, 3.0, 5.0) == 2.0


def test_p_laplacian_examples():
    rng = np.random.default_rng(0)
    jet = Jet2(rng.standard_normal(), rng.standard_normal(2),
               np.diag(rng.standard_normal(2)))
    for eps in (0.0, 1e-8, 0.3):
        assert p_laplacian(jet, 2.0, eps) == jet.laplacian
    # radial field u = |x|^2 / 2: gradient x, hessian I, Delta_p = p |x|^(p-2)
    for p in (1.5, 2.2, 3.0, 4.5):
        for x in (np.array([0.3, -0.4]), np.array([1.2, 0.1])):
            jet = Jet2(0.5 * float(x @ x), x.copy(), np.eye(2))
            r = float(np.linalg.norm(x))
            assert p_laplacian(jet, p, 0.0) == pytest.approx(p * r ** (p - 2.0), rel=1e-12)
    # vanishing gradient, p > 2: both terms carry positive powers of s
    jet = Jet2(1.0, np.zeros(2), np.eye(2))
    assert p_laplacian(jet, 3.0, 0.0) == 0.0
    # p < 2 at a critical point with no floor is singular
    with pytest.raises(NonFiniteLossError):
        p_laplacian(jet, 1.5, 0.0)


def test_residual_p_examples():
    jet = Jet2(1.0, np.array([0.2, -0.1]), np.diag([-2.0, -3.0]))
    assert residual_p(jet, 2.0, 7.0, 0.0) == residual_linear(jet, 0.0, 7.0)
    # Delta_p part zero, value -1, E=4, p=2.2: residual is -4
    jet = Jet2(-1.0, np.array([1.0, 0.0]), np.zeros((2, 2)))
    assert residual_p(jet, 2.2, 4.0, 0.0) == pytest.approx(-4.0, rel=1e-14)
    # |0|^(p-2) * 0 is 0 by convention
    jet = Jet2(0.0, np.array([1.0, 0.0]), np.zeros((2, 2)))
    assert residual_p(jet, 1.5, 4.0, 0.0) == 0.0


def test_mu_schedule():
    assert mu_schedule(100.0, 0.5) == 100.0
    assert mu_schedule(100.0, 10.0) == 10_000.0
    Es = np.linspace(0, 50, 101)
    mus = [mu_schedule(7.0, E) for E in Es]
    assert all(b >= a for a, b in zip(mus, mus[1:]))  # nondecreasing in |E|
    assert all(m >= 7.0 for m in mus)
    with pytest.raises(ValueError):
        mu_schedule(0.0, 1.0)


def _zero_net(widths=(2, 8, 8, 1), out_bias=0.0):
    Ws = tuple(np.zeros((widths[i + 1], widths[i])) for i in range(3))
    bs = [np.zeros(widths[i + 1]) for i in range(3)]
    bs[2][0] = out_bias
    return MlpParams(widths=widths, weights=Ws, biases=tuple(bs))


def test_assemble_loss_zero_network_collapse():
    disk = Ball(2, 1.0)
    cfg = LossConfig(mu0=100.0, n_train=64, n_val=64)
    batch = sample_interior(disk, 64, seed=1)
    op = LinearOperator(Potential("zero"))
    bd = assemble_loss(_zero_net(), batch, op, 5.0, cfg, disk)
    assert bd.residual_term == 0.0
    assert bd.norm_estimate == 0.0
    assert bd.penalty_term == bd.mu_used
    assert bd.total == bd.mu_used == mu_schedule(100.0, 5.0)


def test_assemble_loss_single_point_hand_computed():
    disk = Ball(2, 1.0)
    cfg = LossConfig(mu0=10.0, n_train=1, n_val=1)
    x = np.array([[0.3, -0.2]])
    batch = PointBatch(points=x, seed=0)
    beta = 0.7
    E = 4.0
    bd = assemble_loss(_zero_net(out_bias=beta), batch, LinearOperator(Potential("zero")),
                       E, cfg, disk)
    # u = beta * B, B = 1 - |x|^2: lap u = -4 beta, residual = -4 beta + E beta B
    B = 1.0 - 0.3**2 - 0.2**2
    r = -4.0 * beta + E * beta * B
    vol = np.pi
    assert bd.residual_term == pytest.approx(vol * r * r, rel=1e-14)
    assert bd.norm_estimate == pytest.approx(vol * (beta * B) ** 2, rel=1e-14)
    assert bd.penalty_term == pytest.approx(bd.mu_used * (bd.norm_estimate - 1.0) ** 2, rel=1e-14)
    assert bd.total == bd.residual_term + bd.penalty_term


def test_linear_vs_p2_identical_breakdown():
    disk = Ball(2, 1.0)
    cfg = LossConfig(mu0=100.0, n_train=128, n_val=64)
    batch = sample_interior(disk, 128, seed=3)
    params = init_params([2, 16, 16, 1], seed=5)
    lin = assemble_loss(params, batch, LinearOperator(Potential("zero")), 9.3, cfg, disk)
    p2 = assemble_loss(params, batch, PLaplaceOperator(p=2.0, grad_floor=0.37), 9.3, cfg, disk)
    assert lin == p2  # bit for bit, field by field


def test_total_is_exact_sum():
    disk = Ball(2, 1.0)
    cfg = LossConfig(mu0=100.0, n_train=64, n_val=64)
    batch = sample_interior(disk, 64, seed=4)
    for E in (0.3, 5.0, 30.0):
        bd = assemble_loss(init_params([2, 8, 8, 1], seed=1), batch,
                           LinearOperator(Potential("zero")), E, cfg, disk)
        assert bd.total == bd.residual_term + bd.penalty_term
        assert bd.residual_term >= 0 and bd.penalty_term >= 0


def test_scaling_by_two_is_exact():
    # doubling the output layer doubles u, so the residual term scales by 4
    # exactly (powers of two commute with rounding)
    disk = Ball(2, 1.0)
    cfg = LossConfig(mu0=100.0, n_train=64, n_val=64)
    batch = sample_interior(disk, 64, seed=5)
    p = init_params([2, 8, 8, 1], seed=6)
    p2 = MlpParams(widths=p.widths, weights=(p.weights[0], p.weights[1], 2.0 * p.weights[2]),
                   biases=(p.biases[0], p.biases[1], 2.0 * p.biases[2]))
    op = LinearOperator(Potential("zero"))
    a = assemble_loss(p, batch, op, 7.0, cfg, disk)
    b = assemble_loss(p2, batch, op, 7.0, cfg, disk)
    assert b.residual_term == 4.0 * a.residual_term
    assert b.norm_estimate == 4.0 * a.norm_estimate


def test_assemble_loss_deterministic():
    disk = Ball(2, 1.0)
    cfg = LossConfig(mu0=100.0, n_train=64, n_val=64)
    batch = sample_interior(disk, 64, seed=6)
    p = init_params([2, 8, 8, 1], seed=7)
    op = PLaplaceOperator(p=2.2)
    a = assemble_loss(p, batch, op, 6.0, cfg, disk)
    b = assemble_loss(p, batch, op, 6.0, cfg, disk)
    assert a == b


def test_nonfinite_error_carries_point_index():
    # constant network on the disk: grad u vanishes at the origin, where the
    # p < 2 operator with no gradient floor is singular
    disk = Ball(2, 1.0)
    cfg = LossConfig(mu0=100.0, n_train=3, n_val=3)
    pts = np.array([[0.5, 0.0], [0.0, 0.0], [0.0, 0.5]])
    batch = PointBatch(points=pts, seed=0)
    op = PLaplaceOperator(p=1.5, grad_floor=0.0)
    with pytest.raises(NonFiniteLossError) as err:
        assemble_loss(_zero_net(out_bias=1.0), batch, op, 5.0, cfg, disk)
    assert err.value.point_index == 1


def test_trial_loss_gradient_consistency_plaplace():
    # cotangents of the p-Laplacian loss must match finite differences of the
    # assembled total through the full network
    from eigencurve.network import loss_gradient, params_to_vector, vector_to_params
    disk = Ball(2, 1.0)
    cfg = LossConfig(mu0=10.0, n_train=32, n_val=32)
    batch = sample_interior(disk, 32, seed=8)
    op = PLaplaceOperator(p=2.2, grad_floor=1e-8)
    params = init_params([2, 6, 6, 1], seed=9)
    loss = TrialLoss(op, 6.5, cfg, disk, batch)
    bd, grad = loss_gradient(params, batch, loss, bjets=loss.bjets)
    assert bd.total == assemble_loss(params, batch, op, 6.5, cfg, disk).total
    gvec = grad.to_vector()
    theta = params_to_vector(params)
    rng = np.random.default_rng(1)
    eps = 1e-6
    for _ in range(10):
        direction = rng.standard_normal(theta.size)
        vp = assemble_loss(vector_to_params(theta + eps * direction, params.widths),
                           batch, op, 6.5, cfg, disk).total
        vm = assemble_loss(vector_to_params(theta - eps * direction, params.widths),
                           batch, op, 6.5, cfg, disk).total
        fd = (vp - vm) / (2 * eps)
        an = float(direction @ gvec)
        assert abs(fd - an) / max(1.0, abs(fd)) < 1e-5


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(mu0=-1.0)
    with pytest.raises(ValueError):
        LossConfig(n_train=0)
    with pytest.raises(ValueError):
        PLaplaceOperator(p=1.0)
    with pytest.raises(ValueError):
        PLaplaceOperator(p=2.2, grad_floor=-1e-3)
