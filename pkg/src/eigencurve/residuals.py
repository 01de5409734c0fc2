"""Operator residuals and the penalized collocation loss.

Supported operators: the linear Schrodinger/Helmholtz form (Laplacian plus an
optional potential) and the p-Laplacian. The loss at a fixed spectral value E
is the Monte Carlo estimate of

    integral(residual^2) + mu * (integral(|u|^p) - 1)^2

over a batch of interior points, with mu scaled like max(1, E^2) to keep the
two terms balanced across the sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteLossError
from .geometry import Domain, PointBatch
from .jets import Jet2
from . import network


@dataclass(frozen=True)
class Potential:
    """Scalar potential: identically zero inside the domain, or harmonic (omega^2/2)|x|^2."""

    kind: str = "zero"
    omega: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "harmonic"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "harmonic" and not self.omega > 0:
            raise ValueError("harmonic potential needs omega > 0")

    def describe(self):
        if self.kind == "zero":
            return {"kind": "zero"}
        return {"kind": "harmonic", "omega": self.omega}


def potential_eval(V: Potential, x):
    """V at a point (d,) or batch (n, d)."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if V.kind == "zero":
        out = np.zeros(pts.shape[0])
    else:
        out = 0.5 * V.omega**2 * (pts**2).sum(axis=1)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class LinearOperator:
    """Residual Delta(u) - V u + E u with L2 normalization."""

    potential: Potential = Potential("zero")
    kind: str = "linear"

    @property
    def norm_power(self) -> float:
        return 2.0

    def describe(self):
        return {"kind": "linear", "potential": self.potential.describe()}


@dataclass(frozen=True)
class PLaplaceOperator:
    """Residual Delta_p(u) + E |u|^(p-2) u with L^p normalization.

    grad_floor regularizes the gradient magnitude as s = sqrt(|grad u|^2 + eps^2),
    keeping the negative powers of s finite during training.
    """

    p: float
    grad_floor: float = 1e-8
    kind: str = "plaplace"

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if self.grad_floor < 0:
            raise ValueError("grad_floor must be >= 0")

    @property
    def norm_power(self) -> float:
        return self.p

    def describe(self):
        return {"kind": "plaplace", "p": self.p, "grad_floor": self.grad_floor}


def mu_schedule(mu0: float, E: float) -> float:
    """Penalty weight mu0 * max(1, E^2): grows with the residual's natural E^2 scale."""
    if not mu0 > 0:
        raise ValueError("mu0 must be positive")
    return mu0 * max(1.0, E * E)


# --- single-point residuals (reference formulas; tests exercise these directly) ---

def residual_linear(jet: Jet2, v_at_x: float, E: float) -> float:
    """trace(hessian) - V(x) u + E u."""
    return jet.laplacian - v_at_x * jet.value + E * jet.value


def p_laplacian(jet: Jet2, p: float, eps: float = 0.0) -> float:
    """Expanded p-Laplacian s^(p-2) (trace H + (p-2) w^T H w), s = sqrt(|g|^2 + eps^2), w = g/s."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    if p == 2.0:
        return jet.laplacian
    g = jet.gradient
    s = float(np.sqrt(g @ g + eps * eps))
    if s == 0.0:
        if p > 2.0:
            return 0.0
        raise NonFiniteLossError(f"p-Laplacian singular at a critical point with p={p} and no gradient floor")
    w = g / s
    out = s ** (p - 2.0) * (jet.laplacian + (p - 2.0) * float(w @ jet.hessian @ w))
    if not np.isfinite(out):
        raise NonFiniteLossError(f"p-Laplacian overflowed (p={p}, s={s})")
    return out


def residual_p(jet: Jet2, p: float, E: float, eps: float = 0.0) -> float:
    """p_laplacian + E |u|^(p-2) u, with |0|^(p-2) * 0 defined as 0."""
    if p == 2.0:
        return residual_linear(jet, 0.0, E)
    u = jet.value
    drive = 0.0 if u == 0.0 else abs(u) ** (p - 2.0) * u
    return p_laplacian(jet, p, eps) + E * drive


# --- batched residuals with cotangent factors ---

def _linear_residual_batch(values, hessians, V_at, E):
    d = hessians.shape[1]
    lap = hessians[:, range(d), range(d)].sum(axis=1)
    r = lap - V_at * values + E * values
    rv = E - V_at
    rg = np.zeros((values.shape[0], d))
    rh = np.broadcast_to(np.eye(d), hessians.shape).copy()
    return r, rv, rg, rh


def _plaplace_residual_batch(values, grads, hessians, p, eps, E):
    if p == 2.0:
        return _linear_residual_batch(values, hessians, np.zeros(values.shape[0]), E)
    n, d = grads.shape
    lap = hessians[:, range(d), range(d)].sum(axis=1)
    s = np.sqrt((grads**2).sum(axis=1) + eps * eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(s[:, None] > 0.0, grads / s[:, None], 0.0)
        q = np.einsum('nd,nde,ne->n', w, hessians, w)
        sp2 = np.where(s > 0.0, s ** (p - 2.0), 0.0 if p > 2.0 else np.inf)
        delta_p = sp2 * (lap + (p - 2.0) * q)
        au = np.abs(values)
        drive = np.where(values == 0.0, 0.0, au ** (p - 2.0) * values)
    r = delta_p + E * drive
    # cotangent factors
    with np.errstate(divide="ignore", invalid="ignore"):
        rv = np.where(values == 0.0, 0.0 if p != 2.0 else E, E * (p - 1.0) * au ** (p - 2.0))
        sp3 = np.where(s > 0.0, s ** (p - 3.0), 0.0)
        hw = np.einsum('nde,ne->nd', hessians + np.swapaxes(hessians, 1, 2), w)
        rg = (p - 2.0) * sp3[:, None] * ((lap + (p - 4.0) * q)[:, None] * w + hw)
        rh = sp2[:, None, None] * (np.broadcast_to(np.eye(d), hessians.shape)
                                   + (p - 2.0) * w[:, :, None] * w[:, None, :])
    return r, rv, rg, rh


def residual_batch(op, values, grads, hessians, E, V_at=None):
    """Pointwise residual and its jet cotangent factors for a batch of trial jets."""
    if isinstance(op, LinearOperator):
        if V_at is None:
            raise ValueError("linear operator needs potential values at the batch points")
        return _linear_residual_batch(values, hessians, V_at, E)
    if isinstance(op, PLaplaceOperator):
        return _plaplace_residual_batch(values, grads, hessians, op.p, op.grad_floor, E)
    raise TypeError(f"unknown operator {op!r}")


def norm_terms(values, p):
    """|u|^p and its derivative p |u|^(p-2) u, specialized exactly at p = 2."""
    if p == 2.0:
        return values * values, 2.0 * values
    au = np.abs(values)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = au ** p
        mv = np.where(values == 0.0, 0.0, p * au ** (p - 2.0) * values)
    return m, mv


# --- loss assembly ---

@dataclass(frozen=True)
class LossBreakdown:
    """Penalized loss and its parts; total == residual_term + penalty_term exactly."""

    total: float
    residual_term: float
    penalty_term: float
    norm_estimate: float
    mu_used: float


@dataclass(frozen=True)
class LossConfig:
    mu0: float = 1.0
    n_train: int = 256
    n_val: int = 16384
    resample_each_step: bool = True

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError("mu0 must be positive")
        if self.n_train < 1 or self.n_val < 1:
            raise ValueError("collocation counts must be >= 1")


class TrialLoss:
    """Pointwise penalized loss bound to one (operator, E, domain, batch).

    Instances satisfy the ``loss_spec`` protocol of ``network.loss_gradient``:
    calling with batched trial jets returns the LossBreakdown and the cotangents
    of the total with respect to each jet component.
    """

    def __init__(self, op, E: float, cfg: LossConfig, domain: Domain, batch: PointBatch):
        self.op = op
        self.E = float(E)
        self.cfg = cfg
        self.domain = domain
        self.batch = batch
        self.mu = mu_schedule(cfg.mu0, E)
        self.volume = domain.volume()
        self.bjets = domain.boundary_jets(batch.points)
        if isinstance(op, LinearOperator):
            self.V_at = potential_eval(op.potential, batch.points)
        else:
            self.V_at = None

    def _terms(self, u, Gu, Hu):
        r, rv, rg, rh = residual_batch(self.op, u, Gu, Hu, self.E, self.V_at)
        m, mv = norm_terms(u, self.op.norm_power)
        bad = ~(np.isfinite(r) & np.isfinite(m))
        if bad.any():
            idx = int(np.argmax(bad))
            raise NonFiniteLossError(f"non-finite loss term at point {idx}", point_index=idx)
        return r, rv, rg, rh, m, mv

    def breakdown_from_terms(self, r, m) -> LossBreakdown:
        vol = self.volume
        residual_term = vol * float(np.mean(r * r))
        norm_estimate = vol * float(np.mean(m))
        penalty_term = self.mu * (norm_estimate - 1.0) ** 2
        return LossBreakdown(
            total=residual_term + penalty_term,
            residual_term=residual_term,
            penalty_term=penalty_term,
            norm_estimate=norm_estimate,
            mu_used=self.mu,
        )

    def evaluate(self, u, Gu, Hu) -> LossBreakdown:
        r, _, _, _, m, _ = self._terms(u, Gu, Hu)
        return self.breakdown_from_terms(r, m)

    def __call__(self, u, Gu, Hu):
        r, rv, rg, rh, m, mv = self._terms(u, Gu, Hu)
        bd = self.breakdown_from_terms(r, m)
        n = u.shape[0]
        cn = 2.0 * self.volume / n
        wv = cn * (r * rv + self.mu * (bd.norm_estimate - 1.0) * mv)
        wg = cn * r[:, None] * rg
        wh = cn * r[:, None, None] * rh
        return bd, (wv, wg, wh)


def assemble_loss(params, batch: PointBatch, op, E: float, cfg: LossConfig, domain: Domain,
                  bjets=None) -> LossBreakdown:
    """Penalized Monte Carlo loss of the trial function on one batch.

    Matches the value produced by ``network.loss_gradient`` with the same
    TrialLoss bit for bit: both paths evaluate the same jets and reduce in the
    same order.
    """
    loss = TrialLoss(op, E, cfg, domain, batch)
    u, Gu, Hu = network.trial_jets(params, domain, batch.points,
                                   bjets=bjets if bjets is not None else loss.bjets)
    return loss.evaluate(u, Gu, Hu)


def operator_from_dict(spec: dict):
    kind = spec.get("kind", "linear")
    if kind == "linear":
        pot = spec.get("potential", {"kind": "zero"})
        return LinearOperator(potential=Potential(pot.get("kind", "zero"), pot.get("omega", 1.0)))
    if kind == "plaplace":
        return PLaplaceOperator(p=float(spec["p"]), grad_floor=float(spec.get("grad_floor", 1e-8)))
    raise ValueError(f"unknown operator kind: {kind!r}")
