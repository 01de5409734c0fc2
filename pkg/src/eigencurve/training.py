"""Adam minimization of the penalized loss at one fixed spectral value E."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import network
from .errors import NonFiniteLossError
from .geometry import Domain, sample_interior
from .residuals import LossBreakdown, LossConfig, TrialLoss, assemble_loss
from .seeding import TAG_RESAMPLE, TAG_TRAIN_BATCH, TAG_VAL_BATCH, derive_seed


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_steps: int = 2000          # cold-start budget
    warm_max_steps: int = 600      # budget when warm-started along the sweep
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rel_improve_tol: float = 1e-4
    patience: int = 5
    check_every: int = 50
    lr_decay: float = 1.0          # explicit multiplicative decay per step; 1.0 disables
    # per-call schedule: hold the rate for lr_hold_frac of the budget, then decay
    # geometrically to lr*lr_end_frac. The hold phase preserves the ability to
    # escape a destabilized eigenbranch (growth goes like exp(sum of rates)); the
    # tail kills the stochastic jitter before the loss is read out.
    lr_hold_frac: float = 0.7
    lr_end_frac: float = 0.02
    # refinement-stage budget: fixed step count with a decaying rate, so the
    # refined curve is a smooth function of E and its argmin is trustworthy
    # readout uses an exponential moving average of the iterates (bias
    # corrected); averaging suppresses the stochastic-gradient jitter that a
    # decayed rate alone would need many more steps to kill
    iterate_avg: float = 0.02      # EMA rate; 0 disables (readout = last iterate)
    refine_max_steps: int = 800
    refine_lr: float = 3e-4
    refine_lr_end_frac: float = 0.02
    refine_lr_hold_frac: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise ValueError("adam betas must lie strictly between 0 and 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_steps < 1 or self.warm_max_steps < 1:
            raise ValueError("step budgets must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")
        if not 0.0 < self.lr_end_frac <= 1.0:
            raise ValueError("lr_end_frac must lie in (0, 1]")
        if not 0.0 <= self.lr_hold_frac <= 1.0:
            raise ValueError("lr_hold_frac must lie in [0, 1]")
        if not 0.0 <= self.iterate_avg < 1.0:
            raise ValueError("iterate_avg must lie in [0, 1)")
        if self.refine_max_steps < 1:
            raise ValueError("refine_max_steps must be >= 1")
        if not self.refine_lr > 0:
            raise ValueError("refine_lr must be positive")
        if not 0.0 < self.refine_lr_end_frac <= 1.0:
            raise ValueError("refine_lr_end_frac must lie in (0, 1]")
        if not 0.0 <= self.refine_lr_hold_frac <= 1.0:
            raise ValueError("refine_lr_hold_frac must lie in [0, 1]")


@dataclass(frozen=True)
class TrainReport:
    final: LossBreakdown          # evaluated on the validation batch
    final_train: LossBreakdown    # evaluated on the training batch (the curve value)
    steps_run: int
    stop_reason: str              # converged | max_steps | diverged
    loss_history: tuple           # decimated ((step, training total), ...)


def minimize(theta0: np.ndarray, objective, cfg: TrainConfig, max_steps: int | None = None,
             early_stop: bool = True):
    """Adam on a flat parameter vector.

    ``objective(theta) -> (total, grad)``; returns (theta, steps_run, stop_reason,
    history). Divergence (non-finite total or NonFiniteLossError) rolls back to
    the last finite iterate.
    """
    steps = cfg.max_steps if max_steps is None else max_steps
    if steps < 1:
        raise ValueError("max_steps must be >= 1")
    theta = np.array(theta0, dtype=float)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    lr = cfg.learning_rate
    # an explicit per-step decay wins; otherwise hold, then decay geometrically
    # over the remaining fraction of the call
    hold_until = 0
    if cfg.lr_decay != 1.0:
        step_decay = cfg.lr_decay
    elif cfg.lr_end_frac != 1.0:
        hold_until = int(cfg.lr_hold_frac * steps)
        tail = max(1, steps - hold_until)
        step_decay = cfg.lr_end_frac ** (1.0 / tail)
    else:
        step_decay = 1.0
    history = []
    best = np.inf
    best_at_last_check = np.inf
    stalled = 0
    stop_reason = "max_steps"
    steps_run = 0
    alpha = cfg.iterate_avg
    ema = np.zeros_like(theta)
    ema_norm = 0.0
    for t in range(1, steps + 1):
        prev = theta.copy()
        try:
            total, grad = objective(theta)
        except NonFiniteLossError:
            total, grad = np.nan, None
        if not np.isfinite(total):
            theta = prev
            stop_reason = "diverged"
            break
        steps_run = t
        if t == 1 or t % cfg.check_every == 0:
            history.append((t - 1, float(total)))
        best = min(best, float(total))
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        mhat = m / (1.0 - b1**t)
        vhat = v / (1.0 - b2**t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
        if alpha > 0.0:
            ema = (1.0 - alpha) * ema + alpha * theta
            ema_norm = (1.0 - alpha) * ema_norm + alpha
        if step_decay != 1.0 and t > hold_until:
            lr *= step_decay
        if early_stop and t % cfg.check_every == 0:
            improved = best_at_last_check - best
            if improved <= cfg.rel_improve_tol * max(abs(best_at_last_check), 1e-300):
                stalled += 1
                if stalled >= cfg.patience:
                    stop_reason = "converged"
                    break
            else:
                stalled = 0
            best_at_last_check = best
    if alpha > 0.0 and ema_norm > 0.0 and stop_reason != "diverged":
        theta = ema / ema_norm
    return theta, steps_run, stop_reason, tuple(history)


def train_batches(domain: Domain, loss_cfg: LossConfig, seed: int):
    """The (train, validation) batches a run with this seed uses."""
    train = sample_interior(domain, loss_cfg.n_train, derive_seed(seed, TAG_TRAIN_BATCH))
    val = sample_interior(domain, loss_cfg.n_val, derive_seed(seed, TAG_VAL_BATCH))
    return train, val


def train_at_E(init: network.MlpParams, E: float, op, domain: Domain,
               loss_cfg: LossConfig, train_cfg: TrainConfig, seed: int,
               max_steps: int | None = None, early_stop: bool = True):
    """Minimize the penalized loss at fixed E starting from ``init``.

    Deterministic in all arguments. Returns (params, TrainReport); the report
    carries the validation breakdown (final) and the training-batch breakdown
    (final_train) of the returned parameters.
    """
    train_batch, val_batch = train_batches(domain, loss_cfg, seed)
    widths = init.widths

    if loss_cfg.resample_each_step:
        step_counter = [0]

        def objective(theta):
            step_counter[0] += 1
            batch = sample_interior(domain, loss_cfg.n_train,
                                    derive_seed(seed, TAG_RESAMPLE, step_counter[0]))
            loss = TrialLoss(op, E, loss_cfg, domain, batch)
            params = network.vector_to_params(theta, widths, seed=init.seed)
            bd, grad = network.loss_gradient(params, batch, loss, bjets=loss.bjets)
            return bd.total, grad.to_vector()
    else:
        loss = TrialLoss(op, E, loss_cfg, domain, train_batch)

        def objective(theta):
            params = network.vector_to_params(theta, widths, seed=init.seed)
            bd, grad = network.loss_gradient(params, train_batch, loss, bjets=loss.bjets)
            return bd.total, grad.to_vector()

    theta0 = network.params_to_vector(init)
    theta, steps_run, stop_reason, history = minimize(
        theta0, objective, train_cfg, max_steps=max_steps, early_stop=early_stop)
    params = network.vector_to_params(theta, widths, seed=init.seed)
    final_val = assemble_loss(params, val_batch, op, E, loss_cfg, domain)
    final_train = assemble_loss(params, train_batch, op, E, loss_cfg, domain)
    report = TrainReport(final=final_val, final_train=final_train, steps_run=steps_run,
                         stop_reason=stop_reason, loss_history=history)
    return params, report
