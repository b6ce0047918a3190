"""Bregman-score objectives and the inner fitting loop.

Three objectives for the scalar field, all with optional gradient penalty:

* least-squares ratio fitting: mean R(X)^2 - 2 mean R(Y),
* logistic-regression ratio fitting with g(x) = x log x - (x+1) log(x+1),
  applied to softplus(net) so the estimate stays positive,
* density-difference fitting with g(c) = c^2 under a pooled base sample.

The penalty is the weighted squared-gradient regularizer
alpha/2 * mean g''(R(X)) ||grad R(X)||^2 over the target batch, which for the
least-squares g reduces to alpha * mean ||grad R(X)||^2.  Parameter gradients
of the penalty are exact: the input gradient is a graph node, so its squared
norm back-propagates to the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .nets import ScalarFieldNet
from .rng import stream

VARIANTS = ("lsdr", "lr", "density-diff")

LOSS_DIVERGENCE_LIMIT = 1e6


class FitDivergedError(RuntimeError):
    """The empirical loss became non-finite or left [-1e6, 1e6]."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class FitObjective:
    """Which Bregman score to fit, and how strongly to penalize gradients."""

    variant: str = "lsdr"
    alpha: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown objective variant {self.variant!r}; known: {VARIANTS}")
        if self.alpha < 0:
            raise ValueError("gradient-penalty coefficient must be >= 0")


@dataclass
class FitReport:
    """Per-step trajectories of one inner fitting loop."""

    losses: list = field(default_factory=list)
    base_losses: list = field(default_factory=list)
    penalties: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.losses)

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


@dataclass
class LossEval:
    """One objective evaluation: value, exact parameter gradients, diagnostics."""

    value: float
    base: float
    penalty: float
    mean_grad_norm: float
    grads: list


class PositiveField:
    """softplus(net), the positive ratio estimate used by the LR objective."""

    def __init__(self, net: ScalarFieldNet):
        self.net = net

    def values(self, xs):
        tape = ad.Tape()
        out, _, _ = self.net.graph(tape, xs, trainable=False)
        return ad.softplus(out).value[:, 0]

    def values_and_input_grads(self, xs):
        tape = ad.Tape()
        out, x, _ = self.net.graph(tape, xs, trainable=False)
        sp = ad.softplus(out)
        gx = tape.grad(ad.vsum(sp), x)
        return sp.value[:, 0], gx.value


def fitted_field(objective: FitObjective, net: ScalarFieldNet):
    """The scalar field the objective actually fits (identity or softplus)."""
    return PositiveField(net) if objective.variant == "lr" else net


def _finalize(tape, params, loss, base, penalty, gx) -> LossEval:
    value = loss.item()
    if not np.isfinite(value):
        raise FitDivergedError(f"non-finite loss {value!r}")
    tape.backward(loss)
    grads = [p.grad for p in params]
    row_norms = np.sqrt(np.sum(gx.value**2, axis=1))
    return LossEval(
        value=value,
        base=base.item(),
        penalty=penalty.item(),
        mean_grad_norm=float(np.mean(row_norms)),
        grads=grads,
    )


def lsdr_loss(net: ScalarFieldNet, x_target: np.ndarray, y_model: np.ndarray, alpha: float) -> LossEval:
    """mean R(X)^2 - 2 mean R(Y) + alpha * mean ||grad R(X)||^2, with gradients."""
    x_target = np.asarray(x_target, dtype=np.float64)
    y_model = np.asarray(y_model, dtype=np.float64)
    tape = ad.Tape()
    params = net.param_leaves(tape)
    xv = tape.leaf(x_target)
    yv = tape.leaf(y_model)
    out_x = net.apply(xv, params)
    out_y = net.apply(yv, params)
    base = ad.vmean(ad.square(out_x)) - 2.0 * ad.vmean(out_y)
    gx = tape.grad(ad.vsum(out_x), xv)
    penalty = ad.mul(ad.vsum(ad.square(gx)), 1.0 / x_target.shape[0])
    loss = base + alpha * penalty if alpha > 0 else base
    return _finalize(tape, params, loss, base, penalty, gx)


def lr_bregman_score(values_p: np.ndarray, values_q: np.ndarray) -> float:
    """Logistic-regression Bregman score from positive field values.

    With g(x) = x log x - (x+1) log(x+1): g'(R) R - g(R) = log(1 + R) and
    g'(R) = log(R / (1 + R)), so the score is
    mean_p log(1 + R) - mean_q [log R - log(1 + R)].
    """
    vp = np.asarray(values_p, dtype=np.float64)
    vq = np.asarray(values_q, dtype=np.float64)
    return float(np.mean(np.log1p(vp)) - np.mean(np.log(vq) - np.log1p(vq)))


def lr_loss(net: ScalarFieldNet, x_target: np.ndarray, y_model: np.ndarray, alpha: float) -> LossEval:
    """LR Bregman score of softplus(net) plus the g''-weighted gradient penalty."""
    x_target = np.asarray(x_target, dtype=np.float64)
    y_model = np.asarray(y_model, dtype=np.float64)
    tape = ad.Tape()
    params = net.param_leaves(tape)
    xv = tape.leaf(x_target)
    yv = tape.leaf(y_model)
    rx = ad.softplus(net.apply(xv, params))
    ry = ad.softplus(net.apply(yv, params))
    term_p = ad.vmean(ad.log(1.0 + rx))
    term_q = ad.vmean(ad.log(ry) - ad.log(1.0 + ry))
    base = term_p - term_q
    gx = tape.grad(ad.vsum(rx), xv)
    # g''(x) = 1 / (x (x + 1)); the penalty carries the 1/2 of its derivation.
    weights = ad.div(1.0, ad.mul(rx, 1.0 + rx))
    row_sq = ad.vsum(ad.square(gx), axis=1, keepdims=True)
    penalty = ad.mul(ad.vsum(ad.mul(weights, row_sq)), 0.5 / x_target.shape[0])
    loss = base + alpha * penalty if alpha > 0 else base
    return _finalize(tape, params, loss, base, penalty, gx)


def density_diff_loss(
    net: ScalarFieldNet,
    x_target: np.ndarray,
    y_model: np.ndarray,
    w_base: np.ndarray,
    alpha: float,
) -> LossEval:
    """2 mean D(X) - 2 mean D(Y) + mean D(W)^2 plus the gradient penalty.

    ``w_base`` is a batch from the base measure; by default the transport
    loop pools target and particle samples for it, so the quadratic term is
    anchored on the union of both supports.
    """
    x_target = np.asarray(x_target, dtype=np.float64)
    y_model = np.asarray(y_model, dtype=np.float64)
    tape = ad.Tape()
    params = net.param_leaves(tape)
    xv = tape.leaf(x_target)
    yv = tape.leaf(y_model)
    wv = tape.leaf(np.asarray(w_base, dtype=np.float64))
    out_x = net.apply(xv, params)
    out_y = net.apply(yv, params)
    out_w = net.apply(wv, params)
    base = 2.0 * ad.vmean(out_x) - 2.0 * ad.vmean(out_y) + ad.vmean(ad.square(out_w))
    gx = tape.grad(ad.vsum(out_x), xv)
    penalty = ad.mul(ad.vsum(ad.square(gx)), 1.0 / x_target.shape[0])
    loss = base + alpha * penalty if alpha > 0 else base
    return _finalize(tape, params, loss, base, penalty, gx)


def objective_loss(
    objective: FitObjective,
    net: ScalarFieldNet,
    x_target: np.ndarray,
    y_model: np.ndarray,
    w_base: np.ndarray | None = None,
) -> LossEval:
    if objective.variant == "lsdr":
        return lsdr_loss(net, x_target, y_model, objective.alpha)
    if objective.variant == "lr":
        return lr_loss(net, x_target, y_model, objective.alpha)
    if w_base is None:
        w_base = np.concatenate([x_target, y_model], axis=0)
    return density_diff_loss(net, x_target, y_model, w_base, objective.alpha)


def minibatch_indices(seed: int, label: str, n: int, batch: int, step: int) -> np.ndarray:
    """Without-replacement batch for global step ``step``.

    Each epoch is a fresh named-stream permutation of ``range(n)`` cut into
    ``n // batch`` batches; the epoch and the slot inside it are derived from
    the step index alone, which keeps resumed runs on the exact same batches.
    """
    per_epoch = n // batch
    if per_epoch == 0:
        raise ValueError(f"batch size {batch} exceeds population {n}")
    epoch, slot = divmod(step, per_epoch)
    perm = stream(seed, label, "epoch", epoch).permutation(n)
    return perm[slot * batch : (slot + 1) * batch]


def fit_step_loop(
    objective: FitObjective,
    net: ScalarFieldNet,
    data_target: np.ndarray,
    particles: np.ndarray,
    steps: int,
    optimizer,
    batch_size: int,
    seed: int = 0,
    step_offset: int = 0,
) -> FitReport:
    """Run ``steps`` minibatch updates of the objective; the net mutates in place.

    Batches are drawn without replacement within an epoch, independently for
    the target sample and the particle pool.  Raises :class:`FitDivergedError`
    (with the partial report attached) if the loss leaves [-1e6, 1e6].
    """
    if steps < 1:
        raise ValueError("the inner loop needs at least one step")
    if batch_size < 1 or batch_size > min(len(data_target), len(particles)):
        raise ValueError(
            f"batch size {batch_size} must lie in [1, min(|data|={len(data_target)}, "
            f"|particles|={len(particles)})]"
        )
    report = FitReport()
    for j in range(steps):
        step = step_offset + j
        idx_x = minibatch_indices(seed, "fit-target", len(data_target), batch_size, step)
        idx_y = minibatch_indices(seed, "fit-particles", len(particles), batch_size, step)
        xb, yb = data_target[idx_x], particles[idx_y]
        wb = None
        if objective.variant == "density-diff":
            wb = np.concatenate([xb, yb], axis=0)
        try:
            ev = objective_loss(objective, net, xb, yb, w_base=wb)
        except FitDivergedError as err:
            raise FitDivergedError(str(err), report=report) from None
        if abs(ev.value) > LOSS_DIVERGENCE_LIMIT:
            raise FitDivergedError(f"loss {ev.value:.3e} exceeded {LOSS_DIVERGENCE_LIMIT:.0e}", report=report)
        optimizer.step(net.params(), ev.grads)
        report.losses.append(ev.value)
        report.base_losses.append(ev.base)
        report.penalties.append(ev.penalty)
        report.grad_norms.append(ev.mean_grad_norm)
    return report
