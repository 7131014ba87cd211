"""Loss assembly and the training loop.

Methods:
    erm        task loss only
    grad-reg   + lam * sum-of-squared masked input saliency
    avg-ex     + (alpha/K) * masked-Gaussian-noise losses
    pgd-ex     + alpha * loss at the masked PGD point
    ibp-ex     + alpha(t) * worst-case-logit loss over the masked box
    pgd+grad   pgd-ex plus the saliency penalty
    ibp+grad   ibp-ex plus the saliency penalty
Weight decay 0.5 * beta * |theta|^2 is added for every method when
beta > 0. Loss terms sum over the batch (not mean), so lam and beta
weigh the penalty against the summed task loss; history rows report
per-example averages for readability.

The box radius ramps linearly 0 -> eps_max over the first
``ramp_fraction`` of training and the robust weight alpha ramps
1 -> 0.5 over the same window (ibp methods only); both schedules are
functions of the global step fraction.

Input saliency is the gradient of the summed log class probabilities,
so the penalty needs a second differentiation through the backward
pass, which the autodiff engine supports directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import intervals, metrics, perturb, rng
from .model import MlpSpec, ModelParams, init_params, logits_graph, param_tensors, predict

METHODS = ("erm", "grad-reg", "avg-ex", "pgd-ex", "ibp-ex", "pgd+grad", "ibp+grad")


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the epoch/step where it happened."""


@dataclass
class TrainingConfig:
    method: str = "erm"
    lam: float = 0.0  # saliency-penalty weight
    beta: float = 0.0  # weight-decay coefficient
    eps_max: float = 0.0  # final box radius (ibp methods)
    ramp_fraction: float = 0.5
    perturb: perturb.PerturbConfig = field(default_factory=perturb.PerturbConfig)
    clamp: tuple[float, float] | None = None  # data range for boxes/attacks
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if min(self.lam, self.beta) < 0:
            raise ValueError("lam and beta must be >= 0")
        if not 0 < self.ramp_fraction <= 1:
            raise ValueError("ramp_fraction must be in (0, 1]")


def eps_schedule(cfg: TrainingConfig, step_fraction: float) -> float:
    return cfg.eps_max * min(1.0, step_fraction / cfg.ramp_fraction)


def alpha_schedule(cfg: TrainingConfig, step_fraction: float) -> float:
    """Robust-loss weight for the box methods: the configured alpha damped
    linearly to half its value over the ramp window."""
    return cfg.perturb.alpha * (1.0 - 0.5 * min(1.0, step_fraction / cfg.ramp_fraction))


def _saliency_graph(ptensors, xt: ad.Tensor) -> ad.Tensor:
    """Input gradient of the summed log class probabilities.

    A single-output model has no class distribution; its saliency is
    the gradient of the raw output.
    """
    z = logits_graph(ptensors, xt)
    score = ad.tsum(z if z.shape[1] == 1 else ad.log_softmax(z, axis=-1))
    (g,) = ad.grad(score, [xt])
    return g


def importance_scores(params, x: np.ndarray) -> np.ndarray:
    """Per-coordinate saliency of each example in x."""
    pt = params if isinstance(params, list) else param_tensors(params)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return _saliency_graph(pt, ad.tensor(x)).data


def saliency_penalty_graph(ptensors, x, m) -> ad.Tensor:
    """Sum over the batch of |saliency * mask|^2, differentiable in theta."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    g = _saliency_graph(ptensors, ad.tensor(x))
    return ad.tsum(ad.square(ad.mul(g, ad.tensor(m))))


def grad_reg_term(params, x, m) -> float:
    return saliency_penalty_graph(param_tensors(params) if not isinstance(params, list) else params, x, m).item()


def _weight_decay_graph(ptensors, beta: float) -> ad.Tensor:
    total = None
    for p in ptensors:
        term = ad.tsum(ad.square(p))
        total = term if total is None else ad.add(total, term)
    return ad.mul(ad.tensor(0.5 * beta), total)


def total_loss_graph(
    ptensors,
    x,
    y,
    m,
    cfg: TrainingConfig,
    step_fraction: float,
    noise_rng: np.random.Generator | None = None,
) -> tuple[ad.Tensor, dict]:
    """Scalar training loss plus a breakdown {task, robust, reg, wd}."""
    if not 0 <= step_fraction <= 1:
        raise ValueError("step_fraction must be in [0, 1]")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    task = ad.cross_entropy(logits_graph(ptensors, ad.tensor(x)), y, reduction="sum")
    robust = None
    reg = None

    method = cfg.method
    if method in ("grad-reg", "pgd+grad", "ibp+grad") and cfg.lam > 0:
        reg = ad.mul(ad.tensor(cfg.lam), saliency_penalty_graph(ptensors, x, m))
    if method == "avg-ex":
        pcfg = replace(cfg.perturb, method="avg")
        robust = perturb.masked_noise_loss_graph(ptensors, x, y, m, pcfg, noise_rng)
    elif method in ("pgd-ex", "pgd+grad"):
        pcfg = cfg.perturb
        delta = perturb.pgd_attack(
            ptensors, x, y, m, pcfg.kappa, pcfg.steps, pcfg.step_size,
            clamp=cfg.clamp, rng=noise_rng, random_start=pcfg.random_start,
        )
        robust = perturb.adversarial_loss_graph(ptensors, x, y, delta, pcfg.alpha)
    elif method in ("ibp-ex", "ibp+grad"):
        eps = eps_schedule(cfg, step_fraction)
        alpha = alpha_schedule(cfg, step_fraction)
        wc = intervals.worst_case_loss_graph(ptensors, x, y, m, eps, clamp=cfg.clamp)
        robust = ad.mul(ad.tensor(alpha), wc)

    total = task
    if robust is not None:
        total = ad.add(total, robust)
    if reg is not None:
        total = ad.add(total, reg)
    wd = None
    if cfg.beta > 0:
        wd = _weight_decay_graph(ptensors, cfg.beta)
        total = ad.add(total, wd)
    parts = {
        "task": task.item(),
        "robust": 0.0 if robust is None else robust.item(),
        "reg": 0.0 if reg is None else reg.item(),
        "wd": 0.0 if wd is None else wd.item(),
    }
    return total, parts


def total_loss(params, x, y, m, cfg: TrainingConfig, step_fraction: float, noise_rng=None) -> float:
    pt = params if isinstance(params, list) else param_tensors(params)
    loss, _ = total_loss_graph(pt, x, y, m, cfg, step_fraction, noise_rng)
    return loss.item()


class Adam:
    """Standard Adam with bias correction; operates on a list of arrays."""

    def __init__(self, arrays: list[np.ndarray], lr: float):
        self.lr = lr
        self.b1, self.b2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _val_metrics(params: ModelParams, split) -> tuple[float, float]:
    preds = predict(params, split.x)
    return (
        metrics.macro_avg_accuracy(preds, split.y),
        metrics.worst_group_accuracy(preds, split.y, split.group),
    )


@dataclass
class TrainResult:
    """Selected checkpoint plus the raw end-of-training state.

    ``params`` is the epoch with the best validation worst-group
    accuracy (ties broken by the earliest epoch); ``final_params`` is
    the last epoch, for analyses where the clean-validation metric
    saturates early and cannot distinguish checkpoints. Iterates as
    (params, history).
    """

    params: ModelParams
    final_params: ModelParams
    history: list[dict]
    best_epoch: int

    def __iter__(self):
        return iter((self.params, self.history))


def train(splits, cfg: TrainingConfig, spec: MlpSpec | None = None) -> TrainResult:
    """Adam training with per-epoch validation; the selected checkpoint
    maximises validation worst-group accuracy (ties broken by earliest
    epoch)."""
    tr, va = splits.train, splits.val
    if tr.x.shape[0] == 0 or va.x.shape[0] == 0:
        raise ValueError("train and val splits must be non-empty")
    if spec is None:
        spec = MlpSpec(tr.x.shape[1], (32, 32), int(tr.y.max()) + 1)
    params = init_params(spec, rng.stream(cfg.seed, "init"))
    shuffle_rng = rng.stream(cfg.seed, "shuffle")
    noise_rng = rng.stream(cfg.seed, "noise")
    opt = Adam(params.flat(), cfg.lr)

    n = tr.x.shape[0]
    steps_per_epoch = max(1, -(-n // cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    history: list[dict] = []
    best = (-1.0, 0, params.copy())  # (val wg acc, epoch, params)

    step_idx = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        sums = {"task": 0.0, "robust": 0.0, "reg": 0.0}
        seen = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            frac = step_idx / max(1, total_steps)
            pt = param_tensors(params)
            try:
                loss, parts = total_loss_graph(pt, tr.x[idx], tr.y[idx], tr.m[idx], cfg, frac, noise_rng)
                grads = ad.grad(loss, pt)
            except ad.NonFiniteError as err:
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step_idx}: {err}") from err
            opt.step(params.flat(), [g.data for g in grads])
            for key in sums:
                sums[key] += parts[key] * idx.size
            seen += idx.size
            step_idx += 1
        val_avg, val_wg = _val_metrics(params, va)
        row = {
            "epoch": epoch,
            "train_loss": sums["task"] / seen,
            "robust_loss": sums["robust"] / seen,
            "reg_loss": sums["reg"] / seen,
            "val_avg_acc": val_avg,
            "val_wg_acc": val_wg,
        }
        history.append(row)
        if val_wg > best[0]:
            best = (val_wg, epoch, params.copy())
    return TrainResult(best[2], params, history, best[1])
