"""Losses, exact gradients, robustness-enhanced updates, and regularizers.

The training objective is a sum of the cross-entropy loss over the current
mini-batch plus, depending on the method variant, either a replay loss over
core-set exemplars (confidence-downscaled for the proposed method, plain for
the replay baselines) or a quadratic parameter-drift penalty weighted by an
importance vector (the parameter-regularization baselines).

The robustness-enhanced step first climbs to the worst-case point within an
L2 ball of radius epsilon around theta (the normalized-gradient direction from
a first-order expansion), then descends along the gradient evaluated there.
The gradient machinery is the hand-written reverse mode from the model module
and is contract-tested against central finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import model as m

LOG_CLAMP = 1e-12
VARIANTS = ("proposed", "er_kmeans", "er_herding", "pr_ewc", "pr_mas",
            "bl_ft", "bl_cumulative", "bl_er_rand", "bl_nondistill")
REPLAY_VARIANTS = ("proposed", "er_kmeans", "er_herding", "bl_er_rand", "bl_nondistill")
PR_VARIANTS = ("pr_ewc", "pr_mas")
# only the proposed method softens the exemplar logits during training
DISTILLED_VARIANTS = ("proposed",)


class NumericalError(FloatingPointError):
    """Loss or gradient became non-finite; surfaced instead of silently diverging."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    iterations: int = 500
    batch_size: int | None = 32            # None trains full-batch
    deviation_radius: float = 0.03
    replay_batch: str = "minibatch"         # or "full"
    seed: int = 0
    variant: str = "proposed"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.iterations < 0:
            raise ValueError("iteration count must be nonnegative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.deviation_radius < 0:
            raise ValueError("deviation radius must be nonnegative")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.replay_batch not in ("minibatch", "full"):
            raise ValueError("replay_batch must be 'minibatch' or 'full'")


@dataclass
class ImportanceVector:
    """Per-parameter importance weights around an anchor parameter vector."""

    weights: np.ndarray
    anchor: np.ndarray

    def __post_init__(self):
        if self.weights.shape != self.anchor.shape:
            raise ValueError("importance weights and anchor must have equal length")
        if np.any(self.weights < 0):
            raise ValueError("importance weights must be nonnegative")

    def penalty(self, theta: np.ndarray) -> float:
        d = theta - self.anchor
        return 0.5 * float(np.dot(self.weights, d * d))

    def penalty_grad(self, theta: np.ndarray) -> np.ndarray:
        return self.weights * (theta - self.anchor)


def ce_loss(p: np.ndarray, target: np.ndarray) -> float:
    """Cross entropy -sum(target * log p) with the usual log clamp; target may be soft."""
    p = np.asarray(p, dtype=float)
    target = np.asarray(target, dtype=float)
    if p.shape != target.shape:
        raise ValueError("prediction and target lengths differ")
    return float(-np.sum(target * np.log(np.maximum(p, LOG_CLAMP))))


def _batch_ce_and_dlogits(logits: np.ndarray, targets: np.ndarray, eta: float = 1.0):
    """Summed CE of softmax(logits/eta) against targets, and d(loss)/d(logits)."""
    probs = m.softmax(logits / eta)
    loss = -np.sum(targets * np.log(np.maximum(probs, LOG_CLAMP)))
    return float(loss), (probs - targets) / eta


@dataclass
class BatchData:
    """A padded batch bound to targets; the unit the objective consumes."""

    x: np.ndarray          # (B, N, L_P)
    mask: np.ndarray       # (B, N) bool
    targets: np.ndarray    # (B, C)

    @classmethod
    def from_sequences(cls, xs: list[np.ndarray], targets: np.ndarray, dtype=None):
        x, mask = m.pad_batch(xs, dtype=dtype)
        return cls(x, mask, np.asarray(targets, dtype=float))

    def take(self, idx: np.ndarray) -> "BatchData":
        """Row subset, re-trimmed to the subset's longest sequence."""
        mask = self.mask[idx]
        width = int(mask.sum(axis=1).max())
        return BatchData(self.x[idx][:, :width], mask[:, :width], self.targets[idx])

    @staticmethod
    def concat(a: "BatchData", b: "BatchData") -> "BatchData":
        width = max(a.x.shape[1], b.x.shape[1])
        total = a.x.shape[0] + b.x.shape[0]
        x = np.zeros((total, width, a.x.shape[2]), dtype=a.x.dtype)
        mask = np.zeros((total, width), dtype=bool)
        x[:a.x.shape[0], :a.x.shape[1]] = a.x
        mask[:a.x.shape[0], :a.x.shape[1]] = a.mask
        x[a.x.shape[0]:, :b.x.shape[1]] = b.x
        mask[a.x.shape[0]:, :b.x.shape[1]] = b.mask
        return BatchData(x, mask, np.concatenate([a.targets, b.targets], axis=0))


def make_objective(config: m.ModelConfig, batch: BatchData,
                   replay: BatchData | None = None, eta: float = 1.0,
                   importance: ImportanceVector | None = None,
                   train_mode: bool = False,
                   dropout_rng: np.random.Generator | None = None):
    """Closure theta -> (loss, grad) for one optimization step.

    Current-domain rows go through the plain predictor; replay rows go through
    the confidence-downscaled predictor (eta); the importance penalty, when
    present, adds 0.5 * sum_i v_i (theta_i - anchor_i)^2.
    """
    if replay is not None and importance is not None:
        raise ValueError("replay exemplars and an importance penalty are exclusive")
    n_cur = batch.x.shape[0]
    if replay is not None:
        combined = BatchData.concat(batch, replay)
        x, mask, targets = combined.x, combined.mask, combined.targets
    else:
        x, mask, targets = batch.x, batch.mask, batch.targets

    def objective(theta: np.ndarray):
        params = m.ModelParams.from_flat(config, theta)
        logits, cache = m.forward_batch(params, x, mask, train_mode, dropout_rng)
        loss, dlogits = _batch_ce_and_dlogits(logits[:n_cur], targets[:n_cur])
        if n_cur < x.shape[0]:
            r_loss, r_dlogits = _batch_ce_and_dlogits(logits[n_cur:], targets[n_cur:], eta)
            loss += r_loss
            dlogits = np.concatenate([dlogits, r_dlogits], axis=0)
        grad = m.backward_batch(params, cache, dlogits.astype(theta.dtype, copy=False))
        if importance is not None:
            loss += importance.penalty(theta)
            grad += importance.penalty_grad(theta)
        if not np.isfinite(loss):
            raise NumericalError("objective value is not finite")
        return loss, grad

    return objective


def gradient(theta: np.ndarray, objective) -> np.ndarray:
    """Gradient of an objective closure at theta; rejects non-finite results."""
    _, grad = objective(theta)
    norm = float(np.linalg.norm(grad))
    if not np.isfinite(norm):
        raise NumericalError("gradient is not finite")
    return grad


def sam_step(theta: np.ndarray, objective, learning_rate: float,
             deviation_radius: float):
    """One robustness-enhanced update.

    Climbs by delta = eps * g / ||g|| (the first-order worst case within the
    eps-ball), then takes the descent step with the gradient evaluated at the
    climbed point; the curvature correction of the exact gradient is omitted.
    With eps = 0 this is exactly one plain gradient-descent step.

    Returns (new_theta, loss_at_theta, grad_norm_at_theta).
    """
    if deviation_radius < 0:
        raise ValueError("deviation radius must be nonnegative")
    loss, g1 = objective(theta)
    norm = float(np.linalg.norm(g1))
    if not np.isfinite(norm):
        raise NumericalError("gradient is not finite")
    if deviation_radius == 0.0:
        return theta - learning_rate * g1, float(loss), norm
    if norm < 1e-12:
        g2 = g1
    else:
        delta = (deviation_radius / norm) * g1
        _, g2 = objective(theta + delta)
    return theta - learning_rate * g2, float(loss), norm


def estimate_importance(params: m.ModelParams, xs: list[np.ndarray],
                        targets: np.ndarray, method: str,
                        n_samples: int | None = None) -> ImportanceVector:
    """Diagonal importance of each parameter for the given dataset.

    ewc: mean squared per-sample gradient of the CE loss (diagonal Fisher
    estimate); mas: mean absolute per-sample gradient of half the squared
    logit norm.  Samples are taken at evenly spaced indices so class-blocked
    datasets stay represented.  The anchor is the current parameter vector.
    """
    if method not in ("ewc", "mas"):
        raise ValueError("method must be 'ewc' or 'mas'")
    total = len(xs)
    if n_samples is None:
        n_samples = total
    if not 1 <= n_samples <= total:
        raise ValueError("n_samples must lie in [1, len(dataset)]")
    idx = np.unique(np.linspace(0, total - 1, n_samples).astype(int))
    acc = np.zeros_like(params.flat)
    for i in idx:
        logits, cache = m.forward_batch(params, xs[i][None])
        if method == "ewc":
            _, dlogits = _batch_ce_and_dlogits(logits, targets[i][None])
        else:
            dlogits = logits        # gradient of 0.5 * ||logits||^2
        g = m.backward_batch(params, cache, dlogits.astype(params.flat.dtype, copy=False))
        acc += g * g if method == "ewc" else np.abs(g)
    acc /= len(idx)
    return ImportanceVector(weights=acc, anchor=params.flat.copy())


def effective_radius(cfg: TrainConfig) -> float:
    """Only the proposed method uses the robustness-enhanced step."""
    return cfg.deviation_radius if cfg.variant == "proposed" else 0.0


def train_epochs(params: m.ModelParams, data: BatchData, cfg: TrainConfig,
                 replay_pool: BatchData | None = None, eta: float = 1.0,
                 importance: ImportanceVector | None = None):
    """Iterate the variant's update rule for cfg.iterations steps.

    Each step draws a uniform mini-batch from the domain data plus, when a
    replay pool is present, min(|pool|, batch_size) exemplars.  The loss trace
    rows are (iteration, loss, grad_norm) recorded before each update.
    """
    n = data.x.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty domain dataset")
    ss = np.random.SeedSequence(cfg.seed)
    batch_rng, dropout_rng = [np.random.default_rng(s) for s in ss.spawn(2)]
    eps = effective_radius(cfg)
    theta = params.flat
    trace = np.empty((cfg.iterations, 3))
    bs = cfg.batch_size
    for it in range(cfg.iterations):
        if bs is None or bs >= n:
            batch = data
        else:
            batch = data.take(batch_rng.choice(n, size=bs, replace=False))
        replay = None
        if replay_pool is not None and replay_pool.x.shape[0] > 0:
            r_total = replay_pool.x.shape[0]
            if cfg.replay_batch == "full" or bs is None or bs >= r_total:
                replay = replay_pool
            else:
                replay = replay_pool.take(batch_rng.choice(r_total, size=bs, replace=False))
        obj = make_objective(params.config, batch, replay=replay, eta=eta,
                             importance=importance, train_mode=True,
                             dropout_rng=dropout_rng)
        theta, loss, gnorm = sam_step(theta, obj, cfg.learning_rate, eps)
        trace[it] = (it, loss, gnorm)
    out = m.ModelParams(params.config, theta)
    return out, trace


def write_trace(path, trace: np.ndarray):
    """Append loss-trace rows to a CSV file, creating it with a header."""
    import os
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    new = not os.path.exists(path)
    with open(path, "a", encoding="utf-8") as fh:
        if new:
            fh.write("iteration,loss,grad_norm\n")
        for it, loss, gnorm in trace:
            fh.write(f"{int(it)},{loss!r},{gnorm!r}\n")


def variant_train_config(base: TrainConfig, variant: str, period: int) -> TrainConfig:
    """Per-variant, per-period training configuration.

    The plain fine-tuning baseline reduces its learning rate tenfold after the
    first period; every non-proposed variant trains with epsilon = 0.
    """
    lr = base.learning_rate
    if variant == "bl_ft" and period > 1:
        lr = 0.1 * base.learning_rate
    return replace(base, learning_rate=lr, variant=variant)
