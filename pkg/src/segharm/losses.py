"""Loss families for multi-label training over segmented label spaces.

Every family shares one shape: a per-class weight, an optional focusing
factor on the miss probability, and a per-sample modulating rate, applied to
the negative log of q, where q is the predicted probability assigned to the
true bit.  Probabilities come from an elementwise logistic sigmoid, so the
classes stay independent, and gradients with respect to logits are
analytical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("bce", "focal", "cb_focal", "sh", "sh_focal")
_FOCAL_FAMILIES = ("focal", "cb_focal", "sh_focal")
_RATE_FAMILIES = ("sh", "sh_focal")
DEFAULT_GAMMA = 2.0
DEFAULT_CB_BETA = 0.99
DEFAULT_EPSILON = 1e-12


class LossError(ValueError):
    """Raised for invalid loss configuration or inputs."""


@dataclass
class LossConfig:
    """Selects a loss family and its hyperparameters.

    Per-sample reduction is always a sum over classes; ``reduction`` chooses
    how a batch of samples is reduced.  ``sh_on_positives`` controls whether
    the rate modulation also applies to samples with a positive class in the
    trained segment (disabling it is an ablation switch).
    """

    family: str = "bce"
    gamma: float = DEFAULT_GAMMA
    cb_beta: float = DEFAULT_CB_BETA
    epsilon: float = DEFAULT_EPSILON
    reduction: str = "mean"
    sh_on_positives: bool = True

    def __post_init__(self):
        family = str(self.family).lower()
        if family not in FAMILIES:
            raise LossError(f"unknown loss family {self.family!r}; expected one of {FAMILIES}")
        self.family = family
        if self.gamma < 0:
            raise LossError("gamma must be >= 0")
        if not 0.0 <= self.cb_beta < 1.0:
            raise LossError("cb_beta must lie in [0, 1)")
        if not 0.0 < self.epsilon <= 1e-3:
            raise LossError("epsilon must lie in (0, 1e-3]")
        if self.reduction not in ("mean", "sum"):
            raise LossError("reduction must be 'mean' or 'sum'")


@dataclass
class LossInput:
    """One sample's logits and targets plus the per-sample rate."""

    logits: np.ndarray
    targets: np.ndarray
    beta_sh: float = 1.0
    class_counts: np.ndarray | None = None


def sigmoid(z) -> np.ndarray:
    """Numerically stable logistic sigmoid."""
    z = np.asarray(z, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


def clamp(p, epsilon: float = DEFAULT_EPSILON):
    return np.clip(p, epsilon, 1.0 - epsilon)


def q_transform(p, y):
    """q = p where the target bit is 1, and 1 - p where it is 0."""
    p = np.asarray(p, dtype=np.float64)
    out = np.where(np.asarray(y) == 1, p, 1.0 - p)
    return float(out) if out.ndim == 0 else out


def bce(p: float, y: int, epsilon: float = DEFAULT_EPSILON) -> float:
    """Binary cross entropy for a single class: -log q."""
    q = q_transform(clamp(p, epsilon), y)
    return float(-np.log(q))


def ce_multilabel(q, epsilon: float = DEFAULT_EPSILON) -> float:
    """Sum of per-class negative logs: the multi-label cross entropy."""
    q = clamp(np.asarray(q, dtype=np.float64), epsilon)
    return float(-np.log(q).sum())


def focal(q, gamma: float = DEFAULT_GAMMA, epsilon: float = DEFAULT_EPSILON) -> float:
    """Cross entropy with each class damped by its miss probability to gamma."""
    if gamma < 0:
        raise LossError("gamma must be >= 0")
    q = clamp(np.asarray(q, dtype=np.float64), epsilon)
    return float(np.sum((1.0 - q) ** gamma * -np.log(q)))


def cb_weights(cb_beta: float, class_counts) -> np.ndarray:
    """Effective-number class weights: (1 - beta) / (1 - beta**count)."""
    if not 0.0 <= cb_beta < 1.0:
        raise LossError("cb_beta must lie in [0, 1)")
    n = np.asarray(class_counts, dtype=np.float64)
    if n.size == 0 or np.any(n < 1):
        raise LossError("class counts must all be >= 1")
    return (1.0 - cb_beta) / (1.0 - cb_beta**n)


def cb_focal(
    q,
    gamma: float = DEFAULT_GAMMA,
    cb_beta: float = DEFAULT_CB_BETA,
    class_counts=None,
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """Focal loss with per-class effective-number weights."""
    q = clamp(np.asarray(q, dtype=np.float64), epsilon)
    weights = cb_weights(cb_beta, class_counts)
    if weights.shape != q.shape:
        raise LossError("class counts must match the number of classes")
    return float(np.sum(weights * (1.0 - q) ** gamma * -np.log(q)))


def sh(q, beta_sh: float, epsilon: float = DEFAULT_EPSILON) -> float:
    """Cross entropy scaled by the reciprocal of the sample's rate."""
    if not np.isfinite(beta_sh) or beta_sh <= 0:
        raise LossError("beta_sh must be positive and finite")
    return ce_multilabel(q, epsilon) / beta_sh


def sh_focal(q, beta_sh: float, gamma: float = DEFAULT_GAMMA, epsilon: float = DEFAULT_EPSILON) -> float:
    """Focal loss scaled by the reciprocal of the sample's rate.

    The focusing factor applies per class, exactly as in the unscaled focal
    loss.
    """
    if not np.isfinite(beta_sh) or beta_sh <= 0:
        raise LossError("beta_sh must be positive and finite")
    return focal(q, gamma, epsilon) / beta_sh


def batch_loss_and_grad(logits, targets, betas, config: LossConfig, class_counts=None):
    """Reduced loss and its exact gradient with respect to the logits.

    ``logits`` and ``targets`` are (batch, classes); ``betas`` holds one rate
    per sample and is ignored by the unmodulated families.  The gradient has
    the logits' shape and already includes the batch reduction, so it can be
    fed straight into an optimizer.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.ndim != 2 or z.shape != y.shape:
        raise LossError("logits and targets must be matching (batch, classes) arrays")
    if not np.all(np.isfinite(z)):
        raise LossError("non-finite logits")
    batch, num_classes = z.shape

    gamma = config.gamma if config.family in _FOCAL_FAMILIES else 0.0
    if config.family in _RATE_FAMILIES:
        beta = np.asarray(betas, dtype=np.float64).reshape(batch, 1)
        if not np.all(np.isfinite(beta)) or np.any(beta <= 0):
            raise LossError("beta_sh must be positive and finite")
    else:
        beta = np.ones((batch, 1))
    if config.family == "cb_focal":
        if class_counts is None:
            raise LossError("cb_focal needs per-class counts")
        weights = cb_weights(config.cb_beta, class_counts).reshape(1, num_classes)
    else:
        weights = np.ones((1, num_classes))

    p = sigmoid(z)
    q = clamp(np.where(y == 1, p, 1.0 - p), config.epsilon)
    log_q = np.log(q)
    if gamma == 0.0:
        # plain -log q; kept separate so gamma = 0 never meets a 0 * inf
        miss_pow = np.ones_like(q)
        dloss_dq = -1.0 / q
    else:
        miss = 1.0 - q
        miss_pow = miss**gamma
        dloss_dq = gamma * miss ** (gamma - 1.0) * log_q - miss_pow / q

    scale = 1.0 / batch if config.reduction == "mean" else 1.0
    loss = float(np.sum(weights / beta * miss_pow * -log_q) * scale)
    sign = np.where(y == 1, 1.0, -1.0)
    grad = weights / beta * dloss_dq * sign * p * (1.0 - p) * scale
    return loss, grad


def loss_and_grad(inp: LossInput, config: LossConfig):
    """Loss and gradient for a single sample (classes are summed)."""
    z = np.asarray(inp.logits, dtype=np.float64)
    y = np.asarray(inp.targets)
    if z.ndim != 1 or z.shape != y.shape:
        raise LossError("logits and targets must be matching vectors")
    loss, grad = batch_loss_and_grad(
        z[None, :], y[None, :], np.array([inp.beta_sh]), config, inp.class_counts
    )
    return loss, grad[0]
