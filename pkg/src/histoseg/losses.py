"""Differentiable segmentation losses with analytic per-pixel gradients.

Conventions: bce is mean-reduced over pixels; the soft Dice and IoU losses
are set-reduced over the whole map. Every loss returns its value together
with d(loss)/d(prob) per pixel, and finite_diff_gradient provides a
central-difference check of those gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .imaging import BinaryMask, ProbMap


@dataclass(frozen=True)
class LossConfig:
    """Smoothing, clamping and combination weights.

    Attributes:
        epsilon_smooth: additive smoothing for the soft Dice/IoU ratios.
        epsilon_clamp: probabilities are clamped to
            [epsilon_clamp, 1 - epsilon_clamp] before the bce logs.
        w_bce, w_iou: weights of the combined bce-iou loss.
    """

    epsilon_smooth: float = 1.0
    epsilon_clamp: float = 1e-6
    w_bce: float = 1.0
    w_iou: float = 1.0

    def __post_init__(self) -> None:
        if not self.epsilon_smooth > 0.0:
            raise ValueError("epsilon_smooth must be positive")
        if not 0.0 < self.epsilon_clamp < 0.5:
            raise ValueError("epsilon_clamp must lie in (0, 0.5)")
        if self.w_bce < 0.0 or self.w_iou < 0.0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True, eq=False)
class LossValue:
    """Scalar loss plus the per-pixel gradient (same shape as the input map)."""

    value: float
    gradient: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.gradient is not None:
            grad = np.asarray(self.gradient, dtype=np.float64)
            grad = grad.copy()
            grad.setflags(write=False)
            object.__setattr__(self, "gradient", grad)


_DEFAULT = LossConfig()


def _aligned(pred: ProbMap, gt: BinaryMask) -> tuple[np.ndarray, np.ndarray]:
    if pred.probs.shape != gt.labels.shape:
        raise DimensionMismatchError(
            f"probability map {pred.probs.shape} and mask {gt.labels.shape} differ in shape"
        )
    return pred.probs, gt.labels.astype(np.float64)


def bce(pred: ProbMap, gt: BinaryMask, cfg: LossConfig = _DEFAULT) -> LossValue:
    """Binary cross entropy, mean-reduced over pixels.

    value = mean(-(y log p' + (1 - y) log(1 - p'))) with
    p' = clamp(p, eps, 1 - eps). The gradient is
    (p' - y) / (p' (1 - p')) / N, and zero at clamped pixels where the
    loss is locally flat in p.
    """
    p, y = _aligned(pred, gt)
    eps = cfg.epsilon_clamp
    ph = np.clip(p, eps, 1.0 - eps)
    value = float(np.mean(-(y * np.log(ph) + (1.0 - y) * np.log(1.0 - ph))))
    grad = (ph - y) / (ph * (1.0 - ph)) / p.size
    grad[(p < eps) | (p > 1.0 - eps)] = 0.0
    return LossValue(value=value, gradient=grad)


def dice_loss(pred: ProbMap, gt: BinaryMask, cfg: LossConfig = _DEFAULT) -> LossValue:
    """Soft Dice loss: 1 - (2 I + eps) / (S + eps).

    I = sum(p * y), S = sum(p) + sum(y). An exactly matching binary
    prediction gives loss 0.
    """
    p, y = _aligned(pred, gt)
    eps = cfg.epsilon_smooth
    inter = float((p * y).sum())
    total = float(p.sum()) + float(y.sum())
    num = 2.0 * inter + eps
    den = total + eps
    grad = (num - 2.0 * y * den) / (den * den)
    return LossValue(value=1.0 - num / den, gradient=grad)


def iou_loss(pred: ProbMap, gt: BinaryMask, cfg: LossConfig = _DEFAULT) -> LossValue:
    """Soft IoU loss: 1 - (I + eps) / (U + eps) with U = sum(p) + sum(y) - I."""
    p, y = _aligned(pred, gt)
    eps = cfg.epsilon_smooth
    inter = float((p * y).sum())
    union = float(p.sum()) + float(y.sum()) - inter
    num = inter + eps
    den = union + eps
    grad = (num * (1.0 - y) - y * den) / (den * den)
    return LossValue(value=1.0 - num / den, gradient=grad)


def bce_iou(pred: ProbMap, gt: BinaryMask, cfg: LossConfig = _DEFAULT) -> LossValue:
    """Weighted sum of bce and the soft IoU loss (weights default to 1 and 1)."""
    b = bce(pred, gt, cfg)
    j = iou_loss(pred, gt, cfg)
    return LossValue(
        value=cfg.w_bce * b.value + cfg.w_iou * j.value,
        gradient=cfg.w_bce * b.gradient + cfg.w_iou * j.gradient,
    )


LOSS_FUNCTIONS = {
    "bce": bce,
    "dice": dice_loss,
    "iou": iou_loss,
    "bce-iou": bce_iou,
}


def finite_diff_gradient(
    loss_kind: str,
    pred: ProbMap,
    gt: BinaryMask,
    cfg: LossConfig = _DEFAULT,
    step: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of a loss, pixel by pixel.

    Each pixel is perturbed to p +/- step (clamped into [0, 1]) and the
    quotient (L(p + step) - L(p - step)) / (2 step) is returned. Meant as
    an independent check of the analytic gradients.

    Args:
        loss_kind: one of LOSS_FUNCTIONS.
        step: difference step, must lie in (0, 1e-2].
    """
    if loss_kind not in LOSS_FUNCTIONS:
        raise ValueError(f"unknown loss kind {loss_kind!r}; expected one of {sorted(LOSS_FUNCTIONS)}")
    if not 0.0 < step <= 1e-2:
        raise ValueError("step must lie in (0, 1e-2]")
    fn = LOSS_FUNCTIONS[loss_kind]
    base = np.array(pred.probs, dtype=np.float64)
    flat = base.ravel()
    out = np.empty_like(flat)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = min(saved + step, 1.0)
        up = fn(ProbMap(base), gt, cfg).value
        flat[i] = max(saved - step, 0.0)
        down = fn(ProbMap(base), gt, cfg).value
        flat[i] = saved
        out[i] = (up - down) / (2.0 * step)
    return out.reshape(base.shape)
