from __future__ import annotations

import math

import numpy as np
import pytest

from histoseg import (
    LOSS_FUNCTIONS,
    BinaryMask,
    DimensionMismatchError,
    LossConfig,
    LossValue,
    ProbMap,
    bce,
    bce_iou,
    dice_loss,
    finite_diff_gradient,
    iou_loss,
)


def pair(probs, labels) -> tuple[ProbMap, BinaryMask]:
    return ProbMap(np.asarray(probs, dtype=np.float64)), BinaryMask(np.asarray(labels, dtype=np.uint8))


def random_pair(rng, shape=(8, 8)) -> tuple[ProbMap, BinaryMask]:
    probs = rng.uniform(0.1, 0.9, shape)
    labels = rng.integers(0, 2, shape, dtype=np.uint8)
    labels.flat[0] = 1  # keep both classes present
    labels.flat[-1] = 0
    return ProbMap(probs), BinaryMask(labels)


def test_bce_uniform_half_is_log_two() -> None:
    pred, gt = pair(np.full((10, 10), 0.5), np.zeros((10, 10)))
    out = bce(pred, gt)
    assert out.value == pytest.approx(math.log(2.0), rel=1e-12)


def test_bce_confident_wrong_pixel_value() -> None:
    pred, gt = pair([[1e-6]], [[1]])
    out = bce(pred, gt)
    assert out.value == pytest.approx(-math.log(1e-6), rel=1e-9)


def test_bce_clamps_extreme_probabilities() -> None:
    pred, gt = pair([[0.0, 1.0]], [[1, 0]])
    out = bce(pred, gt)
    assert math.isfinite(out.value)
    # both pixels are confidently wrong, each contributing -log(eps)
    eps = LossConfig().epsilon_clamp
    assert out.value == pytest.approx(-math.log(eps), rel=1e-9)
    # clamped pixels sit on a flat section: analytic gradient is zeroed there
    assert out.gradient.tolist() == [[0.0, 0.0]]


def test_bce_gradient_formula(rng) -> None:
    pred, gt = random_pair(rng)
    out = bce(pred, gt)
    p = pred.probs
    y = gt.labels.astype(np.float64)
    expected = (p - y) / (p * (1.0 - p)) / p.size
    assert np.allclose(out.gradient, expected, atol=1e-12)


def test_dice_loss_uniform_half_against_all_ones() -> None:
    # I = 0.5 N, S = 0.5 N + N; with eps = 1 and N = 10000 the ratio is
    # (N + 1) / (1.5 N + 1), so the loss sits near 1/3.
    pred, gt = pair(np.full((100, 100), 0.5), np.ones((100, 100)))
    out = dice_loss(pred, gt)
    assert out.value == pytest.approx(1.0 / 3.0, abs=1e-4)


def test_iou_loss_uniform_half_against_all_ones() -> None:
    pred, gt = pair(np.full((100, 100), 0.5), np.ones((100, 100)))
    out = iou_loss(pred, gt)
    assert out.value == pytest.approx(0.5, abs=1e-4)


def test_exact_binary_match_gives_zero_loss(rng) -> None:
    labels = rng.integers(0, 2, (9, 9), dtype=np.uint8)
    pred = ProbMap(labels.astype(np.float64))
    gt = BinaryMask(labels)
    assert dice_loss(pred, gt).value == 0.0
    assert iou_loss(pred, gt).value == 0.0


def test_bce_iou_is_weighted_sum(rng) -> None:
    pred, gt = random_pair(rng)
    cfg = LossConfig(w_bce=0.25, w_iou=4.0)
    combined = bce_iou(pred, gt, cfg)
    b = bce(pred, gt, cfg)
    j = iou_loss(pred, gt, cfg)
    assert combined.value == pytest.approx(0.25 * b.value + 4.0 * j.value, rel=1e-12)
    assert np.allclose(combined.gradient, 0.25 * b.gradient + 4.0 * j.gradient, atol=1e-15)


def test_bce_iou_default_sum_near_log2_plus_half() -> None:
    pred, gt = pair(np.full((100, 100), 0.5), np.ones((100, 100)))
    out = bce_iou(pred, gt)
    assert out.value == pytest.approx(math.log(2.0) + 0.5, abs=1e-4)


def test_all_gradients_match_finite_differences(rng) -> None:
    for kind in sorted(LOSS_FUNCTIONS):
        pred, gt = random_pair(rng, shape=(6, 6))
        analytic = LOSS_FUNCTIONS[kind](pred, gt).gradient
        numeric = finite_diff_gradient(kind, pred, gt)
        denom = np.maximum(np.abs(numeric), 1e-12)
        rel = np.abs(analytic - numeric) / denom
        assert rel.max() < 1e-5, f"{kind}: max rel error {rel.max():.3e}"


def test_finite_diff_clamps_at_domain_edges() -> None:
    # probabilities exactly at 0 and 1: the perturbed copies must stay valid
    pred, gt = pair([[0.0, 1.0, 0.5]], [[0, 1, 1]])
    numeric = finite_diff_gradient("dice", pred, gt, step=1e-3)
    assert np.all(np.isfinite(numeric))


def test_finite_diff_rejects_bad_arguments(rng) -> None:
    pred, gt = random_pair(rng, shape=(3, 3))
    with pytest.raises(ValueError):
        finite_diff_gradient("hinge", pred, gt)
    with pytest.raises(ValueError):
        finite_diff_gradient("bce", pred, gt, step=0.0)
    with pytest.raises(ValueError):
        finite_diff_gradient("bce", pred, gt, step=0.5)


def test_shape_mismatch_raises(rng) -> None:
    pred = ProbMap(np.full((2, 3), 0.5))
    gt = BinaryMask(np.zeros((3, 2), dtype=np.uint8))
    for fn in LOSS_FUNCTIONS.values():
        with pytest.raises(DimensionMismatchError):
            fn(pred, gt)


def test_loss_config_validation() -> None:
    with pytest.raises(ValueError):
        LossConfig(epsilon_smooth=0.0)
    with pytest.raises(ValueError):
        LossConfig(epsilon_clamp=0.5)
    with pytest.raises(ValueError):
        LossConfig(epsilon_clamp=0.0)
    with pytest.raises(ValueError):
        LossConfig(w_bce=-1.0)


def test_loss_value_gradient_is_read_only() -> None:
    out = LossValue(value=0.5, gradient=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        out.gradient[0, 0] = 1.0


def test_losses_decrease_toward_the_truth(rng) -> None:
    labels = rng.integers(0, 2, (8, 8), dtype=np.uint8)
    gt = BinaryMask(labels)
    y = labels.astype(np.float64)
    far = ProbMap(np.clip(np.abs(y - 0.4), 0.0, 1.0))
    near = ProbMap(np.clip(np.abs(y - 0.1), 0.0, 1.0))
    for fn in (bce, dice_loss, iou_loss, bce_iou):
        assert fn(near, gt).value < fn(far, gt).value
