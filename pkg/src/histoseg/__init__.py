"""Histogram-specification pre-processing and segmentation scoring.

The package harmonizes 8-bit grayscale images to a reference tonal
distribution built from a training split, scores binary segmentations
(Dice / IoU with confidence intervals, confusion overlays), provides
differentiable loss functions with analytic gradients, and ships a
classical threshold baseline plus a manifest-driven batch pipeline.
"""

from .errors import (
    BatchWriteError,
    DecodeError,
    DimensionMismatchError,
    EmptyHistogramError,
    EmptySplitError,
    HistosegError,
    ManifestError,
    MissingMaskError,
    MissingPredictionError,
    ReferenceFormatError,
    TooFewEntriesError,
    UnsupportedDepthError,
)
from .evaluation import (
    CI_Z,
    ConfusionCounts,
    EvalReport,
    ImageResult,
    MeanCI,
    OVERLAY_PALETTE,
    aggregate,
    confusion,
    dice,
    evaluate_pair,
    format_mean_ci,
    iou,
    make_report,
    render_json,
    render_overlay,
    render_table,
)
from .histogram import (
    Cdf,
    Histogram,
    LevelMap,
    Pmf,
    ReferenceHistogram,
    apply_level_map,
    average_reference,
    build_level_map,
    compute_histogram,
    drift_score,
    load_reference,
    save_reference,
    specify,
    to_cdf,
    to_pmf,
)
from .imaging import (
    BinaryMask,
    GrayImage,
    ProbMap,
    RgbImage,
    load_gray,
    load_mask,
    load_prob,
    read_size,
    save_gray,
    save_mask,
    save_rgb,
)
from .losses import (
    LOSS_FUNCTIONS,
    LossConfig,
    LossValue,
    bce,
    bce_iou,
    dice_loss,
    finite_diff_gradient,
    iou_loss,
)
from .pipeline import (
    Manifest,
    ManifestEntry,
    RunConfig,
    SplitSpec,
    build_reference,
    evaluate_run,
    load_manifest,
    manifest_to_text,
    match_batch,
    save_manifest,
    split_manifest,
    synth_dataset,
)
from .segmenter import (
    SegmenterConfig,
    apply_threshold,
    clean_mask,
    load_external_predictions,
    otsu_threshold,
    predict,
)

__version__ = "0.1.0"
