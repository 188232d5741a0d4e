"""Anatomy-constrained paste augmentation and anomaly detection.

Images are 2-D float64 numpy arrays with intensities in [0, 1]; masks are
boolean arrays of the same shape.  The high-level entry points are
`AnatPasteDetector` (sklearn-style fit/score_samples) and the `anatpaste`
command-line tool.
"""

from .augment import (
    AnatPasteConfig,
    AugmentOutcome,
    CutPasteScarConfig,
    Rect,
    anat_paste,
    anat_paste_ablated,
    compose,
    crop_to_frame_patch,
    cut_paste_scar,
    make_blur_shape,
)
from .classifier import (
    Descriptor,
    MlpModel,
    OptimState,
    TrainConfig,
    backward,
    cosine_lr,
    cross_entropy,
    extract_features,
    forward,
    init_model,
    penultimate_features,
    sgd_step,
    train,
)
from .detector import AnatPasteDetector
from .imgops import (
    LabelMap,
    StructuringElement,
    binarize,
    clahe,
    clear_border,
    connected_components,
    gaussian_blur,
    morph_dilate,
    morph_open,
    otsu_threshold,
    rasterize_shape,
)
from .metrics import (
    LabeledScores,
    MetricsReport,
    auc,
    best_f1_threshold,
    metrics_at,
    roc_curve,
)
from .phantom import PhantomConfig, PhantomSample, generate, generate_corpus
from .scoring import KdeScorer, ScoreSet, anomaly_scores, ensemble_average
from .segmentation import LungSegmenter, SegConfig, SegResult, dice, segment_lungs

__version__ = "0.1.0"
