"""Desk-scale benchmark toolkit for open-set multi-label tagging."""

from .planning import (
    ClassVocabulary,
    ClassSplit,
    OpennessReport,
    SoundscapeSpec,
    EventSpec,
    ClipSpec,
    compute_openness,
    make_split_variants,
    sample_soundscape_specs,
    window_clips,
)
from .features import (
    PrototypeBank,
    SourceFeature,
    EstimateSet,
    init_prototypes,
    render_source,
    mix,
    corrupt_estimates,
    oracle_prune,
)
from .classifier import (
    MlpParams,
    ComboVocabulary,
    TrainConfig,
    Checkpoint,
    UnknownCombinationError,
    init_mlp_params,
    mlp_forward,
    bce_loss,
    ce_loss,
    pit_loss,
    compute_gradients,
    train,
    build_combo_vocab,
    predict_topm,
    predict_threshold,
)
from .openset import (
    WeibullTailModel,
    OpenMaxConfig,
    OpenSetDecision,
    fit_mav,
    fit_weibull_tail,
    fit_weibull_bank,
    weibull_cdf,
    openmax_recalibrate,
    decide_msp,
    decide_msp_per_source,
    decide_openmax,
)
from .tuning import SearchSpace, TrialRecord, tune
from .metrics import (
    UnknownDetectionReport,
    ClosedSetReport,
    VariantAggregate,
    unknown_detection_accuracy,
    micro_f1,
    macro_f1,
    average_precision,
    mean_average_precision,
    closed_set_report,
    aggregate_variants,
)

__version__ = "0.1.0"
