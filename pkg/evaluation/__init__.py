from evaluation.metrics import (
    accuracy,
    consistency,
    consistency_mean,
    posterior_distances,
    time_phase,
    timed,
    without_timing,
    SPLITS,
    TIMING_FIELDS,
    split_metrics,
    MetricsReport,
    write_csv,
    summarize,
)
from evaluation.membership import (
    sample_splits,
    attack_features,
    build_mi_dataset,
    train_attack,
    auc_score,
    m_auc,
    verifiability,
    VerifiabilityResult,
)
