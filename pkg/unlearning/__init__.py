from unlearning.roel import (
    Ensemble,
    IDENTICAL,
    build,
    rebuild,
    predict,
    delta_alike,
    is_retrained_alike,
)
from unlearning.tid import (
    UnlearnSession,
    UnlearnReport,
    init_session,
    unlearn_subset,
    rectify,
    update_references_and_ledger,
    handle_request,
)
from unlearning.baselines import (
    BaselineKind,
    BaselineReport,
    train_single,
    retrain_single,
    retrain_ensemble,
    sisa_build,
    sisa_unlearn,
    random_relabel,
    relabel_unlearn,
)
from unlearning.storage import save_predictor, load_predictor, load_ensemble
