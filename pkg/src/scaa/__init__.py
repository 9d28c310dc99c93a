"""Multi-level-interest click prediction on a small self-contained
autodiff core: cross-level and within-level attention over liked and
followed item histories, with a reproducible training and ablation
harness around it.
"""

from .attention import (
    EmptyLevelError,
    ProjectionTriple,
    SOC_VARIANTS,
    SocParams,
    co_attend,
    init_soc_params,
    pool_interest,
    project,
    self_attend,
    soc_forward,
)
from .autodiff import (
    NumericError,
    ShapeError,
    Tensor,
    backward,
    grad_check,
    no_grad,
)
from .checkpoint import CheckpointError, load_model, save_model
from .data import (
    Dataset,
    InteractionRecord,
    ParseError,
    SynthConfig,
    filter_multilevel,
    gen_synthetic,
    load_interactions,
    save_interactions,
    split_train_test,
)
from .metrics import (
    EvalReport,
    UndefinedMetricError,
    auc,
    evaluate_all,
    f_at_k,
    precision_at_k,
    rank_candidates,
    recall_at_k,
)
from .model import (
    ItemTable,
    ScaaModel,
    UserHistory,
    build_histories,
    build_level_features,
    new_model,
    predict_batch,
    score,
    user_logits,
)
from .training import Adam, Sgd, TrainConfig, bce_loss, run_ablation, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CheckpointError",
    "Dataset",
    "EmptyLevelError",
    "EvalReport",
    "InteractionRecord",
    "ItemTable",
    "NumericError",
    "ParseError",
    "ProjectionTriple",
    "SOC_VARIANTS",
    "ScaaModel",
    "Sgd",
    "ShapeError",
    "SocParams",
    "SynthConfig",
    "Tensor",
    "TrainConfig",
    "UndefinedMetricError",
    "UserHistory",
    "auc",
    "backward",
    "bce_loss",
    "build_histories",
    "build_level_features",
    "co_attend",
    "evaluate_all",
    "f_at_k",
    "filter_multilevel",
    "gen_synthetic",
    "grad_check",
    "init_soc_params",
    "load_interactions",
    "load_model",
    "new_model",
    "no_grad",
    "pool_interest",
    "precision_at_k",
    "predict_batch",
    "project",
    "rank_candidates",
    "recall_at_k",
    "run_ablation",
    "save_interactions",
    "save_model",
    "score",
    "self_attend",
    "soc_forward",
    "split_train_test",
    "train",
    "user_logits",
]
