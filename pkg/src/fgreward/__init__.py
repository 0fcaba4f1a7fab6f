"""Fine-grained, criterion-level learned metric for generated radiology reports."""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    FGRewardError,
    FormatVersionError,
    NumericError,
    ParseError,
    StructuralError,
    TrainingDiverged,
    UndefinedCorrelationError,
    ValidationError,
)
from .scoring import (
    Criterion,
    ScoringSystem,
    TierBand,
    load_system,
    quality_score,
    total_score,
)
from .corpus import CorruptionOp, ReportRecord, corrupt, generate_tiered, read_records, write_records
from .pairing import ReportPair, make_pairs, margin_normalize, normalize_all
from .features import FeatureSpec, featurize
from .model import RewardModel, RewardVector, init_model, load_model, save_model, score_report
from .loss import LossConfig, mre_grad, mre_loss
from .train import TrainConfig, checkpoint, resume, train
from .evaluation import EvalReport, bleu4, evaluate_metric, kendall_tau, rouge_l, spearman

__all__ = [
    "ConfigurationError", "FGRewardError", "FormatVersionError", "NumericError", "ParseError",
    "StructuralError", "TrainingDiverged", "UndefinedCorrelationError", "ValidationError",
    "Criterion", "ScoringSystem", "TierBand", "load_system", "quality_score", "total_score",
    "CorruptionOp", "ReportRecord", "corrupt", "generate_tiered", "read_records", "write_records",
    "ReportPair", "make_pairs", "margin_normalize", "normalize_all",
    "FeatureSpec", "featurize",
    "RewardModel", "RewardVector", "init_model", "load_model", "save_model", "score_report",
    "LossConfig", "mre_grad", "mre_loss",
    "TrainConfig", "checkpoint", "resume", "train",
    "EvalReport", "bleu4", "evaluate_metric", "kendall_tau", "rouge_l", "spearman",
]
