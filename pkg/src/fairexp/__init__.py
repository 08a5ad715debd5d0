"""Expected-exposure evaluation of stochastic rankings for group fairness."""
from .core import (
    ConfigError,
    DocumentRecord,
    EvalConfig,
    EvaluationError,
    RankingSequence,
    Request,
    ValidationReport,
    Violation,
    author_documents,
    make_request,
    validate_request_run,
)
from .exposure import (
    position_weights,
    ranking_exposure,
    sequence_exposure,
    target_exposure,
    target_exposure_bruteforce,
)
from .metrics import (
    QueryMetrics,
    RunMetrics,
    decompose,
    ee_metric,
    evaluate_query,
    evaluate_run,
    group_exposure,
    leaderboard,
)
from .policies import POLICY_KINDS, PolicySpec, policy_rank, run_protocol

__version__ = "0.1.0"
