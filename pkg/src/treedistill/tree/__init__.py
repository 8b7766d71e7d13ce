"""Decision trees grown under cost-sensitive split criteria."""
from .criteria import (Criterion, DegenerateNodeError, NodeStats, RegressionStats,
                       cost_entropy, cost_info_gain, cost_rates, cost_reduction,
                       error_reduction, variance_reduction)
from .grow import SplitCandidate, TrainingSet, best_split, grow, total_cost
from .importance import feature_importance
from .model import PolicyTree, predict
from .rules import RuleSet, export_rules

__all__ = [
    "Criterion", "DegenerateNodeError", "NodeStats", "RegressionStats", "cost_entropy",
    "cost_info_gain", "cost_rates", "cost_reduction", "error_reduction", "variance_reduction",
    "SplitCandidate", "TrainingSet", "best_split", "grow", "total_cost", "feature_importance",
    "PolicyTree", "predict", "RuleSet", "export_rules",
]
