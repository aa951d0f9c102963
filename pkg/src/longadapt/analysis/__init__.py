from .metrics import auroc, error_rate, f1, midranks, roc_points, trapezoid_area
from .stats import (
    ClassDistribution,
    PairedSample,
    WilcoxonOutcome,
    class_distribution,
    fleiss_kappa,
    wilcoxon_one_sided,
)

__all__ = [
    "ClassDistribution",
    "PairedSample",
    "WilcoxonOutcome",
    "auroc",
    "class_distribution",
    "error_rate",
    "f1",
    "fleiss_kappa",
    "midranks",
    "roc_points",
    "trapezoid_area",
    "wilcoxon_one_sided",
]
