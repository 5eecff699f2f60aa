from .cohort import CohortConfig, generate_cohort, load_cohort_config
from .experiment import run_experiment
from .metrics import MetricsReport, compute_metrics, roc_curve
from .split import split_dataset, subsample

__all__ = [
    "CohortConfig", "generate_cohort", "load_cohort_config", "run_experiment",
    "MetricsReport", "compute_metrics", "roc_curve", "split_dataset", "subsample",
]
