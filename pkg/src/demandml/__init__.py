"""Predicting individual purchase decisions from BDM, 2AFC and Buy-task data."""

__version__ = "0.1.0"

from .domain import Cohort, CohortError, load_cohort, save_cohort, validate_cohort  # noqa: E402
from .features import SPACES, FeatureMatrix, assemble_space  # noqa: E402
from .simulate import SimConfig, simulate_cohort  # noqa: E402

__all__ = [
    "Cohort",
    "CohortError",
    "FeatureMatrix",
    "SPACES",
    "SimConfig",
    "assemble_space",
    "load_cohort",
    "save_cohort",
    "simulate_cohort",
    "validate_cohort",
]
