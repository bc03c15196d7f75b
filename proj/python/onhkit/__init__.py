"""Optic nerve head OCT toolkit: compensation, structural scores, classification."""

from ._core import (
    DataError,
    RandomForest,
    compensate,
    cross_validate,
    dice,
    drusen_score,
    enface_rpe_mask,
    gen_phantom,
    jaccard,
    load_volume,
    roc_auc,
    run_repro,
    save_volume,
    simulate_cohort,
    swelling_score,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "RandomForest",
    "compensate",
    "cross_validate",
    "dice",
    "drusen_score",
    "enface_rpe_mask",
    "gen_phantom",
    "jaccard",
    "load_volume",
    "roc_auc",
    "run_repro",
    "save_volume",
    "simulate_cohort",
    "swelling_score",
]
