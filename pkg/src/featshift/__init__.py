"""featshift: detect, localize, and correct feature-level distribution shift."""

from .correct import CorrectConfig, CorrectReport, correct
from .data import (
    CorruptionMask,
    Dataset,
    FeatureKind,
    SeededRng,
    kfold_indices,
    load_csv,
    load_mask,
    normalize,
    save_csv,
    save_mask,
    split_reference_query,
)
from .divergence import DivergenceEstimate, estimate_tv, sign_term
from .imputers import knn_impute, linreg_impute, random_sample_impute
from .locate import LocateConfig, LocateReport, feature_removal_policy, locate, refine
from .manipulate import ManipulationSpec, apply_manipulation
from .metrics import (
    CorrectionScore,
    LocalizationScore,
    correction_scores,
    f1_localization,
    henze_penrose,
    symmetric_kl,
    wasserstein2,
)
from .simulate import SimSpec, build_spec, mc_tv_oracle, sample_pair
from .trees import (
    BoostedParams,
    ForestParams,
    fit_boosted,
    fit_forest,
    likelihood_ratio,
    predict_proba,
)

__version__ = "0.1.0"

__all__ = [
    "BoostedParams",
    "CorrectConfig",
    "CorrectReport",
    "CorrectionScore",
    "CorruptionMask",
    "Dataset",
    "DivergenceEstimate",
    "FeatureKind",
    "ForestParams",
    "LocalizationScore",
    "LocateConfig",
    "LocateReport",
    "ManipulationSpec",
    "SeededRng",
    "SimSpec",
    "apply_manipulation",
    "build_spec",
    "correct",
    "correction_scores",
    "estimate_tv",
    "f1_localization",
    "feature_removal_policy",
    "fit_boosted",
    "fit_forest",
    "henze_penrose",
    "kfold_indices",
    "knn_impute",
    "likelihood_ratio",
    "linreg_impute",
    "load_csv",
    "load_mask",
    "locate",
    "mc_tv_oracle",
    "normalize",
    "predict_proba",
    "random_sample_impute",
    "refine",
    "sample_pair",
    "save_csv",
    "save_mask",
    "sign_term",
    "split_reference_query",
    "symmetric_kl",
    "wasserstein2",
]
