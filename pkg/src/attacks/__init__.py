"""成员推断攻击模块."""

from src.attacks.base import (
    BaseAttack,
    MembershipScores,
    apply_statistic,
    decide,
    graybox_visible_steps,
    median_threshold,
    score_trajectories,
    suppression_mask,
    truncate_trajectory,
    truncation_step,
)
from src.attacks.blackbox import (
    FeatureMap,
    IdentityFeatureMap,
    ModelAgnosticAttack,
    ModelSpecificAttack,
    RandomProjectionFeatureMap,
    blackbox_agnostic_scores,
    blackbox_specific_scores,
    cosine_distances,
    make_feature_map,
)
from src.attacks.graybox import GrayBoxAttack, graybox_scores, guessed_kind, guessed_schedule_for
from src.attacks.whitebox import WhiteBoxAttack, whitebox_scores

__all__ = [
    "BaseAttack",
    "FeatureMap",
    "GrayBoxAttack",
    "IdentityFeatureMap",
    "MembershipScores",
    "ModelAgnosticAttack",
    "ModelSpecificAttack",
    "RandomProjectionFeatureMap",
    "WhiteBoxAttack",
    "apply_statistic",
    "blackbox_agnostic_scores",
    "blackbox_specific_scores",
    "cosine_distances",
    "decide",
    "graybox_scores",
    "graybox_visible_steps",
    "guessed_kind",
    "guessed_schedule_for",
    "make_feature_map",
    "median_threshold",
    "score_trajectories",
    "suppression_mask",
    "truncate_trajectory",
    "truncation_step",
    "whitebox_scores",
]
