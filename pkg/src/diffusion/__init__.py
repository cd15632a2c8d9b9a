"""扩散模型模块."""

from src.diffusion.model import (
    DiffusionModel,
    Gaussian,
    LossTrajectory,
    ReconstructionAPI,
    SamplingAPI,
    ancestral_sample,
    decoder_variance,
    estimated_trajectory,
    exact_trajectory,
    forward_sample,
    kl_gaussian,
    loss_term,
    noise_block,
    p_theta,
    posterior_q,
    predict_x0,
    prior_term,
    variational_bound,
)
from src.diffusion.network import AdamState, DenseNet, TimeEmbedding, adam_step, net_forward, net_gradient
from src.diffusion.schedule import (
    NoiseSchedule,
    PosteriorCoefficients,
    SnrPoint,
    build_schedule,
    other_schedule_kind,
    posterior_coefficients,
    snr,
)

__all__ = [
    "AdamState",
    "DenseNet",
    "DiffusionModel",
    "Gaussian",
    "LossTrajectory",
    "NoiseSchedule",
    "PosteriorCoefficients",
    "ReconstructionAPI",
    "SamplingAPI",
    "SnrPoint",
    "TimeEmbedding",
    "adam_step",
    "ancestral_sample",
    "build_schedule",
    "decoder_variance",
    "estimated_trajectory",
    "exact_trajectory",
    "forward_sample",
    "kl_gaussian",
    "loss_term",
    "net_forward",
    "net_gradient",
    "noise_block",
    "other_schedule_kind",
    "p_theta",
    "posterior_coefficients",
    "posterior_q",
    "predict_x0",
    "prior_term",
    "snr",
    "variational_bound",
]
