"""Disentangled sequential VAE for unsupervised video domain adaptation."""

from .autodiff import Tape, Tensor, backward, grad_check, tape_scope
from .config import RunConfig, parse_config, parse_config_text
from .model import GaussianPosterior, LatentBundle, DisentangledSeqVae, swap_static
from .optim import AdamState, adam_step, lr_schedule

__all__ = [
    "AdamState", "GaussianPosterior", "LatentBundle", "RunConfig", "Tape",
    "Tensor", "DisentangledSeqVae", "adam_step", "backward", "grad_check",
    "lr_schedule", "parse_config", "parse_config_text", "swap_static",
    "tape_scope",
]
