"""Small numpy autodiff core with the layers the recurrent policies need."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .heads import CategoricalHead, GaussianHead, categorical_sample_logprob, gaussian_logprob_entropy
from .layers import GRU, Conv2d, Dense, Module, orthogonal
from .optim import Adam, AdamState, adam_step, clip_grad_norm, global_norm
from .autograd import (
    Tensor,
    backward,
    build_tape,
    check_finite,
    concat,
    get_default_dtype,
    no_grad,
    parameter,
    precision,
    set_default_dtype,
    tensor,
)

__all__ = [
    "Adam",
    "AdamState",
    "CategoricalHead",
    "CheckpointError",
    "Conv2d",
    "Dense",
    "GRU",
    "GaussianHead",
    "Module",
    "Tensor",
    "adam_step",
    "backward",
    "build_tape",
    "categorical_sample_logprob",
    "check_finite",
    "clip_grad_norm",
    "concat",
    "gaussian_logprob_entropy",
    "get_default_dtype",
    "global_norm",
    "load_checkpoint",
    "no_grad",
    "orthogonal",
    "parameter",
    "precision",
    "save_checkpoint",
    "set_default_dtype",
    "tensor",
]
