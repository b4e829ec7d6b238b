"""Multi-task masked video-token generation with interior condition tokens."""

from .core import (
    TASKS,
    ConfigError,
    GridShape,
    TokenGrid,
    VideoTensor,
    VocabularyLayout,
    flatten_index,
    gumbel,
    supervoxel_of,
    unflatten_index,
)
from .decoder import DecodeConfig, commit_decode, generate
from .harness import RunConfig, gen_synthetic, psnr, run_experiment, token_accuracy
from .masking import commit_mask, cutoff_kth_smallest, gamma, sample_training_mask
from .predictor import OraclePredictor, PottsParams, PottsPredictor, multitask_loss, train
from .tasks import TaskSpec, condition_region, make_condition, pad_condition
from .tokenizer import Codebook, decode, encode, encode_condition, fit_codebook

__version__ = "0.1.0"

__all__ = [
    "TASKS",
    "ConfigError",
    "GridShape",
    "TokenGrid",
    "VideoTensor",
    "VocabularyLayout",
    "flatten_index",
    "gumbel",
    "supervoxel_of",
    "unflatten_index",
    "DecodeConfig",
    "commit_decode",
    "generate",
    "RunConfig",
    "gen_synthetic",
    "psnr",
    "run_experiment",
    "token_accuracy",
    "commit_mask",
    "cutoff_kth_smallest",
    "gamma",
    "sample_training_mask",
    "OraclePredictor",
    "PottsParams",
    "PottsPredictor",
    "multitask_loss",
    "train",
    "TaskSpec",
    "condition_region",
    "make_condition",
    "pad_condition",
    "Codebook",
    "decode",
    "encode",
    "encode_condition",
    "fit_codebook",
]
