"""Desk-scale blind inverse light transport toolkit."""

__version__ = "0.1.0"

from .blind import BlindConfig, BlindResult, run_blind
from .dipfactor import FactorizationConfig, LossSpec, dip_factorize, loss_eval
from .linalg import TruncatedSVD, ridge_solve, truncated_svd
from .metrics import AlignmentTransform, aligned_ncc, psnr, total_variation
from .nonblind import invert_known_transport
from .scene import HiddenVideoScript, SceneConfig, observe, synth_hidden_video, synth_transport
from .tensor import NumericalError, Tape, Tensor, TensorError, backward, forward_op

__all__ = [
    "AlignmentTransform", "BlindConfig", "BlindResult", "FactorizationConfig",
    "HiddenVideoScript", "LossSpec", "NumericalError", "SceneConfig", "Tape",
    "Tensor", "TensorError", "TruncatedSVD", "aligned_ncc", "backward",
    "dip_factorize", "forward_op", "invert_known_transport", "loss_eval",
    "observe", "psnr", "ridge_solve", "run_blind", "synth_hidden_video",
    "synth_transport", "total_variation", "truncated_svd",
]
