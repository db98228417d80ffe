"""Segment-parallel time series forecasting at desk scale.

A small, self-contained stack: float64 tensors with reverse-mode autodiff,
adaptive multi-granularity patch embedding, a channel-independent
transformer encoder, segment-wise mixture-of-experts forecast heads with
learnable conditioning tokens, causal cross-segment refinement, a synthetic
multi-peak data generator, and an AR-vs-parallel inference benchmark.
"""

__version__ = "0.1.0"

from .bench import BenchConfig, CostModel, flops, run_bench
from .config import ConfigError, ModelConfig, parse_config, write_config
from .model import Forecaster, ForwardResult, LossBreakdown
from .synth import (
    MixtureSpec,
    ModeSpec,
    WindowDataset,
    generate,
    mixture_mean,
    mode_metrics,
    two_mode_ramp,
)
from .tensor import (
    GradCheckReport,
    Parameters,
    ShapeError,
    Tensor,
    check_gradients,
    no_grad,
)
from .training import NumericError, end_to_end_gradcheck, evaluate, train

__all__ = [
    "BenchConfig",
    "ConfigError",
    "CostModel",
    "Forecaster",
    "ForwardResult",
    "GradCheckReport",
    "LossBreakdown",
    "MixtureSpec",
    "ModeSpec",
    "ModelConfig",
    "NumericError",
    "Parameters",
    "ShapeError",
    "Tensor",
    "WindowDataset",
    "check_gradients",
    "end_to_end_gradcheck",
    "evaluate",
    "flops",
    "generate",
    "mixture_mean",
    "mode_metrics",
    "no_grad",
    "parse_config",
    "run_bench",
    "train",
    "two_mode_ramp",
    "write_config",
    "__version__",
]
