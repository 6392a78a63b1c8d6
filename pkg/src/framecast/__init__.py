"""framecast: temporal frame interpolation and short-horizon extrapolation
for single-channel gray-scale imagery.

Pipeline: non-parametric TV-L1 optical flow, alpha-scaled backward warping,
and an optional learned fusion/refinement stage that corrects intensity
changes pure warping cannot represent.
"""

__version__ = "0.1.0"

from .grid import (
    as_field,
    as_flow,
    as_frame,
    build_pyramid,
    divergence,
    downsample,
    forward_gradient,
    gradient,
    resize_bilinear,
    sample_bilinear,
)
from .tvl1 import Tvl1Params, Tvl1Trace, estimate_flow, median_filter_flow
from .warping import extrapolate, flow_between, interpolate, rollout, warp_backward
from .refinement import (
    Refiner,
    RefinerConfig,
    frame_refiner,
    fuse,
    non_local_attention,
    refine,
    refine_frame,
)
from .training import NumericalError, TrainOptions, train
from .metrics import EvalReport, evaluate, linear_interp_baseline, psnr, ssim

__all__ = [
    "__version__",
    "as_field",
    "as_flow",
    "as_frame",
    "build_pyramid",
    "divergence",
    "downsample",
    "forward_gradient",
    "gradient",
    "resize_bilinear",
    "sample_bilinear",
    "Tvl1Params",
    "Tvl1Trace",
    "estimate_flow",
    "median_filter_flow",
    "extrapolate",
    "flow_between",
    "interpolate",
    "rollout",
    "warp_backward",
    "Refiner",
    "RefinerConfig",
    "frame_refiner",
    "fuse",
    "non_local_attention",
    "refine",
    "refine_frame",
    "NumericalError",
    "TrainOptions",
    "train",
    "EvalReport",
    "evaluate",
    "linear_interp_baseline",
    "psnr",
    "ssim",
]
