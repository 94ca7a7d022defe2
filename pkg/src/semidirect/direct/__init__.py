from .window import (RESIDUAL_PATTERN, DirectKeyframe, DirectPoint,
                     MarginalizationPrior, ResidualTerm, Window)
from .ba import (gradient_weight, photometric_residual, total_energy,
                 optimize_window, marginalize_points,
                 select_marginalization_keyframe, marginalize_keyframe)
from .tracker import TrackingResult, need_new_keyframe, track_frame
from .points import select_candidate_points
from .bootstrap import Bootstrapper
from .frontend import DirectOdometry, FrameResult

__all__ = [
    "RESIDUAL_PATTERN", "DirectKeyframe", "DirectPoint", "MarginalizationPrior",
    "ResidualTerm", "Window", "gradient_weight", "photometric_residual",
    "total_energy", "optimize_window", "marginalize_points",
    "select_marginalization_keyframe", "marginalize_keyframe",
    "TrackingResult", "need_new_keyframe", "track_frame",
    "select_candidate_points", "Bootstrapper", "DirectOdometry", "FrameResult",
]
