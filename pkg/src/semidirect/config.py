"""Run configuration: every tunable constant, with flat key = value file I/O."""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class RunConfig:
    # pipeline
    mode: str = "slam"            # vo: loop closing disabled
    deterministic: bool = True
    seed: int = 0
    async_coupling: bool = False  # run the feature module on a worker thread

    # direct module: windowed photometric BA
    max_kf: int = 7
    pyramid_levels: int = 3
    huber_photo: float = 9.0          # Huber threshold, gray levels
    grad_weight_c2: float = 2500.0    # c^2 of the gradient down-weighting
    affine_prior_scale: float = 1e-3  # lambda_a = lambda_b = this * n_residuals
    candidate_target: int = 700       # candidate points per keyframe
    active_target: int = 1400         # active point budget in the window
    ba_iterations: int = 6
    flow_threshold: float = 1.0       # px^2 mean squared flow -> new keyframe
    affine_threshold: float = 0.1     # |a_j - a_i| -> new keyframe
    rmse_threshold: float = 1.5       # x window-mean tracking RMSE -> new keyframe
    track_fail_rmse: float = 27.0     # gray levels, hard tracking failure
    track_min_valid: int = 50
    bootstrap_min_parallax: float = 2.0   # px median translation-induced flow
    bootstrap_max_attempts: int = 30

    # coupling
    scale_window: int = 30           # keyframe pairs for relative-scale alignment
    scale_smoothing: float = 0.5     # exponential filter factor; 0 disables
    queue_release_limit: int = 5     # > this many queued -> snapshot release

    # feature module
    lambda_pyr: float = 1.2
    feature_levels: int = 8
    max_features: int = 2500
    min_features: int = 1500
    covisibility_min_shared: int = 15     # theta_cov
    match_ratio: float = 0.8
    match_max_hamming: int = 64
    search_window_px: float = 15.0
    motion_ba_rounds: int = 4
    motion_ba_iterations: int = 10
    local_ba_iterations: int = 5          # halved evaluation setting
    min_refine_inliers: int = 15
    insert_match_threshold: int = 150
    insert_max_gap: int = 3
    cull_unmatched_after: int = 3
    recover_min_seeds: int = 100

    # loop closing
    loop_min_votes: int = 50              # theta_loop
    essential_min_shared: int = 100       # theta_ess
    loop_consistency: int = 3
    loop_min_inliers: int = 20
    loop_inlier_scene_frac: float = 0.05
    pose_graph_iterations: int = 30

    # evaluation
    association_gate_s: float = 0.010

    def __post_init__(self):
        if self.mode not in ("vo", "slam"):
            raise ValueError(f"mode must be 'vo' or 'slam', got {self.mode!r}")
        if self.max_kf < 3:
            raise ValueError("max_kf must be at least 3")
        if self.lambda_pyr <= 1.0:
            raise ValueError("lambda_pyr must be > 1")
        if self.huber_photo <= 0 or self.grad_weight_c2 <= 0:
            raise ValueError("photometric constants must be positive")
        if not 0.0 <= self.scale_smoothing < 1.0:
            raise ValueError("scale_smoothing must be in [0, 1)")


def _parse_value(kind, text: str):
    if kind is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return kind(text)


def load_config(path, **overrides) -> RunConfig:
    """Read a flat `key = value` file; unknown keys are an error."""
    known = {f.name: f.type for f in fields(RunConfig)}
    types = {f.name: type(getattr(RunConfig(), f.name)) for f in fields(RunConfig)}
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, text = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(types[key], text.strip())
    values.update(overrides)
    return RunConfig(**values)


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        for f in fields(RunConfig):
            fh.write(f"{f.name} = {getattr(cfg, f.name)}\n")
