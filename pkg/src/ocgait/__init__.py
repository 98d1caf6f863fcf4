"""ocgait: obstacle-crossing gait toolkit for powered transfemoral prostheses.

Stride segmentation and synthetic gait data, genetic search over joint-angle
prediction networks, a DTW-based streaming gait-phase-progress estimator,
and a replay harness with Gaussian noise injection and variable sample
rates.
"""

from .dtw_core import WarpPath, dtw_brute_force, dtw_cost, dtw_distance
from .evolution import EvalConfig, FitnessRecord, GAConfig, Genome, evaluate_fitness, evolve
from .gait_data import (
    GaitTrajectory,
    StrideSegments,
    SubjectInfo,
    SyntheticGaitConfig,
    generate_synthetic,
    load_trajectory,
    resample,
    save_trajectory,
    segment_stride,
)
from .harness import (
    NoiseSweepReport,
    ReplayConfig,
    RunMetrics,
    add_gaussian_noise,
    compute_metrics,
    noise_sweep,
    replay,
)
from .phase_estimator import (
    ComparisonSequence,
    EstimatorConfig,
    EstimatorSession,
    ExtensionMode,
    ExtensionParams,
    ProgressEstimate,
    ReferenceSequence,
    TransformParams,
    extend_linear,
    extend_sinusoidal,
    map_progress_to_knee_index,
    optimize_match,
    scaled_window,
    select_extension,
    transform_window,
)
from .predictor import (
    LayerSpec,
    Network,
    NetworkSpec,
    PredictionPair,
    TrainConfig,
    adjust_swing,
    forward,
    init_network,
    train,
)

__version__ = "0.1.0"
