"""Graph-based discrete denoising diffusion for MIMO detection, with
classical lattice baselines and a benchmark harness."""

from ._kernels import available_backends, backend_name
from .bench import (
    BenchConfig,
    BenchmarkRecord,
    compute_ser,
    emit_plotdata,
    run_benchmark,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .diffusion import NoiseSchedule, TransitionSet, default_schedule, transition_matrix
from .inference import (
    CalibrationTable,
    StepSchedule,
    calibrate_tB,
    cold_start_detect,
    load_calibration,
    make_step_schedule,
    save_calibration,
    warm_start_detect,
)
from .instances import (
    ComplexSystem,
    Constellation,
    ProblemInstance,
    RealSystem,
    inverse_transform,
    load_instance,
    realify,
    regularize,
    sample_instance,
    save_instance,
    sigma_from_snr,
    transform,
)
from .lattice import (
    DetectorResult,
    QRFactorization,
    babai_box,
    brute_force_ils,
    kbest_klein_babai,
    klein_sample,
    qr_factor,
)
from .net import (
    GraphFeatures,
    NetworkParams,
    forward,
    init_graph_features,
    normalize_symbols,
    sinusoidal_embed,
)
from .training import OptimizerState, TrainConfig, loss_ce, loss_vb, train, train_step

__version__ = "0.1.0"

__all__ = [
    "available_backends",
    "backend_name",
    "BenchConfig",
    "BenchmarkRecord",
    "compute_ser",
    "emit_plotdata",
    "run_benchmark",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "NoiseSchedule",
    "TransitionSet",
    "default_schedule",
    "transition_matrix",
    "CalibrationTable",
    "StepSchedule",
    "calibrate_tB",
    "cold_start_detect",
    "load_calibration",
    "make_step_schedule",
    "save_calibration",
    "warm_start_detect",
    "ComplexSystem",
    "Constellation",
    "ProblemInstance",
    "RealSystem",
    "inverse_transform",
    "load_instance",
    "realify",
    "regularize",
    "sample_instance",
    "save_instance",
    "sigma_from_snr",
    "transform",
    "DetectorResult",
    "QRFactorization",
    "babai_box",
    "brute_force_ils",
    "kbest_klein_babai",
    "klein_sample",
    "qr_factor",
    "GraphFeatures",
    "NetworkParams",
    "forward",
    "init_graph_features",
    "normalize_symbols",
    "sinusoidal_embed",
    "OptimizerState",
    "TrainConfig",
    "loss_ce",
    "loss_vb",
    "train",
    "train_step",
    "__version__",
]
