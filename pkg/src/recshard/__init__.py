"""recshard: analytical training-performance model and embedding placement
planner for recommendation models.

Feed it a model shape, a hardware platform, and a placement strategy; get
back per-stage iteration costs, throughput, power efficiency, and placement
plans, plus sweep and calibration machinery on top.
"""

from . import cluster, costmodel, hardware, model, placement, sweep
from .cluster import ClusterTopology, SyncConfig, TrainingScenario, cluster_throughput
from .costmodel import (
    CalibrationCoefficients,
    CostBreakdown,
    DEFAULT_COEFFICIENTS,
    calibrate,
    evaluate,
)
from .errors import (
    ConfigError,
    InfeasibleError,
    InvalidTopologyError,
    RecshardError,
    TooLargeError,
)
from .hardware import PlatformSpec, platform_preset
from .model import ModelConfig, benchmark_model, generate_synthetic_model, production_preset
from .placement import PlacementPlan, PlacementStrategy, parse_strategy, plan_placement
from .sweep import SweepSpec, reproduce_figure, run_sweep

__version__ = "0.1.0"

__all__ = [
    "CalibrationCoefficients",
    "ClusterTopology",
    "ConfigError",
    "CostBreakdown",
    "DEFAULT_COEFFICIENTS",
    "InfeasibleError",
    "InvalidTopologyError",
    "ModelConfig",
    "PlacementPlan",
    "PlacementStrategy",
    "PlatformSpec",
    "RecshardError",
    "SweepSpec",
    "SyncConfig",
    "TooLargeError",
    "TrainingScenario",
    "benchmark_model",
    "calibrate",
    "cluster",
    "cluster_throughput",
    "costmodel",
    "evaluate",
    "generate_synthetic_model",
    "hardware",
    "model",
    "parse_strategy",
    "placement",
    "plan_placement",
    "platform_preset",
    "production_preset",
    "reproduce_figure",
    "run_sweep",
    "sweep",
    "__version__",
]
