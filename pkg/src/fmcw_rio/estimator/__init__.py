from .config import EstimatorConfig, load_estimator_config
from .losses import RobustLoss, cauchy, huber
from .odometry import (
    OdometryResult,
    RadarInertialOdometry,
    initialize_at_rest,
    propagate_high_rate,
    run_odometry,
)
from .preintegration import ImuBuffer, PreintegratedImu, preintegrate
from .smoother import LinearFactor, PriorFactor, Smoother
from .state import Extrinsics, NavState, VectorState

__all__ = [
    "EstimatorConfig",
    "Extrinsics",
    "ImuBuffer",
    "LinearFactor",
    "NavState",
    "OdometryResult",
    "PreintegratedImu",
    "PriorFactor",
    "RadarInertialOdometry",
    "RobustLoss",
    "Smoother",
    "VectorState",
    "cauchy",
    "huber",
    "initialize_at_rest",
    "load_estimator_config",
    "preintegrate",
    "propagate_high_rate",
    "run_odometry",
]
