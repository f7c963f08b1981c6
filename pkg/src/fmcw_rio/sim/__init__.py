from .dataset import read_dataset, write_dataset
from .synth import (
    Environment,
    RigSpec,
    SimDataset,
    generate_dataset,
    radar_velocity,
    synth_baro,
    synth_imu,
    synth_radar_scan,
)
from .trajectory import TrajectorySpec, TruthSample, sample_trajectory

__all__ = [
    "Environment",
    "RigSpec",
    "SimDataset",
    "TrajectorySpec",
    "TruthSample",
    "generate_dataset",
    "radar_velocity",
    "read_dataset",
    "sample_trajectory",
    "synth_baro",
    "synth_imu",
    "synth_radar_scan",
    "write_dataset",
]
