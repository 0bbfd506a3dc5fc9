"""Gyro-driven motion-blur synthesis: trajectories, warps, Bezier heatmaps, datasets, metrics."""

__version__ = "0.1.0"

from .blur_synth import SynthConfig, Triplet, compose_blur, dense_trajectory_fit, make_triplet
from .camera_geom import AxisAngleRotation, CameraIntrinsics, project, rotation_map, unproject
from .imu_ingest import ExposureWindow, GyroSample, integrate_window, parse_gyro_log
from .trajectory import BlurTrajectory, trace_point

__all__ = [
    "__version__", "SynthConfig", "Triplet", "compose_blur", "dense_trajectory_fit", "make_triplet",
    "AxisAngleRotation", "CameraIntrinsics", "project", "rotation_map", "unproject",
    "ExposureWindow", "GyroSample", "integrate_window", "parse_gyro_log",
    "BlurTrajectory", "trace_point",
]
