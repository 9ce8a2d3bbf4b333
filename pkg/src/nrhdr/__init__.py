"""Snapshot HDR imaging with regular and non-regular dual-size pixel layouts."""

from nrhdr.core import DimensionError, HdrImage, LayoutKind, SensorLayout, classify_pixels, make_layout
from nrhdr.recon import ReconstructionConfig, reconstruct
from nrhdr.sensor import CameraModel, SampledFrame, Validity, apply_camera, sample, simulate

__version__ = "0.1.0"

__all__ = [
    "CameraModel",
    "DimensionError",
    "HdrImage",
    "LayoutKind",
    "ReconstructionConfig",
    "SampledFrame",
    "SensorLayout",
    "Validity",
    "apply_camera",
    "classify_pixels",
    "make_layout",
    "reconstruct",
    "sample",
    "simulate",
]
