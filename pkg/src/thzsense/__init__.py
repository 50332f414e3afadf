"""THz FMCW radar sensing with a pair of preconfigured reflecting surfaces.

Synthesizes the two-path interference echo over a chirp and recovers
target angles by exhaustive search or sparse reconstruction.
"""
from .array import PhaseProfile, Surface, UlaSpec, beamform_profile, pattern_gain, steering_vector
from .estimate import (
    ForwardModel,
    PipelineConfig,
    TargetPrior,
    brute_force_multi,
    brute_force_single,
    lasso,
    omp,
    per_range_pipeline,
)
from .geometry import Point2, SceneGeometry, TargetPlacement
from .kernels import BACKEND
from .model import AngleGrid, build_sensing_matrix, model_vector, mutual_coherence, squint_sweep
from .wavefield import FrequencyGrid, Measurement, NoiseSpec, WaveformSpec, multi_target_echo, twopath_echo

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AngleGrid",
    "ForwardModel",
    "FrequencyGrid",
    "Measurement",
    "NoiseSpec",
    "PhaseProfile",
    "PipelineConfig",
    "Point2",
    "SceneGeometry",
    "Surface",
    "TargetPlacement",
    "TargetPrior",
    "UlaSpec",
    "WaveformSpec",
    "beamform_profile",
    "brute_force_multi",
    "brute_force_single",
    "build_sensing_matrix",
    "lasso",
    "model_vector",
    "multi_target_echo",
    "mutual_coherence",
    "omp",
    "pattern_gain",
    "per_range_pipeline",
    "squint_sweep",
    "steering_vector",
    "twopath_echo",
]
