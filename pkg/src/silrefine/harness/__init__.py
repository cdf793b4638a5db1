"""Files, synthetic scenes, overlays and the command-line interface."""

from .corpus import box_mesh, default_vehicles, planar_square, vehicle_mesh, write_default_corpus
from .fixtures import cutoff_divergence_case, score_cutoff
from .io import (
    PredictionFile,
    Scene,
    load_predictions,
    load_scenes,
    save_predictions,
    save_scenes,
)
from .synth import NoiseModel, SynthConfig, synth_generate, write_synth

__all__ = [
    "NoiseModel",
    "PredictionFile",
    "Scene",
    "SynthConfig",
    "box_mesh",
    "cutoff_divergence_case",
    "default_vehicles",
    "load_predictions",
    "load_scenes",
    "planar_square",
    "save_predictions",
    "save_scenes",
    "score_cutoff",
    "synth_generate",
    "vehicle_mesh",
    "write_default_corpus",
    "write_synth",
]
