"""Direction-of-arrival estimation with direct-path-dominance tests for wearable arrays."""

from .array_model import (
    ArrayGeometry,
    DoaGrid,
    SteeringSet,
    band_similarity_map,
    build_ideal_spectrum,
    build_steering_set,
    glasses_geometry,
    load_geometry,
    steering_vector,
)
from .doa_core import Algorithm, AnalysisConfig, BinEstimates, SimilarityKind, analyze, similarity
from .eval_harness import EvalConfig, GroundTruth, RunReport, evaluate_run, evaluate_sweep
from .scene_sim import SceneSpec, synthesize
from .tf_transform import MultichannelAudio, TFGrid, stft

__version__ = "0.1.0"
