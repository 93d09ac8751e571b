from .config import ModelConfig, LevelLogits, QualityScore, AlignmentFeature, FidelityFeature
from .frames import FrameReadError, frame_indices, sample_frames, load_frame_files
from .tokenizer import Tokenizer, LEVEL_WORDS
from .network import Network, FROZEN_GROUPS, PARAMETER_GROUPS
from .checkpoint import CheckpointError, save_checkpoint, load_checkpoint
from .regression import level_expectation

__all__ = [
    "ModelConfig", "LevelLogits", "QualityScore", "AlignmentFeature", "FidelityFeature",
    "FrameReadError", "frame_indices", "sample_frames", "load_frame_files",
    "Tokenizer", "LEVEL_WORDS",
    "Network", "FROZEN_GROUPS", "PARAMETER_GROUPS",
    "CheckpointError", "save_checkpoint", "load_checkpoint",
    "level_expectation",
]
