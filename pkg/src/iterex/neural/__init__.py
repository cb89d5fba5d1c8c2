"""Small recurrent seq2seq extractor with attention, copy and iterative memory."""

from .extractor import (
    GenerationResult,
    Iteration,
    Seq2SeqExtractor,
    TrainingDiverged,
    TrainResult,
    covered_attention,
)
from .model import ModelConfig
from .vocab import Vocab

__all__ = ["GenerationResult", "Iteration", "ModelConfig", "Seq2SeqExtractor", "TrainResult",
           "TrainingDiverged", "Vocab", "covered_attention"]
