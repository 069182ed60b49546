"""Attention-based seq2seq ASR with encoder transfer to dementia screening."""

__version__ = "0.1.0"

from .audio import AudioBuffer, DspConfig, FeatureMatrix
from .transfer import FreezeSpec, HeadConfig, SubjectSample

__all__ = ["AudioBuffer", "DspConfig", "FeatureMatrix",
           "FreezeSpec", "HeadConfig", "SubjectSample", "__version__"]
