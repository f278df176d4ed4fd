"""Offline extractor: runs a contextual language model over pre-tokenized
sentences and writes per-token vectors in the CEMB binary format."""

from .cemb import read_cemb, write_cemb
from .encoders import MisalignmentError, ModelLoadError, build_encoder
from .extract import ExtractionJob, ExtractReport, extract

__version__ = "0.1.0"

__all__ = [
    "read_cemb",
    "write_cemb",
    "MisalignmentError",
    "ModelLoadError",
    "build_encoder",
    "ExtractionJob",
    "ExtractReport",
    "extract",
    "__version__",
]
