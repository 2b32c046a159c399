"""Feature extraction from frozen pretrained vision encoders into the
two-file embedding format (JSON manifest + raw f32 rows)."""

from .datasets import ImageSource, open_source
from .errors import DatasetError, ExtractorError, RegistryError
from .extract import extract
from .registry import ModelSpec, build_model, build_transform, get_spec, load_registry

__version__ = "0.1.0"

__all__ = [
    "DatasetError",
    "ExtractorError",
    "ImageSource",
    "ModelSpec",
    "RegistryError",
    "build_model",
    "build_transform",
    "extract",
    "get_spec",
    "load_registry",
    "open_source",
]
