"""Flat multimodal interaction transformer for multimodal named entity recognition."""
from .kernels import BACKEND
from .lattice import FlatLattice, ObjectAnnotation, ObjectKind, build_lattice
from .model import FMIT, ModelConfig
from .trainer import TrainConfig, load_model, save_model, train

__version__ = "0.1.0"

__all__ = ["BACKEND", "FMIT", "FlatLattice", "ModelConfig", "ObjectAnnotation", "ObjectKind", "TrainConfig",
           "build_lattice", "load_model", "save_model", "train"]
