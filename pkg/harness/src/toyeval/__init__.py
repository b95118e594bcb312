"""toyeval: reference evaluation oracle for toy-transformer weight files."""

from .container import FormatError, read_float_tensors
from .dataset import CLASSES, SEQ_LEN, VOCAB, generate_dataset, load_dataset
from .model import ArchitectureError, ToyClassifier, evaluate_metrics

__version__ = "0.1.0"
