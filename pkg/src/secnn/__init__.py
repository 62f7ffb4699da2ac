"""Residual squeeze-and-excitation CNN engine on numpy, with its training and evaluation pipeline."""

from .kernels import BACKEND
from .tensor import Tensor

__version__ = "0.1.0"
