"""linelab: train and dissect tiny autoencoders on synthetic line images."""

from .backend import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
