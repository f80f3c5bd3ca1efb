"""Dual soft/hard denoising sequential recommender with curriculum training."""

from .config import RunConfig
from .model import DenoisingRecommender

__all__ = ["RunConfig", "DenoisingRecommender"]
__version__ = "0.1.0"
