"""Contrastive-encoder / clustered-latent / stochastic-decoder pipeline for
generating discontinuous 2D distributions."""

from .datasets import Batch2D, DatasetId, sample_dataset
from .latent import LatentSamplingMode

__version__ = "0.1.0"

__all__ = ["Batch2D", "DatasetId", "LatentSamplingMode", "sample_dataset", "__version__"]
