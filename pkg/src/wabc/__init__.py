"""Wasserstein-distance tools for likelihood-free inference.

Distances between empirical distributions (exact, Hilbert-curve, swapping,
Sinkhorn, energy, MMD), time-series reconstructions, a set of generative
models, an adaptive ABC-SMC sampler and minimum expected Wasserstein
estimation.
"""
from .distances import (
    EUCLIDEAN,
    DistanceResult,
    GroundMetric,
    energy_distance,
    exact_transport,
    hilbert_distance,
    hilbert_sort,
    mmd,
    sinkhorn_divergence,
    subsample_distance,
    swap_distance,
    wasserstein_1d,
)
from .discrepancy import DistanceSpec, combine_distances
from .models import InnovationStream, SimulationError, get_model
from .reconstruct import ReconstructionConfig, curve_embed, delay_reconstruct, residual_reconstruct

__version__ = "0.1.0"
