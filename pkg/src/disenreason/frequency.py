"""Frequency-domain behavior disentanglement.

A mixed account sequence is viewed as s-length temporal signals, one per
embedding dimension. The half-spectrum is partitioned into contiguous
sub-bands of width B; each sub-band, zero-embedded back at its original
bins and inverse-transformed, is one behavioral pattern. A learned softmax
gate fuses the patterns, and the final temporal position of the fused
sequence is the reasoning pivot.

The same operator applied to a single d-vector (features as the signal
axis) is the extraction map used by the residual reasoning stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numeric import softmax

__all__ = [
    "num_bins",
    "band_edges",
    "to_frequency",
    "partition_bands",
    "band_to_time",
    "band_projectors",
    "FusionProjection",
    "BehaviorDecomposition",
    "fusion_weights",
    "fuse_and_pivot",
    "disentangle",
    "disentangle_vector",
]


def num_bins(length: int) -> int:
    """Non-redundant half-spectrum size for a real signal: length//2 + 1."""
    return length // 2 + 1


def band_edges(n_freq_bins: int, bandwidth: int) -> list[tuple[int, int]]:
    """Partition [0, f) into ceil(f/B) contiguous slices of width B.

    The final band may be narrower when B does not divide f. A bandwidth
    at or beyond f yields a single full-spectrum band.
    """
    if bandwidth < 1:
        raise ValueError("bandwidth must be >= 1")
    edges = []
    lo = 0
    while lo < n_freq_bins:
        hi = min(lo + bandwidth, n_freq_bins)
        edges.append((lo, hi))
        lo = hi
    return edges


def to_frequency(seq_embed: np.ndarray) -> np.ndarray:
    """Half-spectrum of each embedding dimension's temporal signal.

    Input is s x d; output is (s//2 + 1) x d complex, transformed along the
    temporal axis independently per dimension.
    """
    seq_embed = np.asarray(seq_embed, dtype=np.float64)
    if seq_embed.ndim != 2 or seq_embed.shape[0] < 1:
        raise ValueError("expected a non-empty s x d sequence representation")
    return np.fft.rfft(seq_embed, axis=0)


def partition_bands(spectrum: np.ndarray, bandwidth: int) -> list[np.ndarray]:
    """Slice the f x d spectrum into its sub-bands (row ranges)."""
    edges = band_edges(spectrum.shape[0], bandwidth)
    return [spectrum[lo:hi] for lo, hi in edges]


def band_to_time(band: np.ndarray, start: int, length: int) -> np.ndarray:
    """Inverse-transform one sub-band back to a length-s temporal pattern.

    The band's bins are embedded at rows [start, start+width) of an
    otherwise-zero half-spectrum before the inverse transform, which is the
    zero-padding the band slicing implies.
    """
    band = np.asarray(band, dtype=np.complex128)
    if band.ndim != 2:
        raise ValueError("band must be a width x d slice of the spectrum")
    f = num_bins(length)
    if start < 0 or start + band.shape[0] > f:
        raise ValueError(
            f"band rows [{start}, {start + band.shape[0]}) fall outside the "
            f"{f}-bin spectrum of a length-{length} signal"
        )
    full = np.zeros((f, band.shape[1]), dtype=np.complex128)
    full[start : start + band.shape[0]] = band
    return np.fft.irfft(full, n=length, axis=0)


@lru_cache(maxsize=None)
def band_projectors(length: int, bandwidth: int) -> np.ndarray:
    """Materialized per-band linear maps, shape (Z, length, length).

    Projector z sends a length-s signal to its band-z pattern; because the
    pipeline transform -> mask -> inverse is linear with fixed
    coefficients, applying it to the identity yields the exact matrix. The
    transpose of each projector is its adjoint, which is what backprop
    through the decomposition uses.
    """
    spectrum = np.fft.rfft(np.eye(length), axis=0)
    edges = band_edges(num_bins(length), bandwidth)
    projectors = np.empty((len(edges), length, length))
    for z, (lo, hi) in enumerate(edges):
        masked = np.zeros_like(spectrum)
        masked[lo:hi] = spectrum[lo:hi]
        projectors[z] = np.fft.irfft(masked, n=length, axis=0)
    projectors.flags.writeable = False
    return projectors


@dataclass
class FusionProjection:
    """Learned gate parameters: a d -> Z affine map for the sequence gate
    and a d -> Z' affine map for the single-vector variant."""

    seq_weight: np.ndarray  # d x Z
    seq_bias: np.ndarray  # Z
    vec_weight: np.ndarray  # d x Z'
    vec_bias: np.ndarray  # Z'


@dataclass
class BehaviorDecomposition:
    """Stage-one artifacts for one sequence: the spectrum, its band slices,
    the per-band temporal patterns, the fusion weights, the fused sequence,
    and the reasoning pivot (final temporal position of the fusion)."""

    spectrum: np.ndarray  # f x d complex
    edges: list[tuple[int, int]]
    patterns: np.ndarray  # Z x s x d
    weights: np.ndarray  # Z
    fused: np.ndarray  # s x d
    pivot: np.ndarray  # d


def _pool(seq_embed: np.ndarray, valid_len: int, mode: str) -> np.ndarray:
    if mode == "mean":
        valid_len = max(1, min(valid_len, seq_embed.shape[0]))
        return seq_embed[-valid_len:].mean(axis=0)
    if mode == "last":
        return seq_embed[-1]
    raise ValueError(f"unknown gate pooling mode {mode!r}")


def fusion_weights(
    seq_embed: np.ndarray,
    valid_len: int,
    weight: np.ndarray,
    bias: np.ndarray,
    pooling: str = "mean",
) -> np.ndarray:
    """Softmax gate over the behavioral patterns.

    The sequence is reduced to a d-vector (mean over non-padding positions
    by default), pushed through the learned affine map, and normalized.
    """
    pooled = _pool(np.asarray(seq_embed, dtype=np.float64), valid_len, pooling)
    return softmax(weight.T @ pooled + bias)


def fuse_and_pivot(
    patterns: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted sum of the Z patterns, and its final temporal position.

    Left padding guarantees the last row corresponds to the most recent
    real interaction, which is what the pivot must summarize.
    """
    patterns = np.asarray(patterns, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if patterns.ndim != 3 or patterns.shape[0] != weights.shape[0]:
        raise ValueError("patterns must be Z x s x d matching Z weights")
    fused = np.tensordot(weights, patterns, axes=1)
    return fused, fused[-1].copy()


def disentangle(
    seq_embed: np.ndarray,
    valid_len: int,
    projection: FusionProjection,
    bandwidth: int,
    pooling: str = "mean",
) -> BehaviorDecomposition:
    """Full stage one on a sequence representation: spectrum, band patterns,
    adaptive fusion, pivot."""
    seq_embed = np.asarray(seq_embed, dtype=np.float64)
    s = seq_embed.shape[0]
    spectrum = to_frequency(seq_embed)
    edges = band_edges(spectrum.shape[0], bandwidth)
    patterns = np.stack(
        [band_to_time(spectrum[lo:hi], lo, s) for lo, hi in edges]
    )
    weights = fusion_weights(
        seq_embed, valid_len, projection.seq_weight, projection.seq_bias, pooling
    )
    fused, pivot = fuse_and_pivot(patterns, weights)
    return BehaviorDecomposition(
        spectrum=spectrum,
        edges=edges,
        patterns=patterns,
        weights=weights,
        fused=fused,
        pivot=pivot,
    )


def _vector_components(
    state: np.ndarray, weight: np.ndarray, bias: np.ndarray, bandwidth: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gate and per-band reconstructions for the single-vector operator.

    Returns (output, gate, band_vectors) where band_vectors is Z' x d; the
    extra pieces are what backprop needs.
    """
    projectors = band_projectors(state.shape[0], bandwidth)
    gate = softmax(weight.T @ state + bias)
    band_vectors = projectors @ state
    return gate @ band_vectors, gate, band_vectors


def disentangle_vector(
    state: np.ndarray, weight: np.ndarray, bias: np.ndarray, bandwidth: int
) -> np.ndarray:
    """The disentanglement operator degenerated to a single d-vector.

    The vector is treated as a length-d signal along the feature axis:
    same band partition (width B of the d//2 + 1 bins), same zero-pad and
    inverse transform per band, same softmax gating, with the gate driven
    by the vector itself. With a single band this is the identity map.
    """
    state = np.asarray(state, dtype=np.float64)
    if state.ndim != 1 or state.size < 1:
        raise ValueError("expected a non-empty vector state")
    out, _, _ = _vector_components(state, weight, bias, bandwidth)
    return out
