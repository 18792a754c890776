"""Hilbert space-filling curve keys for point clouds.

Points are first pushed through a fixed affine map onto the unit cube,
quantized to ``bits`` bits per coordinate and then converted to their
position along the Hilbert curve with Skilling's transpose construction
(Gray code plus per-level rotations/reflections).

Keys have ``d * bits`` bits, which exceeds 64 for moderate dimensions, so
sorting works on a stack of 64-bit words holding consecutive curve levels,
compared lexicographically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

DEFAULT_BITS = 16
MARGIN = 0.05


@dataclass(frozen=True)
class BoxMapping:
    """Affine, coordinate-wise map of a bounding box onto ``[0, 1)^d``."""

    lower: np.ndarray
    width: np.ndarray

    @classmethod
    def from_data(cls, data, margin: float = MARGIN) -> "BoxMapping":
        data = np.asarray(data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        lo = data.min(axis=0)
        hi = data.max(axis=0)
        span = hi - lo
        # constant coordinates still need a non-degenerate box
        span = np.where(span > 0, span, np.maximum(np.abs(lo), 1.0))
        return cls(lower=lo - margin * span, width=span * (1.0 + 2.0 * margin))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def __call__(self, data) -> tuple[np.ndarray, int]:
        """Map ``data`` into the unit cube; return mapped points and clamp count."""
        u = (np.asarray(data, dtype=float) - self.lower) / self.width
        outside = (u < 0.0) | (u >= 1.0)
        return u, int(outside.any(axis=1).sum())


def quantize(u: np.ndarray, bits: int) -> np.ndarray:
    side = 1 << bits
    cells = np.floor(u * side)
    return np.clip(cells, 0, side - 1).astype(np.uint64)


def _transpose(cells: np.ndarray, bits: int) -> np.ndarray:
    return _kernels.hilbert_transpose(np.ascontiguousarray(cells, dtype=np.uint64), bits)


def _level_words(x: np.ndarray, bits: int) -> np.ndarray:
    return _kernels.level_words(x, bits)


def hilbert_index(point, mapping: BoxMapping, bits: int = DEFAULT_BITS) -> int:
    """Position of ``point`` along the Hilbert curve, as a Python integer.

    For ``d == 1`` the curve is the identity and the key is the quantized
    coordinate. Points outside the mapped box are clamped to its boundary.
    """
    if bits < 1:
        raise ValueError("bits must be positive")
    pt = np.atleast_1d(np.asarray(point, dtype=float))[None, :]
    u, _ = mapping(pt)
    cells = quantize(u, bits)
    if cells.shape[1] == 1:
        return int(cells[0, 0])
    x = _transpose(cells, bits)
    key = 0
    for level in range(bits - 1, -1, -1):
        for i in range(x.shape[1]):
            key = (key << 1) | int((int(x[0, i]) >> level) & 1)
    return key


def hilbert_order(data, mapping: BoxMapping | None = None, bits: int = DEFAULT_BITS):
    """Stable permutation sorting the rows of ``data`` along the Hilbert curve.

    Returns ``(perm, clamped)`` where ``clamped`` counts rows that fell
    outside the mapping box. With ``d == 1`` the raw values are sorted: the
    curve is the identity, and skipping quantization keeps the order exact.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if mapping is None:
        mapping = BoxMapping.from_data(data)
    u, clamped = mapping(data)
    if data.shape[1] == 1:
        return np.argsort(data[:, 0], kind="stable"), clamped
    x = _transpose(quantize(u, bits), bits)
    words = _level_words(x, bits)
    if words.shape[0] == 1:
        return np.argsort(words[0], kind="stable"), clamped
    # lexsort treats the last key as primary and is stable
    perm = np.lexsort(words[::-1])
    return perm, clamped
