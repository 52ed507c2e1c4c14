"""Deterministic per-class anchor vectors derived from class names.

Prototypes stand in for frozen text-tower embeddings: fixed unit vectors
that never train.  Construction is pinned exactly (FNV-1a 64-bit hash of
the UTF-8 name, XOR seed, then an MMIX linear congruential stream mapped
to [-1, 1)) so any implementation in any language reproduces the same
matrix bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_LCG_MULT = 6364136223846793005
_LCG_INC = 1442695040888963407
_MASK64 = (1 << 64) - 1


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class PrototypeMatrix:
    """C x dim float64 matrix of unit rows, one per class name."""

    matrix: np.ndarray
    names: tuple

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"PrototypeMatrix: unknown class {name!r}") from None

    def row(self, name: str) -> np.ndarray:
        return self.matrix[self.index(name)]

    def subset(self, names) -> "PrototypeMatrix":
        names = tuple(names)
        rows = np.stack([self.row(n) for n in names])
        return PrototypeMatrix(matrix=rows, names=names)


def text_prototypes(names, dim: int = 64, seed: int = 0) -> PrototypeMatrix:
    """Build the anchor matrix for the given class names.

    Per name: state = fnv1a64(utf8(name)) XOR seed; then dim steps of
    state <- (6364136223846793005 * state + 1442695040888963407) mod 2^64,
    each mapped to 2 * ((state >> 11) / 2^53) - 1; the row is then
    normalized to unit length.
    """
    names = tuple(names)
    if len(names) == 0:
        raise ValueError("text_prototypes: no class names")
    if len(set(names)) != len(names):
        raise ValueError("text_prototypes: duplicate class names")
    if dim < 1:
        raise ValueError(f"text_prototypes: dim must be >= 1, got {dim}")
    rows = np.empty((len(names), dim), dtype=np.float64)
    for i, name in enumerate(names):
        state = _fnv1a64(name.encode("utf-8")) ^ (seed & _MASK64)
        for j in range(dim):
            state = (_LCG_MULT * state + _LCG_INC) & _MASK64
            rows[i, j] = 2.0 * ((state >> 11) / float(1 << 53)) - 1.0
        norm = float(np.linalg.norm(rows[i]))
        if norm < 1e-12:
            raise ValueError(f"text_prototypes: degenerate row for {name!r}")
        rows[i] /= norm
    return PrototypeMatrix(matrix=rows, names=names)
