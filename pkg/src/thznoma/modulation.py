"""Gray-coded square QAM."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError


def _gray_pam(m):
    """Gray labels of an m-level PAM, levels ordered from most negative."""
    return np.arange(m) ^ (np.arange(m) >> 1)


@dataclass(frozen=True)
class Constellation:
    """Unit-average-power square QAM with Gray labels.

    ``points[i]`` carries the bit label ``labels[i]`` (MSB first); the first
    half of the bits select the in-phase level, the rest the quadrature level.
    """

    order: int
    points: np.ndarray
    labels: np.ndarray

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    def scaled(self, amplitude):
        return self.points * amplitude


@lru_cache(maxsize=None)
def qam(order: int) -> Constellation:
    if order not in (4, 16, 64):
        raise DomainError("supported QAM orders are 4, 16 and 64")
    m = int(round(np.sqrt(order)))
    half = int(np.log2(m))
    levels = 2.0 * np.arange(m) - (m - 1)
    g = _gray_pam(m)
    # point index = i_level * m + q_level
    pts = (levels[:, None] + 1j * levels[None, :]).ravel()
    code = ((g[:, None] << half) | g[None, :]).ravel()
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    nb = 2 * half
    labels = ((code[:, None] >> np.arange(nb - 1, -1, -1)) & 1).astype(np.uint8)
    pts.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(order, pts, labels)


def bits_to_indices(bits, const: Constellation):
    b = np.asarray(bits, dtype=np.uint8)
    k = const.bits_per_symbol
    if b.shape[-1] % k:
        raise DomainError(f"bit length must be a multiple of {k}")
    b = b.reshape(b.shape[:-1] + (-1, k))
    code = (b.astype(np.int64) << np.arange(k - 1, -1, -1)).sum(axis=-1)
    lookup = np.empty(const.order, dtype=np.int64)
    lookup[(const.labels.astype(np.int64) << np.arange(k - 1, -1, -1)).sum(axis=1)] = np.arange(const.order)
    return lookup[code]


def indices_to_bits(idx, const: Constellation):
    idx = np.asarray(idx, dtype=np.int64)
    bits = const.labels[idx]
    return bits.reshape(idx.shape[:-1] + (-1,)) if idx.ndim else bits


def modulate(bits, const: Constellation):
    """Map bits (last axis) to symbols."""
    return const.points[bits_to_indices(bits, const)]


def slice_indices(x, points):
    """Index of the nearest point for every entry of ``x``."""
    x = np.asarray(x)
    return np.abs(x[..., None] - points).argmin(axis=-1)


def demap(symbols, const: Constellation, amplitude=1.0):
    """Hard nearest-point demapping back to bits."""
    idx = slice_indices(symbols, const.points * amplitude)
    return indices_to_bits(np.atleast_1d(idx), const)
