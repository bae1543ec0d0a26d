"""Vector-quantized symbol bottleneck.

The codebook is a K x D matrix held in a :class:`~drcb.numeric.Param` so the
sender's optimizer can train it, plus per-entry usage counts for the current
monitoring window. Layer-4 shuffles and utilization-driven re-initialization
mutate the matrix in place so optimizer references stay valid.
"""
from __future__ import annotations

import numpy as np

from .numeric import Param

U_MIN = 0.6
COMMITMENT_BETA = 0.25


class Codebook:
    def __init__(self, entries: np.ndarray):
        entries = np.asarray(entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] < 2:
            raise ValueError(f"codebook must be K x D with K >= 2, got {entries.shape}")
        self.param = Param(entries, "codebook")
        self.usage = np.zeros(entries.shape[0], dtype=np.int64)

    @classmethod
    def uniform(cls, K: int, D: int, rng: np.random.Generator) -> "Codebook":
        return cls(rng.uniform(-1.0 / K, 1.0 / K, size=(K, D)))

    @property
    def entries(self) -> np.ndarray:
        return self.param.value

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    @property
    def D(self) -> int:
        return self.entries.shape[1]

    def record(self, index: int) -> None:
        self.usage[index] += 1

    def reset_usage(self) -> None:
        self.usage[:] = 0

    def snapshot(self) -> np.ndarray:
        return self.entries.copy()


def squared_distances(z: np.ndarray, entries: np.ndarray) -> np.ndarray:
    """||z - e_k||^2 for every entry; z may be a vector or a row batch."""
    diff = z[..., None, :] - entries
    return np.einsum("...kd,...kd->...k", diff, diff)


def quantize(z_e: np.ndarray, book: Codebook, count: bool = True) -> tuple[int, np.ndarray]:
    """Nearest codebook entry; ties go to the lowest index."""
    index = int(np.argmin(squared_distances(z_e, book.entries)))
    if count:
        book.record(index)
    return index, book.entries[index].copy()


def vq_loss(z_e: np.ndarray, e: np.ndarray, beta: float = COMMITMENT_BETA):
    """Commitment loss ||sg[z_e] - e||^2 + beta * ||z_e - sg[e]||^2.

    Returns ``(loss, grad_z_e, grad_e)``: the codebook term only moves ``e``
    and the commitment term only moves ``z_e``.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    diff = z_e - e
    sq = float(diff @ diff)
    return (1.0 + beta) * sq, 2.0 * beta * diff, -2.0 * diff


def straight_through(grad_z_q: np.ndarray) -> np.ndarray:
    """Backward of z_e + sg[z_q - z_e]: the encoder receives dL/dz_q unchanged."""
    return grad_z_q


def shuffle(book: Codebook, rng: np.random.Generator) -> Codebook:
    """Redraw every entry from U(-1/K, 1/K) and clear usage counts."""
    K = book.K
    book.entries[...] = rng.uniform(-1.0 / K, 1.0 / K, size=book.entries.shape)
    book.reset_usage()
    return book


def utilization(book: Codebook) -> float:
    return float(np.count_nonzero(book.usage)) / book.K


def reinit_unused(book: Codebook, rng: np.random.Generator) -> int:
    """Redraw zero-count entries only; returns how many rows changed."""
    unused = np.flatnonzero(book.usage == 0)
    if unused.size:
        K = book.K
        book.entries[unused] = rng.uniform(-1.0 / K, 1.0 / K, size=(unused.size, book.D))
    return int(unused.size)


def quantization_error(z: np.ndarray, book: Codebook) -> float:
    """Mean distance from each row of ``z`` to its nearest entry."""
    d2 = squared_distances(np.atleast_2d(z), book.entries)
    return float(np.sqrt(d2.min(axis=-1)).mean())


def batch_vq_loss(z: np.ndarray, book: Codebook, beta: float = COMMITMENT_BETA) -> float:
    """Mean commitment loss of encoder outputs against their nearest entries."""
    d2 = squared_distances(np.atleast_2d(z), book.entries)
    return float(((1.0 + beta) * d2.min(axis=-1)).mean())
