"""Contextual prisoner's dilemma whose payoffs depend on a digit label's parity.

Context labels come either from a synthetic uniform digit stream or from an
ingested label sequence (for instance an IDX1 label file); only the parity of
each digit affects rewards.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

IDX1_MAGIC = 0x00000801


class Action(IntEnum):
    C = 0
    D = 1


class Parity(IntEnum):
    EVEN = 0
    ODD = 1


@dataclass(frozen=True)
class ContextLabel:
    digit: int

    def __post_init__(self):
        if not 0 <= self.digit <= 9:
            raise ValueError(f"digit out of range: {self.digit}")

    @property
    def parity(self) -> Parity:
        return Parity(self.digit % 2)


@dataclass(frozen=True)
class RewardPair:
    reward_a: float
    reward_b: float

    @property
    def joint(self) -> float:
        return self.reward_a + self.reward_b


# (action_a, action_b) -> (reward_a, reward_b) under odd parity.
BASE_PAYOFF = {
    (Action.C, Action.C): (3.0, 3.0),
    (Action.D, Action.C): (5.0, -1.0),
    (Action.C, Action.D): (-1.0, 5.0),
    (Action.D, Action.D): (0.0, 0.0),
}
EVEN_COOPERATION_BONUS = 2.0


def payoff(action_a: Action, action_b: Action, ctx: ContextLabel) -> RewardPair:
    ra, rb = BASE_PAYOFF[(Action(action_a), Action(action_b))]
    # Bonus only for mutual cooperation; the sucker's -1 holds in every context.
    if ctx.parity is Parity.EVEN and action_a == Action.C and action_b == Action.C:
        ra += EVEN_COOPERATION_BONUS
        rb += EVEN_COOPERATION_BONUS
    return RewardPair(ra, rb)


@dataclass
class ContextSource:
    """Yields context labels.

    With ``labels=None`` digits are drawn uniformly from 0-9 using the caller's
    generator. With an ingested sequence, labels are replayed in order and wrap
    around when exhausted.
    """

    labels: np.ndarray | None = None
    _pos: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.size == 0:
                raise ValueError("ingested label sequence is empty")
            if self.labels.min() < 0 or self.labels.max() > 9:
                raise ValueError("ingested labels must be digits 0-9")

    @property
    def synthetic(self) -> bool:
        return self.labels is None

    def next_context(self, rng: np.random.Generator) -> ContextLabel:
        if self.labels is None:
            return ContextLabel(int(rng.integers(0, 10)))
        digit = int(self.labels[self._pos % self.labels.size])
        self._pos += 1
        return ContextLabel(digit)


class IdxFormatError(ValueError):
    pass


def parse_idx1(data: bytes) -> np.ndarray:
    """Decode an IDX1 label file: magic 0x00000801, big-endian u32 count, u8 labels."""
    if len(data) < 8:
        raise IdxFormatError(f"truncated header ({len(data)} bytes)")
    magic, count = struct.unpack(">II", data[:8])
    if magic != IDX1_MAGIC:
        raise IdxFormatError(f"bad magic 0x{magic:08x}, expected 0x{IDX1_MAGIC:08x}")
    body = data[8:]
    if len(body) != count:
        raise IdxFormatError(f"header declares {count} labels, file holds {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).copy()


def encode_idx1(labels) -> bytes:
    arr = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", IDX1_MAGIC, arr.size) + arr.tobytes()


def load_idx1(path: str | Path) -> np.ndarray:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return parse_idx1(fh.read())
