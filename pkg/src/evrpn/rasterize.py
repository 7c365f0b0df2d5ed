"""Pseudo-frame rasterization and binary erosion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .events import EventChunk, SensorGeometry, validate_events

ON_VALUE = 254


@dataclass(frozen=True, eq=False)
class PseudoFrame:
    """Latest event per pixel.

    ``cells`` holds the display coding ``p * 254`` of the latest event, so OFF
    events render as 0; ``occupied`` records every pixel that saw any event.
    """

    geometry: SensorGeometry
    cells: np.ndarray
    occupied: np.ndarray


@dataclass(frozen=True, eq=False)
class BinaryFrame:
    geometry: SensorGeometry
    bits: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, BinaryFrame):
            return NotImplemented
        return self.geometry == other.geometry and np.array_equal(self.bits, other.bits)


@dataclass(frozen=True, eq=False)
class StructuringElement:
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2 or mask.shape[0] % 2 == 0 or mask.shape[1] % 2 == 0:
            raise ConfigError(f"structuring element must be 2D with odd sides, got shape {mask.shape}")
        if not mask[mask.shape[0] // 2, mask.shape[1] // 2]:
            raise ConfigError("structuring element anchor (center) must be set")
        object.__setattr__(self, "mask", mask)

    @classmethod
    def square(cls, size: int = 3) -> "StructuringElement":
        return cls(np.ones((size, size), dtype=bool))

    @property
    def anchor(self) -> tuple[int, int]:
        return (self.mask.shape[0] // 2, self.mask.shape[1] // 2)


def build_frame(chunk: EventChunk, geometry: SensorGeometry) -> PseudoFrame:
    """Rasterize a chunk, later events overriding earlier ones at the same pixel."""
    events = chunk.events
    validate_events(events, geometry, require_sorted=False)
    h, w = geometry.shape
    cells = np.zeros(h * w, dtype=np.uint8)
    occupied = np.zeros(h * w, dtype=bool)
    if len(events):
        order = np.argsort(events["t"], kind="stable")
        lin = events["y"].astype(np.int64)[order] * w + events["x"][order]
        # last occurrence of each pixel in time order
        last = np.full(h * w, -1, dtype=np.int64)
        np.maximum.at(last, lin, np.arange(len(lin), dtype=np.int64))
        hit = np.flatnonzero(last >= 0)
        occupied[hit] = True
        cells[hit] = events["p"][order][last[hit]] * ON_VALUE
    return PseudoFrame(geometry, cells.reshape(h, w), occupied.reshape(h, w))


def binarize(frame: PseudoFrame) -> BinaryFrame:
    """Occupancy bits, blind to polarity."""
    return BinaryFrame(frame.geometry, frame.occupied.copy())


def erode(frame: BinaryFrame, se: StructuringElement | None = None, iterations: int = 1) -> BinaryFrame:
    """Binary erosion; neighbours outside the sensor count as unset."""
    se = se or StructuringElement.square(3)
    bits = frame.bits
    h, w = bits.shape
    ay, ax = se.anchor
    offsets = list(zip(*np.nonzero(se.mask)))
    for _ in range(iterations):
        padded = np.zeros((h + 2 * ay, w + 2 * ax), dtype=bool)
        padded[ay : ay + h, ax : ax + w] = bits
        out = np.ones((h, w), dtype=bool)
        for dy, dx in offsets:
            out &= padded[dy : dy + h, dx : dx + w]
        bits = out
    return BinaryFrame(frame.geometry, bits)


def to_pgm(frame: PseudoFrame) -> bytes:
    """Binary (P5) 8-bit PGM of the display coding."""
    h, w = frame.geometry.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(frame.cells, dtype=np.uint8).tobytes()
