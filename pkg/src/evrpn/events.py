"""Core event types and box geometry.

Events are stored in bulk as numpy structured arrays with :data:`EVENT_DTYPE`
(packed, 13 bytes per record: ``t`` u64 microseconds, ``x`` u16, ``y`` u16,
``p`` u8). :class:`Event` is the scalar view of one record.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import OrderingError, ValidationError

EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])

DEFAULT_WIDTH = 640
DEFAULT_HEIGHT = 480


class Event(NamedTuple):
    t: int
    x: int
    y: int
    p: int


@dataclass(frozen=True)
class SensorGeometry:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValidationError(f"sensor geometry must be integral, got {self.width}x{self.height}")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"sensor geometry must be positive, got {self.width}x{self.height}")
        if self.width > 0xFFFF or self.height > 0xFFFF:
            raise ValidationError("sensor geometry exceeds 16-bit coordinates")

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(height, width)``."""
        return (self.height, self.width)


def empty_events() -> np.ndarray:
    return np.zeros(0, dtype=EVENT_DTYPE)


def make_events(records: Iterable) -> np.ndarray:
    """Build an event array from ``(t, x, y, p)`` tuples or :class:`Event` values."""
    records = [tuple(r) for r in records]
    if not records:
        return empty_events()
    return np.array(records, dtype=EVENT_DTYPE)


def validate_events(events: np.ndarray, geometry: SensorGeometry, *, require_sorted=True) -> None:
    """Raise unless every event lies inside ``geometry`` with polarity in {0, 1}."""
    if events.dtype != EVENT_DTYPE:
        raise ValidationError(f"events must have dtype {EVENT_DTYPE}, got {events.dtype}")
    if len(events) == 0:
        return
    bad = np.flatnonzero(
        (events["x"] >= geometry.width) | (events["y"] >= geometry.height) | (events["p"] > 1)
    )
    if len(bad):
        i = int(bad[0])
        e = events[i]
        raise ValidationError(
            f"event {i} (t={e['t']}, x={e['x']}, y={e['y']}, p={e['p']}) "
            f"outside {geometry.width}x{geometry.height} geometry or polarity not in {{0, 1}}"
        )
    if require_sorted and len(events) > 1 and np.any(np.diff(events["t"].astype(np.int64)) < 0):
        raise OrderingError("events are not sorted by timestamp")


def sort_events(events: np.ndarray) -> np.ndarray:
    """Stable sort by timestamp; returns the input unchanged when already sorted."""
    if len(events) > 1 and np.any(events["t"][1:] < events["t"][:-1]):
        return events[np.argsort(events["t"], kind="stable")]
    return events


@dataclass(frozen=True, eq=False)
class EventMessage:
    """A timestamped bundle of events, as delivered by the recording loop."""

    index: int
    events: np.ndarray = field(default_factory=empty_events)

    def __len__(self):
        return len(self.events)

    def __eq__(self, other):
        if not isinstance(other, EventMessage):
            return NotImplemented
        return self.index == other.index and np.array_equal(self.events, other.events)


@dataclass(frozen=True, eq=False)
class EventChunk:
    """The pipeline's unit of work: decimated events of one message window."""

    chunk_index: int
    t_start: int
    t_end: int
    events: np.ndarray = field(default_factory=empty_events)

    def __len__(self):
        return len(self.events)

    def __eq__(self, other):
        if not isinstance(other, EventChunk):
            return NotImplemented
        return (
            self.chunk_index == other.chunk_index
            and self.t_start == other.t_start
            and self.t_end == other.t_end
            and np.array_equal(self.events, other.events)
        )


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in continuous pixel coordinates ``[x_min, x_max) x [y_min, y_max)``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValidationError(f"invalid box {self.as_list()}")

    def as_list(self) -> list:
        return [v if isinstance(v, int) else float(v) for v in (self.x_min, self.y_min, self.x_max, self.y_max)]

    @classmethod
    def from_seq(cls, seq) -> "BBox":
        x1, y1, x2, y2 = seq
        return cls(x1, y1, x2, y2)

    def translated(self, dx, dy) -> "BBox":
        return BBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def scaled(self, s) -> "BBox":
        return BBox(self.x_min * s, self.y_min * s, self.x_max * s, self.y_max * s)

    def clipped(self, geometry: SensorGeometry) -> "BBox":
        x1 = min(max(self.x_min, 0), geometry.width)
        x2 = min(max(self.x_max, 0), geometry.width)
        y1 = min(max(self.y_min, 0), geometry.height)
        y2 = min(max(self.y_max, 0), geometry.height)
        return BBox(x1, y1, x2, y2)


def bbox_area(b: BBox) -> float:
    return (b.x_max - b.x_min) * (b.y_max - b.y_min)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when both boxes are degenerate."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = bbox_area(a) + bbox_area(b) - inter
    if union <= 0:
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))
