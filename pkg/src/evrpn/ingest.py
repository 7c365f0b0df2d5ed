"""Event stream I/O (CSV and EVR1 binary) and message chunking.

EVR1 layout, all little-endian::

    header   magic b"EVR1" | version u8 | width u16 | height u16 | rate_hz f32   (13 bytes)
    block    event_count u32 | event_count x record
    record   t u64 | x u16 | y u16 | p u8                                         (13 bytes)

Message indices are implicit in block order.
"""

from __future__ import annotations

import csv
import io
import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    FormatError,
    OrderingError,
    ParseError,
    TruncatedBlockError,
    TruncatedHeaderError,
    TruncatedRecordError,
    ValidationError,
)
from .events import (
    EVENT_DTYPE,
    EventChunk,
    EventMessage,
    SensorGeometry,
    empty_events,
    sort_events,
    validate_events,
)

MAGIC = b"EVR1"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sBHHf")
BLOCK_COUNT = struct.Struct("<I")
RECORD_SIZE = EVENT_DTYPE.itemsize
CSV_COLUMNS = ["msg", "t_us", "x", "y", "p"]

assert HEADER.size == 13 and RECORD_SIZE == 13


@dataclass(frozen=True)
class StreamHeader:
    format_version: int = FORMAT_VERSION
    geometry: SensorGeometry = field(default_factory=SensorGeometry)
    message_rate_hz: float = 30.0

    def __post_init__(self):
        if not self.message_rate_hz > 0:
            raise ValidationError(f"message_rate_hz must be positive, got {self.message_rate_hz}")
        if self.format_version != FORMAT_VERSION:
            raise ValidationError(f"unsupported format version {self.format_version}")


@dataclass(frozen=True)
class ChunkingConfig:
    messages_per_chunk: int = 10
    keep_stride: int = 2

    def __post_init__(self):
        if self.messages_per_chunk < 1:
            raise ConfigError("messages_per_chunk must be >= 1")
        if not 1 <= self.keep_stride <= self.messages_per_chunk:
            raise ConfigError("keep_stride must be in [1, messages_per_chunk]")


# ---------------------------------------------------------------------------
# binary


def write_binary_stream(header: StreamHeader, messages: Iterable[EventMessage]) -> bytes:
    geometry = header.geometry
    out = io.BytesIO()
    out.write(HEADER.pack(MAGIC, header.format_version, geometry.width, geometry.height, header.message_rate_hz))
    for msg in messages:
        events = np.ascontiguousarray(msg.events, dtype=EVENT_DTYPE)
        validate_events(events, geometry)
        out.write(BLOCK_COUNT.pack(len(events)))
        out.write(events.tobytes())
    return out.getvalue()


def parse_binary_header(data: bytes) -> StreamHeader:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        if len(data) < len(MAGIC) and MAGIC.startswith(bytes(data)):
            raise TruncatedHeaderError(f"header needs {HEADER.size} bytes, got {len(data)}", len(data))
        raise BadMagicError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}", 0)
    if len(data) < HEADER.size:
        raise TruncatedHeaderError(f"header needs {HEADER.size} bytes, got {len(data)}", len(data))
    _, version, width, height, rate = HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    try:
        return StreamHeader(version, SensorGeometry(width, height), float(rate))
    except ValidationError as exc:
        raise FormatError(str(exc), 5) from None


def parse_binary_stream(data: bytes) -> tuple[StreamHeader, list[EventMessage]]:
    data = memoryview(data)
    header = parse_binary_header(bytes(data[: HEADER.size]))
    messages = []
    offset = HEADER.size
    size = len(data)
    while offset < size:
        if size - offset < BLOCK_COUNT.size:
            raise TruncatedBlockError(
                f"message block {len(messages)} count field cut short ({size - offset} of 4 bytes)", offset
            )
        (count,) = BLOCK_COUNT.unpack_from(data, offset)
        offset += BLOCK_COUNT.size
        available = (size - offset) // RECORD_SIZE
        if available < count:
            # offset of the first incomplete record
            raise TruncatedRecordError(
                f"message block {len(messages)} declares {count} records, "
                f"record {available} is truncated",
                offset + available * RECORD_SIZE,
            )
        events = np.frombuffer(data, dtype=EVENT_DTYPE, count=count, offset=offset).copy()
        try:
            validate_events(events, header.geometry, require_sorted=False)
        except ValidationError as exc:
            raise ValidationError(f"message block {len(messages)} at byte offset {offset - 4}: {exc}") from None
        messages.append(EventMessage(len(messages), sort_events(events)))
        offset += count * RECORD_SIZE
    return header, messages


# ---------------------------------------------------------------------------
# CSV


def write_csv_stream(header: StreamHeader, messages: Sequence[EventMessage]) -> str:
    out = io.StringIO()
    out.write(f"# version={header.format_version}\n")
    out.write(f"# width={header.geometry.width}\n")
    out.write(f"# height={header.geometry.height}\n")
    out.write(f"# rate_hz={header.message_rate_hz!r}\n")
    out.write(f"# messages={len(messages)}\n")
    out.write(",".join(CSV_COLUMNS) + "\n")
    for pos, msg in enumerate(messages):
        validate_events(msg.events, header.geometry)
        for t, x, y, p in msg.events.tolist():
            out.write(f"{pos},{t},{x},{y},{p}\n")
    return out.getvalue()


_PREAMBLE_KEYS = {"width": int, "height": int, "rate_hz": float, "version": int, "messages": int}


def parse_csv_stream(text: str) -> tuple[StreamHeader, list[EventMessage]]:
    """Parse the CSV event format.

    Messages come back indexed ``0..max(msg)``; indices with no rows become
    empty messages so the result matches the binary layout, where every
    message has a block. An optional ``# messages=<n>`` preamble line extends
    the sequence with trailing empty messages.
    """
    meta = {}
    lines = text.splitlines()
    lineno = 0
    header_seen = False
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if "=" in body:
                key, _, value = body.partition("=")
                key = key.strip()
                if key in _PREAMBLE_KEYS:
                    try:
                        meta[key] = _PREAMBLE_KEYS[key](value.strip())
                    except ValueError:
                        raise ParseError(f"bad value for {key}: {value.strip()!r}", lineno) from None
            continue
        cols = [c.strip() for c in stripped.split(",")]
        if cols != CSV_COLUMNS:
            raise ParseError(f"expected header row {','.join(CSV_COLUMNS)!r}, got {stripped!r}", lineno)
        header_seen = True
        break

    try:
        header = StreamHeader(
            meta.get("version", FORMAT_VERSION),
            SensorGeometry(meta.get("width", 640), meta.get("height", 480)),
            meta.get("rate_hz", 30.0),
        )
    except ValidationError as exc:
        raise ParseError(f"bad preamble: {exc}") from None
    width, height = header.geometry.width, header.geometry.height

    rows = []
    msg_ids = []
    last_msg = -1
    start = lineno if header_seen else len(lines)
    for lineno, row in enumerate(csv.reader(lines[start:]), start=start + 1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if row[0].lstrip().startswith("#"):
            continue
        if len(row) != 5:
            raise ParseError(f"expected 5 columns, got {len(row)}", lineno)
        try:
            msg, t, x, y, p = (int(c) for c in row)
        except ValueError:
            raise ParseError(f"non-integer field in {','.join(row)!r}", lineno) from None
        if min(msg, t, x, y, p) < 0:
            raise ParseError(f"negative field in {','.join(row)!r}", lineno)
        if p > 1:
            raise ValidationError(f"line {lineno}: polarity {p} not in {{0, 1}}")
        if x >= width or y >= height:
            raise ValidationError(f"line {lineno}: event ({x}, {y}) outside {width}x{height} geometry")
        if t > 0xFFFFFFFFFFFFFFFF:
            raise ParseError("timestamp exceeds 64 bits", lineno)
        if msg < last_msg:
            raise OrderingError(f"line {lineno}: msg index {msg} after {last_msg}")
        last_msg = msg
        msg_ids.append(msg)
        rows.append((t, x, y, p))

    n_messages = max(last_msg + 1, meta.get("messages", 0))
    events = np.array(rows, dtype=EVENT_DTYPE) if rows else empty_events()
    ids = np.asarray(msg_ids, dtype=np.int64)
    bounds = np.searchsorted(ids, np.arange(n_messages + 1), side="left")
    messages = [
        EventMessage(i, sort_events(events[bounds[i] : bounds[i + 1]].copy())) for i in range(n_messages)
    ]
    return header, messages


# ---------------------------------------------------------------------------
# files


def read_stream(path) -> tuple[StreamHeader, list[EventMessage]]:
    """Read an event file; ``.csv`` files are parsed as CSV, anything else as EVR1."""
    path = os.fspath(path)
    if path.lower().endswith(".csv"):
        with open(path, encoding="utf-8") as fh:
            return parse_csv_stream(fh.read())
    with open(path, "rb") as fh:
        return parse_binary_stream(fh.read())


def write_stream(path, header: StreamHeader, messages: Sequence[EventMessage]) -> None:
    path = os.fspath(path)
    if path.lower().endswith(".csv"):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(write_csv_stream(header, messages))
    else:
        with open(path, "wb") as fh:
            fh.write(write_binary_stream(header, messages))


# ---------------------------------------------------------------------------
# chunking


def message_start_us(index: int, rate_hz: float) -> int:
    """Nominal start time of message ``index`` at cadence ``rate_hz``."""
    return int(round(index * 1e6 / rate_hz))


def chunk_messages(
    messages: Sequence[EventMessage],
    cfg: ChunkingConfig = ChunkingConfig(),
    message_rate_hz: float | None = 30.0,
) -> list[EventChunk]:
    """Group messages into fixed windows and drop every ``keep_stride``-th but one.

    Windows of ``messages_per_chunk`` consecutive messages are formed by
    position; a trailing partial window is dropped. Within a window only
    local indices ``0, keep_stride, 2*keep_stride, ...`` contribute events.
    ``t_start``/``t_end`` cover the whole window, decimated messages
    included: the nominal cadence bounds when ``message_rate_hz`` is given,
    widened to contain every event of the window.
    """
    m = cfg.messages_per_chunk
    chunks = []
    for k in range(len(messages) // m):
        window = messages[k * m : (k + 1) * m]
        kept = [window[i].events for i in range(0, m, cfg.keep_stride)]
        events = sort_events(np.concatenate(kept)) if kept else empty_events()

        lo = hi = None
        if message_rate_hz is not None:
            lo = message_start_us(window[0].index, message_rate_hz)
            hi = message_start_us(window[-1].index + 1, message_rate_hz)
        for msg in window:
            if len(msg.events):
                t0, t1 = int(msg.events["t"].min()), int(msg.events["t"].max())
                lo = t0 if lo is None else min(lo, t0)
                hi = t1 if hi is None else max(hi, t1)
        chunks.append(EventChunk(k, lo or 0, hi or 0, events))
    return chunks
