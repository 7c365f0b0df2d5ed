"""Synthetic event streams with exact ground truth.

Shapes move over a uniform background of intensity 1, either flat or
carrying a fixed random texture.
Every pixel keeps a reference log intensity; whenever the rendered log
intensity drifts ``k * C`` or more away from it, the pixel emits ``k`` events
of the matching polarity and the reference moves by ``k * C``. Rendering is
anti-aliased with 4x4 supersampling, so sub-pixel motion still changes
intensity. Optional background activity is a per-pixel Poisson process.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .events import EVENT_DTYPE, BBox, EventMessage, SensorGeometry
from .evaluation import GroundTruthSet
from .ingest import ChunkingConfig, StreamHeader, message_start_us

SUPERSAMPLE = 4
_SUB = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE
_HALF_DIAGONAL = math.sqrt(0.5)


@dataclass(frozen=True)
class LinearTrajectory:
    start: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)

    def position(self, t):
        return (self.start[0] + self.velocity[0] * t, self.start[1] + self.velocity[1] * t)

    @property
    def max_speed(self) -> float:
        return math.hypot(*self.velocity)

    def to_dict(self):
        return {"type": "linear", "start": list(self.start), "velocity": list(self.velocity)}


@dataclass(frozen=True)
class CircularTrajectory:
    center: tuple[float, float]
    radius: float
    angular_rate: float
    phase: float = 0.0

    def position(self, t):
        a = self.phase + self.angular_rate * t
        if np.ndim(a):
            return (self.center[0] + self.radius * np.cos(a), self.center[1] + self.radius * np.sin(a))
        return (self.center[0] + self.radius * math.cos(a), self.center[1] + self.radius * math.sin(a))

    @property
    def max_speed(self) -> float:
        return abs(self.radius * self.angular_rate)

    def to_dict(self):
        return {
            "type": "circular",
            "center": list(self.center),
            "radius": self.radius,
            "angular_rate": self.angular_rate,
            "phase": self.phase,
        }


@dataclass(frozen=True)
class MovingShape:
    """A rectangle (anchored at its top-left corner) or a disc (anchored at its center).

    ``size`` is ``(width, height)`` for rectangles and the radius for discs.
    With ``texture_contrast > 0`` the shape carries a fixed random pattern of
    cells (mean side ``texture_cell_px``) whose log intensities scatter with
    that standard deviation around ``log(intensity)``.
    """

    kind: str
    size: tuple[float, float] | float
    intensity: float
    trajectory: LinearTrajectory | CircularTrajectory
    texture_contrast: float = 0.0
    texture_cell_px: float = 3.0

    def __post_init__(self):
        if self.kind not in ("rectangle", "disc"):
            raise ConfigError(f"unknown shape kind {self.kind!r}")
        if not self.intensity > 0:
            raise ConfigError("shape intensity must be positive")
        if self.intensity == 1.0:
            raise ConfigError("shape intensity must differ from the background intensity 1.0")
        if self.kind == "rectangle":
            w, h = self.size
            if not (w > 0 and h > 0):
                raise ConfigError("rectangle size must be positive")
        elif not self.size > 0:
            raise ConfigError("disc radius must be positive")
        if not self.texture_contrast >= 0:
            raise ConfigError("texture_contrast must be non-negative")
        if not self.texture_cell_px > 0:
            raise ConfigError("texture_cell_px must be positive")

    @property
    def extent(self) -> tuple[float, float]:
        if self.kind == "rectangle":
            return tuple(self.size)
        return (2 * self.size, 2 * self.size)

    def bbox_at(self, t) -> tuple[float, float, float, float]:
        """Unclipped axis-aligned extent at time ``t`` (seconds)."""
        x, y = self.trajectory.position(t)
        if self.kind == "rectangle":
            w, h = self.size
            return (x, y, x + w, y + h)
        r = self.size
        return (x - r, y - r, x + r, y + r)

    def boundary_distance(self, px, py, t):
        """Distance from points ``(px, py)`` to the shape outline at time ``t``."""
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        if self.kind == "disc":
            cx, cy = self.trajectory.position(t)
            return np.abs(np.hypot(px - cx, py - cy) - self.size)
        x1, y1, x2, y2 = self.bbox_at(t)
        dx = np.maximum(np.maximum(x1 - px, px - x2), 0.0)
        dy = np.maximum(np.maximum(y1 - py, py - y2), 0.0)
        outside = np.hypot(dx, dy)
        inside = np.minimum(np.minimum(px - x1, x2 - px), np.minimum(py - y1, y2 - py))
        return np.where((dx > 0) | (dy > 0), outside, inside)

    def coverage(self, x0, y0, x1, y1, t) -> np.ndarray:
        """Fraction of each pixel in rows ``y0:y1``, columns ``x0:x1`` covered at time ``t``."""
        bx1, by1, bx2, by2 = self.bbox_at(t)
        cols = np.arange(x0, x1)
        rows = np.arange(y0, y1)
        if self.kind == "rectangle":
            sx = cols[:, None] + _SUB
            sy = rows[:, None] + _SUB
            cx = ((sx >= bx1) & (sx < bx2)).mean(axis=1)
            cy = ((sy >= by1) & (sy < by2)).mean(axis=1)
            return np.outer(cy, cx)

        cx, cy = self.trajectory.position(t)
        r = self.size
        d = np.hypot(cols[None, :] + 0.5 - cx, rows[:, None] + 0.5 - cy)
        cov = (d <= r - _HALF_DIAGONAL).astype(float)
        ii, jj = np.nonzero(np.abs(d - r) < _HALF_DIAGONAL)
        if len(ii):
            sx = cols[jj][:, None, None] + _SUB[None, None, :] - cx
            sy = rows[ii][:, None, None] + _SUB[None, :, None] - cy
            cov[ii, jj] = (sx * sx + sy * sy <= r * r).mean(axis=(1, 2))
        return cov

    def to_dict(self):
        size = {"width": self.size[0], "height": self.size[1]} if self.kind == "rectangle" else {"radius": self.size}
        d = {"kind": self.kind, "size": size, "intensity": self.intensity, "trajectory": self.trajectory.to_dict()}
        if self.texture_contrast:
            d["texture_contrast"] = self.texture_contrast
            d["texture_cell_px"] = self.texture_cell_px
        return d

    @classmethod
    def from_dict(cls, d) -> "MovingShape":
        try:
            kind = d["kind"]
            size = d["size"]
            if kind == "rectangle":
                size = (float(size["width"]), float(size["height"])) if isinstance(size, dict) else tuple(map(float, size))
            elif isinstance(size, dict):
                size = float(size["radius"])
            else:
                size = float(size)
            traj = d["trajectory"]
            ttype = traj.get("type", "linear")
            if ttype == "linear":
                trajectory = LinearTrajectory(tuple(map(float, traj["start"])), tuple(map(float, traj.get("velocity", (0, 0)))))
            elif ttype == "circular":
                trajectory = CircularTrajectory(
                    tuple(map(float, traj["center"])),
                    float(traj["radius"]),
                    float(traj["angular_rate"]),
                    float(traj.get("phase", 0.0)),
                )
            else:
                raise ConfigError(f"unknown trajectory type {ttype!r}")
            return cls(
                kind,
                size,
                float(d["intensity"]),
                trajectory,
                float(d.get("texture_contrast", 0.0)),
                float(d.get("texture_cell_px", 3.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad shape description {d!r}: {exc}") from None


@dataclass(frozen=True)
class SceneSpec:
    geometry: SensorGeometry = field(default_factory=SensorGeometry)
    duration_s: float = 1.0
    message_rate_hz: float = 30.0
    shapes: tuple[MovingShape, ...] = ()
    contrast_threshold: float = 0.2
    noise_rate_hz_per_pixel: float = 0.0
    substep_s: float = 0.001
    seed: int = 0
    name: str = "scene"

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        if not self.duration_s > 0:
            raise ConfigError("duration_s must be positive")
        if not self.message_rate_hz > 0:
            raise ConfigError("message_rate_hz must be positive")
        if not self.contrast_threshold > 0:
            raise ConfigError("contrast_threshold must be positive")
        if not self.noise_rate_hz_per_pixel >= 0:
            raise ConfigError("noise_rate_hz_per_pixel must be non-negative")
        if not 0 < self.substep_s <= 1.0 / self.message_rate_hz:
            raise ConfigError("substep_s must be in (0, 1 / message_rate_hz]")
        for i, shape in enumerate(self.shapes):
            x1, y1, x2, y2 = shape.bbox_at(0.0)
            if x1 < 0 or y1 < 0 or x2 > self.geometry.width or y2 > self.geometry.height:
                raise ConfigError(
                    f"shape {i} extent ({x1:g}, {y1:g}, {x2:g}, {y2:g}) at t=0 does not fit inside "
                    f"the {self.geometry.width}x{self.geometry.height} sensor"
                )

    @property
    def n_messages(self) -> int:
        return max(1, math.ceil(self.duration_s * self.message_rate_hz - 1e-9))

    def to_dict(self):
        return {
            "name": self.name,
            "geometry": {"width": self.geometry.width, "height": self.geometry.height},
            "duration_s": self.duration_s,
            "message_rate_hz": self.message_rate_hz,
            "shapes": [s.to_dict() for s in self.shapes],
            "contrast_threshold": self.contrast_threshold,
            "noise_rate_hz_per_pixel": self.noise_rate_hz_per_pixel,
            "substep_s": self.substep_s,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> "SceneSpec":
        try:
            geometry = d.get("geometry", {})
            if isinstance(geometry, dict):
                geometry = SensorGeometry(int(geometry.get("width", 640)), int(geometry.get("height", 480)))
            else:
                geometry = SensorGeometry(*map(int, geometry))
            return cls(
                geometry=geometry,
                duration_s=float(d["duration_s"]),
                message_rate_hz=float(d.get("message_rate_hz", 30.0)),
                shapes=tuple(MovingShape.from_dict(s) for s in d.get("shapes", [])),
                contrast_threshold=float(d.get("contrast_threshold", 0.2)),
                noise_rate_hz_per_pixel=float(d.get("noise_rate_hz_per_pixel", 0.0)),
                substep_s=float(d.get("substep_s", 0.001)),
                seed=int(d.get("seed", 0)),
                name=str(d.get("name", "scene")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad scene description: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "SceneSpec":
        """Read a JSON scene; ``name`` defaults to the file stem."""
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{os.fspath(path)}: invalid JSON: {exc}") from None
        if isinstance(d, dict):
            d.setdefault("name", os.path.splitext(os.path.basename(os.fspath(path)))[0])
        else:
            raise ConfigError(f"{os.fspath(path)}: scene must be a JSON object")
        return cls.from_dict(d)


def ground_truth_boxes(spec: SceneSpec, t_s: float) -> list[BBox]:
    """Exact box of every shape at ``t_s`` clipped to the sensor; off-frame shapes are omitted."""
    if not 0 <= t_s <= spec.duration_s:
        raise ValueError(f"t_s={t_s} outside [0, {spec.duration_s}]")
    boxes = []
    for shape in spec.shapes:
        box = BBox(*shape.bbox_at(t_s)).clipped(spec.geometry)
        if box.x_max > box.x_min and box.y_max > box.y_min:
            boxes.append(box)
    return boxes


@dataclass(frozen=True, eq=False)
class Texture:
    """Piecewise-constant pattern in shape-local coordinates on an irregular grid."""

    col_edges: np.ndarray
    row_edges: np.ndarray
    values: np.ndarray  # (rows, cols) intensities

    @classmethod
    def uniform(cls, shape: MovingShape) -> "Texture":
        w, h = shape.extent
        return cls(np.array([0.0, w]), np.array([0.0, h]), np.array([[shape.intensity]]))

    @classmethod
    def random(cls, shape: MovingShape, rng: np.random.Generator) -> "Texture":
        if shape.texture_contrast == 0:
            return cls.uniform(shape)
        cell = shape.texture_cell_px
        w, h = shape.extent

        def edges(length):
            # irregular widths keep cell crossings from phase-locking to the message cadence
            widths = rng.uniform(0.5, 1.5, size=int(length / cell) + 8) * cell
            e = np.concatenate([[0.0], np.cumsum(widths)])
            return e[: int(np.searchsorted(e, length)) + 1]

        cols, rows = edges(w), edges(h)
        log_v = rng.normal(0.0, shape.texture_contrast, size=(len(rows) - 1, len(cols) - 1))
        return cls(cols, rows, shape.intensity * np.exp(log_v))


def _cell_weights(pixels, origin, length, edges) -> np.ndarray:
    """Fraction of each pixel's supersamples falling in each texture cell (0 outside ``[0, length)``)."""
    u = pixels[:, None] + _SUB - origin
    inside = (u >= 0) & (u < length)
    j = np.clip(np.searchsorted(edges, u, side="right") - 1, 0, len(edges) - 2)
    weights = np.zeros((len(pixels), len(edges) - 1))
    rows = np.broadcast_to(np.arange(len(pixels))[:, None], u.shape)
    np.add.at(weights, (rows[inside], j[inside]), 1.0 / SUPERSAMPLE)
    return weights


def _layer(shape: MovingShape, texture: Texture, x0, y0, x1, y1, t):
    """Coverage and coverage-weighted intensity of one shape over a pixel window."""
    cols = np.arange(x0, x1, dtype=float)
    rows = np.arange(y0, y1, dtype=float)
    bx1, by1, _, _ = shape.bbox_at(t)
    w, h = shape.extent
    wx = _cell_weights(cols, bx1, w, texture.col_edges)
    wy = _cell_weights(rows, by1, h, texture.row_edges)
    if shape.kind == "rectangle":
        return np.outer(wy.sum(axis=1), wx.sum(axis=1)), wy @ texture.values @ wx.T

    cov = shape.coverage(x0, y0, x1, y1, t)
    if texture.values.size == 1:
        return cov, cov * texture.values[0, 0]
    painted = np.where(cov == 1.0, wy @ texture.values @ wx.T, 0.0)
    ii, jj = np.nonzero((cov > 0) & (cov < 1))
    if len(ii):
        cx, cy = shape.trajectory.position(t)
        r = shape.size
        sx = cols[jj][:, None, None] + _SUB[None, None, :]
        sy = rows[ii][:, None, None] + _SUB[None, :, None]
        inside = (sx - cx) ** 2 + (sy - cy) ** 2 <= r * r
        ci = np.clip(np.searchsorted(texture.col_edges, sx - bx1, side="right") - 1, 0, texture.values.shape[1] - 1)
        ri = np.clip(np.searchsorted(texture.row_edges, sy - by1, side="right") - 1, 0, texture.values.shape[0] - 1)
        vals = texture.values[np.broadcast_to(ri, inside.shape), np.broadcast_to(ci, inside.shape)]
        painted[ii, jj] = np.where(inside, vals, 0.0).mean(axis=(1, 2))
    return cov, painted


def _render(spec: SceneSpec, textures, x0, y0, x1, y1, t) -> np.ndarray:
    img = np.ones((y1 - y0, x1 - x0))
    for shape, texture in zip(spec.shapes, textures):
        bx1, by1, bx2, by2 = shape.bbox_at(t)
        if bx2 <= x0 or bx1 >= x1 or by2 <= y0 or by1 >= y1:
            continue
        cov, painted = _layer(shape, texture, x0, y0, x1, y1, t)
        img = img * (1.0 - cov) + painted
    return img


def _pixel_region(spec: SceneSpec, boxes) -> tuple[int, int, int, int] | None:
    x1 = min(b[0] for b in boxes)
    y1 = min(b[1] for b in boxes)
    x2 = max(b[2] for b in boxes)
    y2 = max(b[3] for b in boxes)
    w, h = spec.geometry.width, spec.geometry.height
    rx0 = max(0, math.floor(x1) - 1)
    ry0 = max(0, math.floor(y1) - 1)
    rx1 = min(w, math.ceil(x2) + 1)
    ry1 = min(h, math.ceil(y2) + 1)
    if rx0 >= rx1 or ry0 >= ry1:
        return None
    return rx0, ry0, rx1, ry1


def _signal_events(spec: SceneSpec, textures) -> np.ndarray:
    C = spec.contrast_threshold
    ref = np.zeros(spec.geometry.shape)
    n_steps = int(round(spec.duration_s / spec.substep_s))
    moving = [s for s in spec.shapes if s.trajectory.max_speed > 0]

    for shape in spec.shapes:
        region = _pixel_region(spec, [shape.bbox_at(0.0)])
        if region is not None:
            x0, y0, x1, y1 = region
            ref[y0:y1, x0:x1] = np.log(_render(spec, textures, x0, y0, x1, y1, 0.0))

    parts = []
    for k in range(1, n_steps + 1):
        if not moving:
            break
        t_prev = (k - 1) * spec.substep_s
        t = k * spec.substep_s
        t_us = int(round(t * 1e6))
        for shape in moving:
            region = _pixel_region(spec, [shape.bbox_at(t_prev), shape.bbox_at(t)])
            if region is None:
                continue
            x0, y0, x1, y1 = region
            log_i = np.log(_render(spec, textures, x0, y0, x1, y1, t))
            view = ref[y0:y1, x0:x1]
            diff = log_i - view
            n = np.floor(np.abs(diff) / C)
            ii, jj = np.nonzero(n)
            if not len(ii):
                continue
            counts = n[ii, jj].astype(np.int64)
            up = diff[ii, jj] > 0
            view[ii, jj] += np.where(up, counts * C, -counts * C)
            ev = np.empty(int(counts.sum()), dtype=EVENT_DTYPE)
            ev["t"] = t_us
            ev["x"] = np.repeat(jj + x0, counts)
            ev["y"] = np.repeat(ii + y0, counts)
            ev["p"] = np.repeat(up, counts)
            parts.append(ev)
    if not parts:
        return np.zeros(0, dtype=EVENT_DTYPE)
    return np.concatenate(parts)


def _message_bounds(spec: SceneSpec) -> np.ndarray:
    return np.array([message_start_us(i, spec.message_rate_hz) for i in range(spec.n_messages + 1)], dtype=np.int64)


def simulate(spec: SceneSpec) -> tuple[StreamHeader, list[EventMessage], GroundTruthSet]:
    """Render ``spec`` into an event stream plus per-chunk ground truth.

    Ground truth holds one frame per chunk of the default
    :class:`~evrpn.ingest.ChunkingConfig`, with each shape's box at the
    midpoint of the chunk's message window. Output depends only on ``spec``.
    """
    rng = np.random.default_rng(spec.seed % 2**64)
    geometry = spec.geometry
    bounds = _message_bounds(spec)
    n_messages = spec.n_messages

    textures = [
        Texture.random(shape, np.random.default_rng([spec.seed % 2**64, i])) for i, shape in enumerate(spec.shapes)
    ]
    signal = _signal_events(spec, textures)
    sig_msg = np.clip(np.searchsorted(bounds, signal["t"].astype(np.int64), side="right") - 1, 0, n_messages - 1)
    sig_bounds = np.searchsorted(sig_msg, np.arange(n_messages + 1), side="left")

    lam = spec.noise_rate_hz_per_pixel
    messages = []
    for i in range(n_messages):
        parts = [signal[sig_bounds[i] : sig_bounds[i + 1]]]
        if lam > 0:
            t0, t1 = int(bounds[i]), int(bounds[i + 1])
            count = rng.poisson(lam * geometry.width * geometry.height * (t1 - t0) * 1e-6)
            noise = np.empty(count, dtype=EVENT_DTYPE)
            noise["t"] = rng.integers(t0, t1, size=count)
            noise["x"] = rng.integers(0, geometry.width, size=count)
            noise["y"] = rng.integers(0, geometry.height, size=count)
            noise["p"] = rng.integers(0, 2, size=count)
            parts.append(noise)
        events = np.concatenate(parts)
        events = events[np.argsort(events["t"], kind="stable")]
        messages.append(EventMessage(i, events))

    header = StreamHeader(geometry=geometry, message_rate_hz=spec.message_rate_hz)
    return header, messages, scene_ground_truth(spec)


def chunk_midpoints_s(spec: SceneSpec, cfg: ChunkingConfig = ChunkingConfig()) -> list[float]:
    bounds = _message_bounds(spec)
    m = cfg.messages_per_chunk
    return [
        min(spec.duration_s, (bounds[k * m] + bounds[(k + 1) * m]) / 2 * 1e-6) for k in range(spec.n_messages // m)
    ]


def scene_ground_truth(spec: SceneSpec, cfg: ChunkingConfig = ChunkingConfig()) -> GroundTruthSet:
    frames = [(k, ground_truth_boxes(spec, t)) for k, t in enumerate(chunk_midpoints_s(spec, cfg))]
    return GroundTruthSet(spec.name, spec.geometry, frames)
