"""DBSCAN clustering of denoised occupancy pixels and box proposals.

The proposal pipeline for one chunk is::

    build_frame -> binarize -> erode -> occupied pixels -> dbscan
        -> extract_clusters -> (cluster_bbox, score) -> ProposalSet
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, ParseError, ValidationError
from .events import BBox, EventChunk, SensorGeometry
from .rasterize import StructuringElement, binarize, build_frame, erode

NOISE = -1

# dense lookup tables above this many cells fall back to sorted-key search
_DENSE_LIMIT = 1 << 24


@dataclass(frozen=True)
class DbscanConfig:
    eps: float = 5.0
    min_pts: int = 8
    min_cluster_size: int = 15
    score_norm: float = 100.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.min_pts < 1:
            raise ConfigError("min_pts must be >= 1")
        if self.min_cluster_size < self.min_pts:
            raise ConfigError("min_cluster_size must be >= min_pts")
        if not self.score_norm > 0:
            raise ConfigError("score_norm must be positive")


@dataclass(frozen=True, eq=False)
class Cluster:
    points: np.ndarray  # (n, 2) integer (x, y)

    @property
    def size(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Proposal:
    box: BBox
    score: float

    def __post_init__(self):
        if not 0 < self.score <= 1:
            raise ValidationError(f"proposal score {self.score} outside (0, 1]")


def _proposal_key(p: Proposal):
    return (-p.score, p.box.x_min, p.box.y_min)


@dataclass(frozen=True)
class ProposalSet:
    chunk_index: int
    t_start: int
    t_end: int
    proposals: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "proposals", tuple(sorted(self.proposals, key=_proposal_key)))

    def __len__(self):
        return len(self.proposals)

    def to_dict(self):
        return {
            "chunk_index": self.chunk_index,
            "t_start_us": self.t_start,
            "t_end_us": self.t_end,
            "boxes": [p.box.as_list() for p in self.proposals],
            "scores": [p.score for p in self.proposals],
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d) -> "ProposalSet":
        boxes, scores = d["boxes"], d["scores"]
        if len(boxes) != len(scores):
            raise ValidationError("boxes and scores have different lengths")
        props = [Proposal(BBox.from_seq(b), float(s)) for b, s in zip(boxes, scores)]
        return cls(int(d["chunk_index"]), int(d["t_start_us"]), int(d["t_end_us"]), props)


def write_proposals(path, proposal_sets: Iterable[ProposalSet]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ps in proposal_sets:
            fh.write(ps.to_json_line() + "\n")


def read_proposals(path) -> list[ProposalSet]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(ProposalSet.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad proposal record: {exc}", lineno) from None
    return out


# ---------------------------------------------------------------------------
# DBSCAN


def stencil(eps: float) -> np.ndarray:
    """Integer offsets ``(dx, dy)`` with ``0 < dx^2 + dy^2 <= eps^2``, upper half only."""
    r = int(math.floor(eps))
    dy, dx = np.mgrid[0 : r + 1, -r : r + 1]
    dx, dy = dx.ravel(), dy.ravel()
    keep = (dx * dx + dy * dy <= eps * eps) & ((dy > 0) | (dx > 0))
    return np.stack([dx[keep], dy[keep]], axis=1)


def neighbor_pairs(points: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """All unordered index pairs of distinct integer points within ``eps``.

    Points are bucketed on the unit pixel grid and each bucket probes the
    fixed stencil of offsets inside the ``eps`` disc.
    """
    n = len(points)
    if n < 2:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    r = int(math.floor(eps))
    x = points[:, 0] - points[:, 0].min() + r
    y = points[:, 1] - points[:, 1].min() + r
    row = int(x.max()) + r + 1
    keys = y * row + x
    offsets = stencil(eps)
    shifts = offsets[:, 1] * row + offsets[:, 0]
    n_cells = (int(y.max()) + r + 1) * row
    idx = np.arange(n, dtype=np.int64)

    src, dst = [], []
    if n_cells <= _DENSE_LIMIT:
        table = np.full(n_cells, -1, dtype=np.int64)
        table[keys] = idx
        for s in shifts:
            j = table[keys + s]
            hit = j >= 0
            src.append(idx[hit])
            dst.append(j[hit])
    else:
        order = np.argsort(keys)
        sorted_keys = keys[order]
        for s in shifts:
            q = keys + s
            pos = np.minimum(np.searchsorted(sorted_keys, q), n - 1)
            hit = sorted_keys[pos] == q
            src.append(idx[hit])
            dst.append(order[pos[hit]])
    if not src:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(src), np.concatenate(dst)


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise ValidationError("dbscan expects integer pixel coordinates")
    return arr.astype(np.int64)


def _group_min(groups: np.ndarray, values: np.ndarray, size: int, fill: int) -> np.ndarray:
    """Per-group minimum of ``values`` over groups ``0..size-1``; ``fill`` where a group is empty."""
    out = np.full(size, fill, dtype=np.int64)
    if len(groups):
        order = np.lexsort((values, groups))
        g = groups[order]
        first = np.ones(len(g), dtype=bool)
        first[1:] = g[1:] != g[:-1]
        out[g[first]] = values[order][first]
    return out


def _number_components(comp: np.ndarray, rank: np.ndarray, n: int) -> np.ndarray:
    """Map component id -> cluster id, numbering components by their earliest-ranked member."""
    m = int(comp.max()) + 1
    first_rank = _group_min(comp, rank, m, n)
    comps = np.flatnonzero(first_rank < n)
    comps = comps[np.argsort(first_rank[comps], kind="stable")]
    cluster_of = np.full(m, NOISE, dtype=np.int64)
    cluster_of[comps] = np.arange(len(comps))
    return cluster_of


def _components(edges_a: np.ndarray, edges_b: np.ndarray, m: int) -> np.ndarray:
    graph = coo_matrix((np.ones(len(edges_a), dtype=np.int8), (edges_a, edges_b)), shape=(m, m))
    return connected_components(graph, directed=False)[1]


def _label_core(grid: np.ndarray, eps: float) -> tuple[np.ndarray, int]:
    """Image labels of core pixels, merging only neighbours that are within ``eps``."""
    if eps >= math.sqrt(2.0):
        return ndimage.label(grid, structure=np.ones((3, 3), dtype=bool))
    if eps >= 1.0:
        return ndimage.label(grid)
    lab = np.zeros(grid.shape, dtype=np.int32)
    lab[grid] = np.arange(1, int(grid.sum()) + 1)
    return lab, int(grid.sum())


def _dbscan_pairs(pts: np.ndarray, rank: np.ndarray, cfg: DbscanConfig) -> np.ndarray:
    """DBSCAN from an explicit list of neighbour pairs; for sparse coordinate ranges."""
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    a, b = neighbor_pairs(pts, cfg.eps)
    counts = 1 + np.bincount(a, minlength=n) + np.bincount(b, minlength=n)
    core = counts >= cfg.min_pts
    if not core.any():
        return labels
    cc = core[a] & core[b]
    comp = _components(a[cc], b[cc], n)
    core_idx = np.flatnonzero(core)
    labels[core_idx] = _number_components(comp[core_idx], rank[core_idx], n)[comp[core_idx]]

    # border points: earliest-discovered adjacent cluster
    m1 = core[a] & ~core[b]
    m2 = core[b] & ~core[a]
    target = np.concatenate([b[m1], a[m2]])
    border = _group_min(target, np.concatenate([labels[a[m1]], labels[b[m2]]]), n, n)
    is_border = ~core & (border < n)
    labels[is_border] = border[is_border]
    return labels


def _dbscan_grid(pts: np.ndarray, rank: np.ndarray, cfg: DbscanConfig) -> np.ndarray:
    """DBSCAN on a raster of the points' bounding box.

    Neighbour counts come from row-wise prefix sums over the ``eps`` disc. Core
    pixels that touch are merged by image labelling, and the stencil is only
    probed to join different labels, so no pair list is materialized.
    """
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    eps = cfg.eps
    r = int(math.floor(eps))
    x = pts[:, 0] - pts[:, 0].min() + r
    y = pts[:, 1] - pts[:, 1].min() + r
    h, w = int(y.max()) + r + 1, int(x.max()) + r + 1

    occ = np.zeros((h, w), dtype=bool)
    occ[y, x] = True
    prefix = np.zeros((h, w + 1), dtype=np.int32)
    np.cumsum(occ, axis=1, out=prefix[:, 1:])
    counts = np.zeros(n, dtype=np.int64)
    for dy in range(-r, r + 1):
        k = r
        while k * k + dy * dy > eps * eps:
            k -= 1
        counts += prefix[y + dy, x + k + 1] - prefix[y + dy, x - k]
    core = counts >= cfg.min_pts
    if not core.any():
        return labels

    core_idx = np.flatnonzero(core)
    cy, cx = y[core_idx], x[core_idx]
    grid = np.zeros((h, w), dtype=bool)
    grid[cy, cx] = True
    lab, n_lab = _label_core(grid, eps)
    own = lab[cy, cx]
    ea, eb = [np.zeros(0, dtype=own.dtype)], [np.zeros(0, dtype=own.dtype)]
    for dx, dy in stencil(eps):
        other = lab[cy + dy, cx + dx]
        hit = (other > 0) & (other != own)
        ea.append(own[hit])
        eb.append(other[hit])
    comp_of_label = _components(np.concatenate(ea), np.concatenate(eb), n_lab + 1)
    comp = comp_of_label[own]
    cluster_of = _number_components(comp, rank[core_idx], n)
    labels[core_idx] = cluster_of[comp]

    # border points: earliest-discovered adjacent cluster
    none = np.iinfo(np.int64).max
    cluster_of_label = np.full(n_lab + 1, none, dtype=np.int64)
    cluster_of_label[1:] = cluster_of[comp_of_label[1:]]
    nc = np.flatnonzero(~core)
    if len(nc):
        ny, nx = y[nc], x[nc]
        best = np.full(len(nc), none, dtype=np.int64)
        half = stencil(eps)
        for dx, dy in np.concatenate([half, -half]).reshape(-1, 2):
            np.minimum(best, cluster_of_label[lab[ny + dy, nx + dx]], out=best)
        found = best != none
        labels[nc[found]] = best[found]
    return labels


def dbscan(points, cfg: DbscanConfig = DbscanConfig()) -> np.ndarray:
    """Label integer points with cluster ids (``0, 1, ...``) or :data:`NOISE`.

    Points are processed in ``(y, x)`` lexicographic order: cluster ids follow
    discovery order, and a border point reachable from several clusters goes
    to the one discovered first. Labels are returned in input order.
    """
    pts = _as_points(points)
    n = len(pts)
    if n == 0:
        return np.full(0, NOISE, dtype=np.int64)
    order = np.lexsort((pts[:, 0], pts[:, 1]))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    keys = np.unique(pts[:, 1] * (int(pts[:, 0].max()) - int(pts[:, 0].min()) + 1) + pts[:, 0] - pts[:, 0].min())
    if len(keys) != n:
        raise ValidationError("dbscan expects distinct points")

    r = int(math.floor(cfg.eps))
    span = (pts.max(axis=0) - pts.min(axis=0) + 2 * r + 1).astype(np.float64)
    if span[0] * span[1] <= _DENSE_LIMIT:
        return _dbscan_grid(pts, rank, cfg)
    return _dbscan_pairs(pts, rank, cfg)


def extract_clusters(labels, points, cfg: DbscanConfig = DbscanConfig()) -> list[Cluster]:
    """Clusters with at least ``min_cluster_size`` members, in cluster-id order."""
    labels = np.asarray(labels)
    pts = _as_points(points)
    if len(labels) == 0:
        return []
    valid = labels >= 0
    if not valid.any():
        return []
    sizes = np.bincount(labels[valid])
    clusters = []
    for cid in np.flatnonzero(sizes >= cfg.min_cluster_size):
        clusters.append(Cluster(pts[labels == cid]))
    return clusters


def cluster_bbox(c: Cluster) -> BBox:
    pts = c.points
    if len(pts) == 0:
        raise ValidationError("empty cluster")
    return BBox(
        int(pts[:, 0].min()),
        int(pts[:, 1].min()),
        int(pts[:, 0].max()) + 1,
        int(pts[:, 1].max()) + 1,
    )


def score(c: Cluster, cfg: DbscanConfig = DbscanConfig()) -> float:
    return min(1.0, c.size / cfg.score_norm)


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class ProposalConfig:
    """Everything ``propose`` needs beyond the chunk and the sensor geometry."""

    dbscan: DbscanConfig = field(default_factory=DbscanConfig)
    erosion_size: int = 3
    erosion_iterations: int = 1

    def __post_init__(self):
        if self.erosion_size < 1 or self.erosion_size % 2 == 0:
            raise ConfigError("erosion_size must be a positive odd integer")
        if self.erosion_iterations < 0:
            raise ConfigError("erosion_iterations must be >= 0")

    @property
    def structuring_element(self) -> StructuringElement:
        return StructuringElement.square(self.erosion_size)


def occupied_points(bits: np.ndarray) -> np.ndarray:
    """``(x, y)`` of set bits in ``(y, x)`` lexicographic order."""
    ys, xs = np.nonzero(bits)
    return np.stack([xs, ys], axis=1).astype(np.int64)


def proposals_from_clusters(chunk: EventChunk, clusters: Sequence[Cluster], cfg: DbscanConfig) -> ProposalSet:
    props = [Proposal(cluster_bbox(c), score(c, cfg)) for c in clusters]
    return ProposalSet(chunk.chunk_index, chunk.t_start, chunk.t_end, props)


def propose(
    chunk: EventChunk,
    geometry: SensorGeometry,
    se: StructuringElement | None = None,
    cfg: DbscanConfig | None = None,
    iterations: int = 1,
) -> ProposalSet:
    cfg = cfg or DbscanConfig()
    se = se or StructuringElement.square(3)
    frame = build_frame(chunk, geometry)
    bits = erode(binarize(frame), se, iterations)
    points = occupied_points(bits.bits)
    labels = dbscan(points, cfg)
    return proposals_from_clusters(chunk, extract_clusters(labels, points, cfg), cfg)


def _propose_one(chunk, geometry, config: ProposalConfig):
    return propose(chunk, geometry, config.structuring_element, config.dbscan, config.erosion_iterations)


def propose_chunks(
    chunks: Sequence[EventChunk],
    geometry: SensorGeometry,
    config: ProposalConfig = ProposalConfig(),
    workers: int = 1,
) -> list[ProposalSet]:
    """Run :func:`propose` over chunks, optionally in a process pool; output is in chunk order."""
    fn = partial(_propose_one, geometry=geometry, config=config)
    if workers <= 1 or len(chunks) < 2:
        return [fn(c) for c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))
