"""Per-stage latency measurement of the proposal pipeline."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, EvrpnError
from .events import EventChunk, SensorGeometry
from .cluster import (
    ProposalConfig,
    dbscan,
    extract_clusters,
    occupied_points,
    propose_chunks,
    proposals_from_clusters,
)
from .rasterize import binarize, build_frame, erode

STAGES = ("build_frame", "binarize", "erode", "dbscan", "extract_bbox")
# 1/15 s: proposals must keep up with the 15 fps processing rate
DEFAULT_BUDGET_US = 66_667


@dataclass
class LatencyStats:
    name: str
    samples: int
    median_us: float
    mean_us: float
    p95_us: float
    max_us: float

    @classmethod
    def from_samples(cls, name, samples_us) -> "LatencyStats":
        a = np.asarray(samples_us, dtype=float)
        return cls(
            name,
            len(a),
            float(np.median(a)),
            float(a.mean()),
            float(np.percentile(a, 95)),
            float(a.max()),
        )


@dataclass
class BenchReport:
    per_stage: list
    per_chunk_total: LatencyStats
    events_per_second: float
    budget_us: float
    passed: bool
    n_chunks: int
    repetitions: int
    checksum: str
    checksum_match: bool
    parallel_events_per_second: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_table(self) -> str:
        head = f"{'stage':<13} {'n':>6} {'median':>10} {'mean':>10} {'p95':>10} {'max':>10}   (us)"
        lines = [head, "-" * len(head)]
        for s in list(self.per_stage) + [self.per_chunk_total]:
            lines.append(
                f"{s.name:<13} {s.samples:>6} {s.median_us:>10.1f} {s.mean_us:>10.1f} {s.p95_us:>10.1f} {s.max_us:>10.1f}"
            )
        lines.append("-" * len(head))
        lines.append(f"events/s          {self.events_per_second:,.0f}")
        if self.parallel_events_per_second is not None:
            lines.append(f"events/s (pool)   {self.parallel_events_per_second:,.0f}")
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"budget            {self.budget_us:,.0f} us per chunk (median total) -> {verdict}")
        lines.append(f"checksum          {self.checksum[:16]}  {'match' if self.checksum_match else 'MISMATCH'}")
        return "\n".join(lines)


def proposals_checksum(proposal_sets) -> str:
    h = hashlib.sha256()
    for ps in proposal_sets:
        h.update(ps.to_json_line().encode())
        h.update(b"\n")
    return h.hexdigest()


def _timed_propose(chunk: EventChunk, geometry: SensorGeometry, config: ProposalConfig):
    clock = time.perf_counter_ns
    t0 = clock()
    frame = build_frame(chunk, geometry)
    t1 = clock()
    bits = binarize(frame)
    t2 = clock()
    eroded = erode(bits, config.structuring_element, config.erosion_iterations)
    t3 = clock()
    points = occupied_points(eroded.bits)
    labels = dbscan(points, config.dbscan)
    t4 = clock()
    result = proposals_from_clusters(chunk, extract_clusters(labels, points, config.dbscan), config.dbscan)
    t5 = clock()
    stamps = (t0, t1, t2, t3, t4, t5)
    return result, [(b - a) / 1000.0 for a, b in zip(stamps, stamps[1:])]


def run_bench(
    chunks: Sequence[EventChunk],
    geometry: SensorGeometry,
    config: ProposalConfig = ProposalConfig(),
    budget_us: float = DEFAULT_BUDGET_US,
    repetitions: int = 5,
    workers: int = 1,
) -> BenchReport:
    """Time every pipeline stage on every chunk.

    One warm-up pass is run and discarded, then ``repetitions`` measured
    passes. The instrumented outputs are checksummed against an
    uninstrumented run. With ``workers > 1`` an extra pooled run reports
    aggregate throughput only.
    """
    chunks = list(chunks)
    if not chunks:
        raise EvrpnError("benchmark needs at least one chunk")
    if repetitions < 3:
        raise ConfigError("repetitions must be >= 3")

    reference = proposals_checksum(propose_chunks(chunks, geometry, config))
    stage_samples = [[] for _ in STAGES]
    totals = []
    checksums = set()
    n_events = sum(len(c) for c in chunks)
    measured_ns = 0
    for rep in range(repetitions + 1):
        outputs = []
        start = time.perf_counter_ns()
        for chunk in chunks:
            result, stage_us = _timed_propose(chunk, geometry, config)
            outputs.append(result)
            if rep > 0:
                for store, v in zip(stage_samples, stage_us):
                    store.append(v)
                totals.append(sum(stage_us))
        if rep > 0:
            measured_ns += time.perf_counter_ns() - start
        checksums.add(proposals_checksum(outputs))

    per_stage = [LatencyStats.from_samples(name, s) for name, s in zip(STAGES, stage_samples)]
    total = LatencyStats.from_samples("total", totals)
    eps = n_events * repetitions / (measured_ns * 1e-9) if measured_ns else 0.0

    parallel = None
    if workers > 1:
        start = time.perf_counter()
        propose_chunks(chunks, geometry, config, workers=workers)
        parallel = n_events / (time.perf_counter() - start)

    return BenchReport(
        per_stage=per_stage,
        per_chunk_total=total,
        events_per_second=eps,
        budget_us=float(budget_us),
        passed=total.median_us <= budget_us,
        n_chunks=len(chunks),
        repetitions=repetitions,
        checksum=reference,
        checksum_match=checksums == {reference},
        parallel_events_per_second=parallel,
    )


def synthetic_chunk(
    geometry: SensorGeometry = SensorGeometry(),
    n_events: int = 50_000,
    n_objects: int = 3,
    object_fraction: float = 0.8,
    seed: int = 0,
    chunk_index: int = 0,
) -> EventChunk:
    """A random load chunk: dense rectangular blobs plus uniform background events."""
    from .events import EVENT_DTYPE

    rng = np.random.default_rng(seed)
    ev = np.empty(n_events, dtype=EVENT_DTYPE)
    n_obj = int(n_events * object_fraction) if n_objects else 0
    xs = np.empty(n_events, dtype=np.int64)
    ys = np.empty(n_events, dtype=np.int64)
    per = np.array_split(np.arange(n_obj), max(n_objects, 1)) if n_obj else []
    for idx in per:
        w = int(rng.integers(60, 140))
        h = int(rng.integers(60, 140))
        x0 = int(rng.integers(0, geometry.width - w))
        y0 = int(rng.integers(0, geometry.height - h))
        xs[idx] = rng.integers(x0, x0 + w, size=len(idx))
        ys[idx] = rng.integers(y0, y0 + h, size=len(idx))
    rest = slice(n_obj, n_events)
    xs[rest] = rng.integers(0, geometry.width, size=n_events - n_obj)
    ys[rest] = rng.integers(0, geometry.height, size=n_events - n_obj)
    ev["t"] = np.sort(rng.integers(0, 333_333, size=n_events))
    ev["x"] = xs
    ev["y"] = ys
    ev["p"] = rng.integers(0, 2, size=n_events)
    return EventChunk(chunk_index, 0, 333_333, ev)
