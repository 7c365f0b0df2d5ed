"""Single-class detection evaluation at one IoU threshold.

Per chunk, proposals are greedily matched to ground-truth boxes in score
order. Per video, the flagged detections are pooled and ranked to compute a
101-point interpolated AP and the recall at the threshold (AR). mAP and mAR
are unweighted means over videos.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ParseError, ValidationError
from .events import BBox, SensorGeometry, iou

logger = logging.getLogger(__name__)

RECALL_STEPS = 100


@dataclass(frozen=True)
class GroundTruthSet:
    video_name: str
    geometry: SensorGeometry
    frames: tuple = ()

    def __post_init__(self):
        frames = tuple((int(k), tuple(boxes)) for k, boxes in self.frames)
        object.__setattr__(self, "frames", frames)
        last = -1
        for k, boxes in frames:
            if k <= last:
                raise ValidationError(f"{self.video_name}: chunk_index {k} not strictly increasing")
            last = k
            for b in boxes:
                if b.x_min < 0 or b.y_min < 0 or b.x_max > self.geometry.width or b.y_max > self.geometry.height:
                    raise ValidationError(f"{self.video_name}: chunk {k} box {b.as_list()} outside sensor geometry")

    @property
    def total_boxes(self) -> int:
        return sum(len(boxes) for _, boxes in self.frames)

    @property
    def max_objects(self) -> int:
        return max((len(boxes) for _, boxes in self.frames), default=0)

    def to_dict(self):
        return {
            "video_name": self.video_name,
            "width": self.geometry.width,
            "height": self.geometry.height,
            "frames": [{"chunk_index": k, "boxes": [b.as_list() for b in boxes]} for k, boxes in self.frames],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d) -> "GroundTruthSet":
        try:
            return cls(
                str(d["video_name"]),
                SensorGeometry(int(d["width"]), int(d["height"])),
                [(int(f["chunk_index"]), [BBox.from_seq(b) for b in f["boxes"]]) for f in d["frames"]],
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad ground-truth document: {exc!r}") from None

    @classmethod
    def load(cls, path) -> "GroundTruthSet":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(d)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.75
    max_detections_per_chunk: int = 100

    def __post_init__(self):
        if not 0 < self.iou_threshold <= 1:
            raise ConfigError("iou_threshold must be in (0, 1]")
        if self.max_detections_per_chunk < 1:
            raise ConfigError("max_detections_per_chunk must be >= 1")


@dataclass
class VideoResult:
    name: str
    ap: float
    ar: float
    tp: int
    fp: int
    fn: int
    n_objects: int = 0
    skipped_chunks: list = field(default_factory=list)


@dataclass
class EvalReport:
    per_video: list
    mAP: float
    mAR: float
    iou_threshold: float = 0.75
    excluded: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "iou_threshold": self.iou_threshold,
            "per_video": [asdict(v) for v in self.per_video],
            "mAP": self.mAP,
            "mAR": self.mAR,
            "excluded": list(self.excluded),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_table(self) -> str:
        """Plain-text table with one row per video and a trailing mAP line (values in percent)."""
        name_w = max([len("Video")] + [len(v.name) for v in self.per_video])
        head = f"{'Video':<{name_w}}  {'IoU':>7}  {'#Obj':>4}  {'AR':>6}  {'AP':>6}"
        lines = [head, "-" * len(head)]
        for v in self.per_video:
            lines.append(
                f"{v.name:<{name_w}}  {'>=' + format(self.iou_threshold, 'g'):>7}  {v.n_objects:>4}  "
                f"{100 * v.ar:6.2f}  {100 * v.ap:6.2f}"
            )
        lines.append("-" * len(head))
        lines.append(f"{'mAP = ' + format(100 * self.mAP, '.2f'):>{len(head)}}")
        for name in self.excluded:
            lines.append(f"excluded (no ground truth): {name}")
        return "\n".join(lines)


def match_detections(proposals, gt_boxes: Sequence[BBox], cfg: EvalConfig = EvalConfig()) -> tuple[list[bool], int]:
    """Greedy one-to-one matching of ranked proposals against ground truth.

    ``proposals`` is a :class:`~evrpn.cluster.ProposalSet` or a score-ordered
    sequence of boxes/proposals. Returns per-proposal TP flags (after the
    per-chunk detection cap) and the number of unmatched ground-truth boxes.
    IoU ties go to the lowest ground-truth index.
    """
    items = getattr(proposals, "proposals", proposals)
    boxes = [getattr(p, "box", p) for p in items][: cfg.max_detections_per_chunk]
    taken = [False] * len(gt_boxes)
    flags = []
    for box in boxes:
        best, best_iou = -1, -1.0
        for g, gt in enumerate(gt_boxes):
            if taken[g]:
                continue
            v = iou(box, gt)
            if v > best_iou:
                best, best_iou = g, v
        if best >= 0 and best_iou >= cfg.iou_threshold:
            taken[best] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags, taken.count(False)


def _ranked(flags) -> np.ndarray:
    return np.asarray(list(flags), dtype=bool)


def average_precision(flags: Iterable[bool], total_gt: int) -> float:
    """101-point interpolated AP of a ranked TP/FP sequence.

    ``flags`` must already be sorted by descending score. Recall thresholds
    are compared in exact integer arithmetic.
    """
    flags = _ranked(flags)
    if total_gt == 0:
        return 1.0 if len(flags) == 0 else 0.0
    if len(flags) == 0:
        return 0.0
    tp = np.cumsum(flags)
    precision = tp / np.arange(1, len(flags) + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    total = 0.0
    for i in range(RECALL_STEPS + 1):
        # first rank whose recall tp/total_gt reaches i/100
        j = np.searchsorted(RECALL_STEPS * tp, i * total_gt, side="left")
        if j < len(flags):
            total += envelope[j]
    return float(total / (RECALL_STEPS + 1))


def average_recall(flags: Iterable[bool], total_gt: int) -> float:
    flags = _ranked(flags)
    if total_gt == 0:
        return 1.0
    return float(flags.sum() / total_gt)


def evaluate_video(proposal_sets, gt: GroundTruthSet, cfg: EvalConfig = EvalConfig()) -> VideoResult:
    gt_by_chunk = dict(gt.frames)
    pooled = []  # (-score, chunk_index, rank, flag)
    seen = set()
    skipped = []
    fn = 0
    for ps in proposal_sets:
        if ps.chunk_index not in gt_by_chunk:
            skipped.append(ps.chunk_index)
            continue
        seen.add(ps.chunk_index)
        flags, missed = match_detections(ps, gt_by_chunk[ps.chunk_index], cfg)
        fn += missed
        for rank, (p, flag) in enumerate(zip(ps.proposals, flags)):
            pooled.append((-p.score, ps.chunk_index, rank, flag))
    for k, boxes in gt.frames:
        if k not in seen:
            fn += len(boxes)
    if skipped:
        logger.warning("%s: skipped chunks absent from ground truth: %s", gt.video_name, skipped)
    pooled.sort(key=lambda r: r[:3])
    ranked = [r[3] for r in pooled]
    total_gt = gt.total_boxes
    tp = sum(ranked)
    return VideoResult(
        name=gt.video_name,
        ap=average_precision(ranked, total_gt),
        ar=average_recall(ranked, total_gt),
        tp=tp,
        fp=len(ranked) - tp,
        fn=fn,
        n_objects=gt.max_objects,
        skipped_chunks=skipped,
    )


def evaluate(videos: Sequence[tuple[Sequence, GroundTruthSet]], cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """Evaluate ``(proposal_sets, ground_truth)`` pairs, one per video."""
    per_video = []
    excluded = []
    warnings = []
    for proposal_sets, gt in videos:
        if not gt.frames:
            logger.warning("%s: no ground-truth frames, excluded from means", gt.video_name)
            excluded.append(gt.video_name)
            warnings.append(f"{gt.video_name}: no ground-truth frames, excluded from means")
            continue
        result = evaluate_video(proposal_sets, gt, cfg)
        if result.skipped_chunks:
            warnings.append(f"{gt.video_name}: skipped chunks absent from ground truth: {result.skipped_chunks}")
        per_video.append(result)
    m_ap = float(np.mean([v.ap for v in per_video])) if per_video else 0.0
    m_ar = float(np.mean([v.ar for v in per_video])) if per_video else 0.0
    return EvalReport(per_video, m_ap, m_ar, cfg.iou_threshold, excluded, warnings)
