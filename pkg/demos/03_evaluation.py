"""
Scoring proposals: greedy matching and 101-point AP
===================================================

Three detections against two ground-truth boxes, worked by hand and then
through the evaluator, followed by a small multi-video report.
"""

from evrpn.cluster import Proposal, ProposalSet
from evrpn.evaluation import GroundTruthSet, average_precision, evaluate, match_detections
from evrpn.events import BBox, SensorGeometry

gt = [BBox(10, 10, 50, 50), BBox(100, 20, 140, 80)]
ranked = [
    Proposal(BBox(11, 10, 50, 52), 0.9),  # hits the first box
    Proposal(BBox(200, 200, 240, 240), 0.6),  # nothing there
    Proposal(BBox(100, 22, 141, 80), 0.4),  # hits the second box
]
flags, misses = match_detections(ranked, gt)
print("TP flags:", flags, "missed:", misses)

# Precision stays 1 up to recall 0.5 (51 of the 101 recall levels), then the
# best precision at recall 1 is 2/3 (the other 50 levels).
by_hand = (51 * 1.0 + 50 * 2 / 3) / 101
print(f"AP by hand {by_hand:.6f}, evaluator {average_precision(flags, len(gt)):.6f}")

# A report over a few videos, one chunk each.
geometry = SensorGeometry(320, 240)
videos = []
for name, shift in [("hallway", 0), ("parking", 3), ("desk", 12)]:
    truth = GroundTruthSet(name, geometry, [(0, gt)])
    props = ProposalSet(0, 0, 333_333, [Proposal(p.box.translated(shift, 0), p.score) for p in ranked])
    videos.append(([props], truth))
print()
print(evaluate(videos).format_table())
