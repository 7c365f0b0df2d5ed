"""
Why the scenes use textured shapes
==================================

A flat shape only changes brightness at its outline. Keeping every second
message leaves thin stripes of events along the moving edges, and a 3x3
erosion removes anything narrower than three pixels. A shape with internal
texture fires across its whole body, so erosion keeps a solid blob.
"""

from evrpn.cluster import ProposalConfig, propose_chunks
from evrpn.events import SensorGeometry, iou
from evrpn.ingest import chunk_messages
from evrpn.rasterize import binarize, build_frame, erode
from evrpn.simulator import LinearTrajectory, MovingShape, SceneSpec, simulate

geometry = SensorGeometry(640, 480)

for contrast in (0.0, 0.4):
    shape = MovingShape("rectangle", (120, 100), 2.0, LinearTrajectory((100, 150), (60, 20)), texture_contrast=contrast)
    spec = SceneSpec(geometry, duration_s=1.4, shapes=[shape], substep_s=0.002)
    _, messages, gt = simulate(spec)
    chunks = chunk_messages(messages)

    bits = binarize(build_frame(chunks[1], geometry)).bits
    kept = erode(binarize(build_frame(chunks[1], geometry))).bits
    sets = propose_chunks(chunks, geometry, ProposalConfig())
    label = "textured" if contrast else "flat"
    print(f"{label:9s} chunk 1: {bits.sum():6,d} occupied pixels -> {kept.sum():6,d} after erosion")
    for ps, (k, boxes) in zip(sets, gt.frames):
        ious = [round(iou(p.box, boxes[0]), 2) for p in ps.proposals]
        print(f"          chunk {k}: {len(ps)} proposals, IoU {ious}")
