"""
DBSCAN on pixel coordinates
===========================

Points on the pixel grid let the neighbour search use a fixed stencil of
integer offsets instead of a spatial tree. This script shows the stencil,
clusters a toy point set, and checks the labels against an O(n^2) scan.
"""

import numpy as np

from evrpn.cluster import NOISE, DbscanConfig, cluster_bbox, dbscan, extract_clusters, score, stencil

# Offsets within eps = 2.5 of a pixel, upper half only (each pair is probed once).
print("stencil(2.5):", stencil(2.5).tolist())

rng = np.random.default_rng(0)
blob_a = rng.choice(30 * 30, size=300, replace=False)
blob_b = rng.choice(25 * 25, size=200, replace=False)
points = np.concatenate(
    [
        np.stack([blob_a % 30 + 20, blob_a // 30 + 20], axis=1),
        np.stack([blob_b % 25 + 120, blob_b // 25 + 60], axis=1),
        np.stack([rng.integers(0, 200, 40), rng.integers(0, 150, 40)], axis=1),
    ]
)
points = np.unique(points, axis=0)

cfg = DbscanConfig(eps=3.0, min_pts=8, min_cluster_size=15)
labels = dbscan(points, cfg)
print(f"{len(points)} points, {labels.max() + 1} clusters, {(labels == NOISE).sum()} noise")

for c in extract_clusters(labels, points, cfg):
    print(f"  cluster of {c.size:3d}: box {cluster_bbox(c).as_list()} score {score(c, cfg):.2f}")

# Core points by brute force: every point within eps, itself included.
d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(-1)
core = (d2 <= cfg.eps**2).sum(1) >= cfg.min_pts
print("every core point is clustered:", bool(np.all(labels[core] >= 0)))
