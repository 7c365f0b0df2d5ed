"""Slow, obviously-correct reference implementations used by the tests.

None of these import the code under test.
"""

from __future__ import annotations

import itertools
from collections import deque
from fractions import Fraction

UNVISITED = None
NOISE = -1


def brute_dbscan(points, eps, min_pts):
    """Textbook queue-based DBSCAN visiting points in (y, x) order, O(n^2)."""
    pts = [tuple(map(int, p)) for p in points]
    n = len(pts)
    eps2 = eps * eps

    def region(i):
        xi, yi = pts[i]
        return [j for j in range(n) if (pts[j][0] - xi) ** 2 + (pts[j][1] - yi) ** 2 <= eps2]

    labels = [UNVISITED] * n
    order = sorted(range(n), key=lambda i: (pts[i][1], pts[i][0]))
    cid = 0
    for i in order:
        if labels[i] is not UNVISITED:
            continue
        nbrs = region(i)
        if len(nbrs) < min_pts:
            labels[i] = NOISE
            continue
        labels[i] = cid
        queue = deque(j for j in nbrs if j != i)
        while queue:
            q = queue.popleft()
            if labels[q] == NOISE:
                labels[q] = cid
            if labels[q] is not UNVISITED:
                continue
            labels[q] = cid
            q_nbrs = region(q)
            if len(q_nbrs) >= min_pts:
                queue.extend(q_nbrs)
        cid += 1
    return labels


def grid_area(box):
    """Area of an integer box by counting unit cells."""
    x1, y1, x2, y2 = box
    return sum(1 for _x in range(x1, x2) for _y in range(y1, y2))


def grid_iou(a, b):
    """Exact IoU of two integer boxes by enumerating the cells of each."""
    ca = {(x, y) for x in range(a[0], a[2]) for y in range(a[1], a[3])}
    cb = {(x, y) for x in range(b[0], b[2]) for y in range(b[1], b[3])}
    union = len(ca | cb)
    return Fraction(len(ca & cb), union) if union else Fraction(0)


def best_lexicographic_matching(proposals, gts, threshold):
    """Per-proposal TP flags by exhaustive search.

    Among all one-to-one assignments of proposals to ground truth whose pairs
    reach ``threshold``, pick the lexicographically largest sequence of
    per-proposal keys ``(matched, iou, -gt_index)`` in ranked order. This is
    the declarative description of greedy score-ordered matching.
    """
    thr = Fraction(threshold).limit_denominator(10**9)
    n, m = len(proposals), len(gts)
    ious = [[grid_iou(p, g) for g in gts] for p in proposals]
    best_key, best_flags = None, None
    # every assignment: proposal i -> gt index or None
    for choice in itertools.product(*[[None] + list(range(m))] * n):
        used = [c for c in choice if c is not None]
        if len(used) != len(set(used)):
            continue
        if any(c is not None and ious[i][c] < thr for i, c in enumerate(choice)):
            continue
        key = tuple((0, Fraction(0), 0) if c is None else (1, ious[i][c], -c) for i, c in enumerate(choice))
        if best_key is None or key > best_key:
            best_key, best_flags = key, [c is not None for c in choice]
    return best_flags


def enumerate_ap(flags, total_gt, steps=100):
    """101-point interpolated AP with exact rationals.

    For each recall level r = i/steps, take the best precision among all ranks
    whose recall is at least r (0 if none), then average.
    """
    if total_gt == 0:
        return Fraction(1) if not flags else Fraction(0)
    points = []
    tp = 0
    for k, f in enumerate(flags, start=1):
        tp += bool(f)
        points.append((Fraction(tp, total_gt), Fraction(tp, k)))
    total = Fraction(0)
    for i in range(steps + 1):
        r = Fraction(i, steps)
        total += max([p for rec, p in points if rec >= r], default=Fraction(0))
    return total / (steps + 1)


def naive_erode(bits, mask):
    """Erosion by direct definition; out-of-frame pixels are unset."""
    h, w = len(bits), len(bits[0])
    mh, mw = len(mask), len(mask[0])
    ay, ax = mh // 2, mw // 2
    out = [[False] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            ok = True
            for dy in range(mh):
                for dx in range(mw):
                    if not mask[dy][dx]:
                        continue
                    yy, xx = y + dy - ay, x + dx - ax
                    if not (0 <= yy < h and 0 <= xx < w and bits[yy][xx]):
                        ok = False
            out[y][x] = ok
    return out
