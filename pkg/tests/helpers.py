"""Shared oracles for the test-suite."""

from fractions import Fraction

import numpy as np

from silrefine.geom import CameraIntrinsics
from silrefine.mesh import ScreenMesh


def screen(xy, faces):
    xy = np.asarray(xy, dtype=float)
    sv = np.column_stack([xy, np.ones(len(xy))])
    return ScreenMesh(sv, np.asarray(faces))


def image(width, height):
    return CameraIntrinsics(1.0, 1.0, 0.0, 0.0, width, height)


def brute_inside(tri, px, py):
    """Point-in-triangle test with the top-left tie rule.

    The top-left rule is equivalent to a strict test at the point nudged by
    ``(eps, eps**2)`` for infinitesimal ``eps``: the nudge enters the interior
    across left and top edges and leaves it across right and bottom ones.
    Exact rationals keep the nudge meaningful.
    """
    eps = Fraction(1, 10**9)
    (ax, ay), (bx, by), (cx, cy) = [(Fraction(float(x)), Fraction(float(y))) for x, y in tri]
    px, py = Fraction(float(px)) + eps, Fraction(float(py)) + eps * eps
    d1 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    d2 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
    d3 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
    return (d1 > 0 and d2 > 0 and d3 > 0) or (d1 < 0 and d2 < 0 and d3 < 0)


def random_triangle(rng, size, min_area=4.0):
    while True:
        tri = rng.uniform(2, size - 2, (3, 2))
        a2 = (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1]) - (tri[1, 1] - tri[0, 1]) * (tri[2, 0] - tri[0, 0])
        if abs(a2) / 2 > min_area:
            return tri


def fd_vertex_grad(fn, xy, h):
    """Central differences of the scalar ``fn(xy)`` w.r.t. every coordinate."""
    xy = np.array(xy, dtype=float)
    g = np.zeros_like(xy)
    for i in range(xy.shape[0]):
        for k in range(2):
            p, m = xy.copy(), xy.copy()
            p[i, k] += h
            m[i, k] -= h
            g[i, k] = (fn(p) - fn(m)) / (2 * h)
    return g


def max_rel_err(analytic, numeric, floor=1e-6):
    a, n = np.asarray(analytic).ravel(), np.asarray(numeric).ravel()
    sel = (np.abs(a) > floor) | (np.abs(n) > floor)
    if not np.any(sel):
        return 0.0
    return float(np.max(np.abs(a[sel] - n[sel]) / np.maximum(np.abs(a[sel]), np.abs(n[sel]))))


def reference_matching(preds, gts, eligible, dist):
    """Exhaustive matching oracle.

    Enumerates every injective partial assignment of predictions (in score
    order) to eligible ground truths and returns the one whose per-prediction
    key ``(0, distance, gt index)`` / ``(1,)`` for unmatched is
    lexicographically smallest. This is the assignment the greedy
    nearest-claim rule must produce.
    """
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    best = None

    def rec(pos, used, key, assign):
        nonlocal best
        if pos == len(order):
            if best is None or key < best[0]:
                best = (key, list(assign))
            return
        i = order[pos]
        for j in range(len(gts)):
            if j not in used and eligible(preds[i], gts[j]):
                rec(pos + 1, used | {j}, key + ((0, dist(preds[i], gts[j]), j),), assign + [j])
        rec(pos + 1, used, key + ((1,),), assign + [None])

    rec(0, frozenset(), (), [])
    return order, best[1]


def reference_ap(labels, n_gt, interp):
    """Bin-by-bin AP with exact rational recall and precision."""
    levels = [Fraction(k, interp - 1) for k in range(interp)]
    if n_gt == 0 or not labels:
        return 0.0
    points, tp = [], 0
    for i, lab in enumerate(labels):
        tp += bool(lab)
        points.append((Fraction(tp, n_gt), Fraction(tp, i + 1)))
    rho = [max((p for r, p in points if r >= lv), default=Fraction(0)) for lv in levels]
    return float(np.mean([float(v) for v in rho]))


def reference_evaluate(preds, gts, kind, interp, table, ladder):
    """Brute-force A3DP per criterion, independent of the metrics module."""
    from silrefine.geom import rotation_distance

    def dist(p, g):
        d = float(np.sqrt(sum((a - b) ** 2 for a, b in zip(p.pose.translation, g.pose.translation))))
        if kind == "rel":
            d /= float(np.sqrt(sum(b * b for b in g.pose.translation)))
        return d

    images = sorted(gts, key=str)
    n_gt = sum(len(gts[i]) for i in images)
    aps = []
    for c in ladder:
        def eligible(p, g):
            return (table[(p.class_id, g.class_id)] >= c.shape_min
                    and rotation_distance(p.pose.rotation, g.pose.rotation) < c.rot_max
                    and dist(p, g) < c.trans_max)

        pooled = []
        for rank, img in enumerate(images):
            order, assign = reference_matching(preds[img], gts[img], eligible, dist)
            for pos, (i, j) in enumerate(zip(order, assign)):
                pooled.append(((-preds[img][i].score, rank, pos), j is not None))
        pooled.sort(key=lambda e: e[0])
        aps.append(reference_ap([lab for _, lab in pooled], n_gt, interp))
    return aps


def convex_hull(points):
    """Andrew's monotone chain; counter-clockwise in a y-up sense."""
    pts = sorted(set(map(tuple, points)))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def hull_mask(points, width, height):
    """Pixels whose centres lie strictly inside the convex hull of ``points``."""
    hull = np.array(convex_hull(points))
    ys, xs = np.mgrid[0:height, 0:width] + 0.5
    inside = np.ones((height, width), bool)
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        inside &= (b[0] - a[0]) * (ys - a[1]) - (b[1] - a[1]) * (xs - a[0]) > 0
    return inside


# criterion number -> one-line verdict, printed in the terminal summary
ACCEPTANCE: dict = {}


def record(n, ok, detail):
    ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok
