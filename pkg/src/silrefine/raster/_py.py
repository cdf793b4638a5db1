"""NumPy rasterization kernels (fallback when the compiled core is missing).

Kernel contract shared with ``_ext.pyx``:

``hard_mask(xy, faces, width, height) -> uint8[height, width]``
    1 where the pixel centre is inside any face (top-left tie rule).
``soft_accumulate(xy, faces, width, height, sigma) -> float64[height, width]``
    ``S = sum_j softplus(sd_j / sigma)``; occupancy is ``1 - exp(-S)``, which
    equals the probabilistic union ``1 - prod_j (1 - sigmoid(sd_j / sigma))``.
``soft_backward(xy, faces, width, height, sigma, grad_s) -> float64[n_vertices, 2]``
    Vector-Jacobian product of ``S`` with ``grad_s`` w.r.t. ``xy``.
``soft_max_sd(xy, faces, width, height, sigma) -> (float64[h, w], int64[h, w])``
    ``X = max_j sd_j / sigma`` and the index of the maximizing face (-1 and
    ``-inf`` where no face is in reach); occupancy is ``sigmoid(X)``.
``soft_max_backward(xy, faces, width, height, sigma, grad_x, arg) -> float64[n_vertices, 2]``
    Vector-Jacobian product of ``X`` with ``grad_x`` w.r.t. ``xy``.

Pairs farther than ``CUTOFF * sigma`` outside a face are skipped; their
contribution to ``S`` is below ``exp(-CUTOFF)``.
"""

from __future__ import annotations

import numpy as np

CUTOFF = 30.0


def _window(xs, ys, width, height, margin):
    """Pixel index ranges whose centres lie within ``margin`` of the face bbox."""
    x0 = max(int(np.floor(min(xs) - margin - 0.5)), 0)
    x1 = min(int(np.ceil(max(xs) + margin - 0.5)), width - 1)
    y0 = max(int(np.floor(min(ys) - margin - 0.5)), 0)
    y1 = min(int(np.ceil(max(ys) + margin - 0.5)), height - 1)
    return x0, x1, y0, y1


def _oriented(xy, face):
    """Face corners ordered so the edge functions are positive inside, and twice the area."""
    i, j, k = (int(v) for v in face)
    a, b, c = xy[i], xy[j], xy[k]
    area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if area2 < 0:
        return (i, k, j), -area2
    return (i, j, k), area2


def hard_mask(xy, faces, width, height):
    xy = np.asarray(xy, dtype=np.float64)
    out = np.zeros((height, width), dtype=np.uint8)
    for face in faces:
        idx, area2 = _oriented(xy, face)
        if area2 == 0:
            continue
        pts = xy[list(idx)]
        x0, x1, y0, y1 = _window(pts[:, 0], pts[:, 1], width, height, 0.0)
        if x1 < x0 or y1 < y0:
            continue
        px = np.arange(x0, x1 + 1) + 0.5
        py = np.arange(y0, y1 + 1)[:, None] + 0.5
        inside = np.ones((y1 - y0 + 1, x1 - x0 + 1), dtype=bool)
        for e in range(3):
            ax, ay = pts[e]
            bx, by = pts[(e + 1) % 3]
            ex, ey = bx - ax, by - ay
            w = ex * (py - ay) - ey * (px - ax)
            top_left = ey < 0 or (ey == 0 and ex > 0)
            inside &= (w > 0) | ((w == 0) & top_left)
        out[y0:y1 + 1, x0:x1 + 1] |= inside
    return out


def _face_terms(pts, px, py):
    """Signed distance to the face boundary plus what the gradient needs."""
    dmin = None
    for e in range(3):
        ax, ay = pts[e]
        bx, by = pts[(e + 1) % 3]
        ex, ey = bx - ax, by - ay
        l2 = ex * ex + ey * ey
        if l2 > 0:
            t = np.clip(((px - ax) * ex + (py - ay) * ey) / l2, 0.0, 1.0)
        else:
            t = np.zeros(np.broadcast(px, py).shape)
        dx = px - (ax + t * ex)
        dy = py - (ay + t * ey)
        d = np.hypot(dx, dy)
        if dmin is None:
            dmin, emin, tmin, dxm, dym = d, np.zeros(d.shape, np.int64), t, dx, dy
        else:
            closer = d < dmin
            dmin = np.where(closer, d, dmin)
            emin = np.where(closer, e, emin)
            tmin = np.where(closer, t, tmin)
            dxm = np.where(closer, dx, dxm)
            dym = np.where(closer, dy, dym)
    return dmin, emin, tmin, dxm, dym


def _inside(pts, area2, px, py):
    if area2 == 0:
        return np.zeros(np.broadcast(px, py).shape, dtype=bool)
    inside = np.ones(np.broadcast(px, py).shape, dtype=bool)
    for e in range(3):
        ax, ay = pts[e]
        bx, by = pts[(e + 1) % 3]
        inside &= (bx - ax) * (py - ay) - (by - ay) * (px - ax) > 0
    return inside


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x):
    ex = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))


def _iter_faces(xy, faces, width, height, sigma):
    margin = CUTOFF * sigma
    for f, face in enumerate(faces):
        idx, area2 = _oriented(xy, face)
        pts = xy[list(idx)]
        x0, x1, y0, y1 = _window(pts[:, 0], pts[:, 1], width, height, margin)
        if x1 < x0 or y1 < y0:
            continue
        px = np.arange(x0, x1 + 1) + 0.5
        py = np.arange(y0, y1 + 1)[:, None] + 0.5
        terms = _face_terms(pts, px, py)
        s = np.where(_inside(pts, area2, px, py), 1.0, -1.0)
        x = s * terms[0] / sigma
        keep = x > -CUTOFF
        yield f, idx, pts, (y0, y1, x0, x1), x, s, keep, terms


def soft_accumulate(xy, faces, width, height, sigma):
    xy = np.asarray(xy, dtype=np.float64)
    acc = np.zeros((height, width))
    for _, _, _, (y0, y1, x0, x1), x, _, keep, _ in _iter_faces(xy, faces, width, height, sigma):
        acc[y0:y1 + 1, x0:x1 + 1] += np.where(keep, _softplus(x), 0.0)
    return acc


def _scatter(out, idx, pts, terms, s, g):
    """Add ``sum g * d(sd)/d(vertex)`` for one face; ``g`` is dL/d(signed distance)."""
    dmin, emin, tmin, dx, dy = terms
    safe = np.where(dmin > 0, dmin, 1.0)
    ux = s * dx / safe
    uy = s * dy / safe
    on_edge = dmin == 0
    if np.any(on_edge):
        # pixel exactly on an edge: use that edge's inward unit normal
        for e in range(3):
            ax, ay = pts[e]
            bx, by = pts[(e + 1) % 3]
            ex, ey = bx - ax, by - ay
            le = np.hypot(ex, ey)
            nx, ny = ((-ey / le, ex / le) if le > 0 else (0.0, 0.0))
            sel = on_edge & (emin == e)
            ux = np.where(sel, nx, ux)
            uy = np.where(sel, ny, uy)
    for e in range(3):
        sel = emin == e
        if not np.any(sel):
            continue
        ge = np.where(sel, g, 0.0)
        wa = ge * (1.0 - tmin)
        wb = ge * tmin
        ia, ib = idx[e], idx[(e + 1) % 3]
        out[ia, 0] -= np.sum(wa * ux)
        out[ia, 1] -= np.sum(wa * uy)
        out[ib, 0] -= np.sum(wb * ux)
        out[ib, 1] -= np.sum(wb * uy)


def soft_backward(xy, faces, width, height, sigma, grad_s):
    xy = np.asarray(xy, dtype=np.float64)
    grad_s = np.asarray(grad_s, dtype=np.float64)
    out = np.zeros((len(xy), 2))
    for _, idx, pts, (y0, y1, x0, x1), x, s, keep, terms in _iter_faces(
        xy, faces, width, height, sigma
    ):
        g = np.where(keep, grad_s[y0:y1 + 1, x0:x1 + 1] * _sigmoid(x), 0.0) / sigma
        if np.any(g):
            _scatter(out, idx, pts, terms, s, g)
    return out


def soft_max_sd(xy, faces, width, height, sigma):
    xy = np.asarray(xy, dtype=np.float64)
    best = np.full((height, width), -np.inf)
    arg = np.full((height, width), -1, dtype=np.int64)
    for f, _, _, (y0, y1, x0, x1), x, _, keep, _ in _iter_faces(xy, faces, width, height, sigma):
        sub, sub_arg = best[y0:y1 + 1, x0:x1 + 1], arg[y0:y1 + 1, x0:x1 + 1]
        better = keep & (x > sub)
        sub[better] = x[better]
        sub_arg[better] = f
    return best, arg


def soft_max_backward(xy, faces, width, height, sigma, grad_x, arg):
    """Route ``dL/dX`` (``X`` the max scaled distance) to each pixel's argmax face."""
    xy = np.asarray(xy, dtype=np.float64)
    grad_x = np.asarray(grad_x, dtype=np.float64)
    arg = np.asarray(arg)
    out = np.zeros((len(xy), 2))
    for f, idx, pts, (y0, y1, x0, x1), _, s, _, terms in _iter_faces(
        xy, faces, width, height, sigma
    ):
        own = arg[y0:y1 + 1, x0:x1 + 1] == f
        if not np.any(own):
            continue
        g = np.where(own, grad_x[y0:y1 + 1, x0:x1 + 1], 0.0) / sigma
        if np.any(g):
            _scatter(out, idx, pts, terms, s, g)
    return out
