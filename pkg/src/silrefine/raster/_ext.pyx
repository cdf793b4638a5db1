# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rasterization kernels; same contract as ``_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, sqrt, floor, ceil, fabs

cnp.import_array()

cdef double CUTOFF = 30.0


cdef inline double _softplus(double x) nogil:
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline int _clampi(int v, int lo, int hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef inline void _orient(const double[:, ::1] xy, const cnp.int64_t[:, ::1] faces,
                         Py_ssize_t f, Py_ssize_t* idx, double* area2) nogil:
    cdef Py_ssize_t i = faces[f, 0], j = faces[f, 1], k = faces[f, 2]
    cdef double a2 = ((xy[j, 0] - xy[i, 0]) * (xy[k, 1] - xy[i, 1])
                      - (xy[j, 1] - xy[i, 1]) * (xy[k, 0] - xy[i, 0]))
    idx[0] = i
    if a2 < 0:
        idx[1] = k
        idx[2] = j
        area2[0] = -a2
    else:
        idx[1] = j
        idx[2] = k
        area2[0] = a2


cdef inline void _window(double* xs, double* ys, int width, int height, double margin,
                         int* x0, int* x1, int* y0, int* y1) nogil:
    cdef double lox = xs[0], hix = xs[0], loy = ys[0], hiy = ys[0]
    cdef int e
    for e in range(1, 3):
        if xs[e] < lox: lox = xs[e]
        if xs[e] > hix: hix = xs[e]
        if ys[e] < loy: loy = ys[e]
        if ys[e] > hiy: hiy = ys[e]
    x0[0] = _clampi(<int>floor(lox - margin - 0.5), 0, width)
    y0[0] = _clampi(<int>floor(loy - margin - 0.5), 0, height)
    x1[0] = _clampi(<int>ceil(hix + margin - 0.5), -1, width - 1)
    y1[0] = _clampi(<int>ceil(hiy + margin - 0.5), -1, height - 1)


def hard_mask(xy_in, faces_in, int width, int height):
    cdef const double[:, ::1] xy = np.ascontiguousarray(xy_in, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] faces = np.ascontiguousarray(faces_in, dtype=np.int64)
    out_arr = np.zeros((height, width), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    cdef Py_ssize_t f, idx[3]
    cdef double area2, xs[3], ys[3], ex[3], ey[3]
    cdef bint tl[3]
    cdef int x0, x1, y0, y1, r, c, e, ok
    cdef double px, py, w
    with nogil:
        for f in range(faces.shape[0]):
            _orient(xy, faces, f, idx, &area2)
            if area2 == 0:
                continue
            for e in range(3):
                xs[e] = xy[idx[e], 0]
                ys[e] = xy[idx[e], 1]
            for e in range(3):
                ex[e] = xs[(e + 1) % 3] - xs[e]
                ey[e] = ys[(e + 1) % 3] - ys[e]
                tl[e] = ey[e] < 0 or (ey[e] == 0 and ex[e] > 0)
            _window(xs, ys, width, height, 0.0, &x0, &x1, &y0, &y1)
            for r in range(y0, y1 + 1):
                py = r + 0.5
                for c in range(x0, x1 + 1):
                    px = c + 0.5
                    ok = 1
                    for e in range(3):
                        w = ex[e] * (py - ys[e]) - ey[e] * (px - xs[e])
                        if not (w > 0 or (w == 0 and tl[e])):
                            ok = 0
                            break
                    if ok:
                        out[r, c] = 1
    return out_arr


cdef inline double _face_sd(double px, double py, double* xs, double* ys, double* ex,
                            double* ey, double* l2, bint has_area,
                            int* emin, double* tmin, double* dxm, double* dym) nogil:
    """Signed distance (positive inside) from a pixel centre to the face boundary."""
    cdef int e
    cdef double t, dx, dy, d2, best = -1.0
    cdef bint inside = has_area
    for e in range(3):
        if l2[e] > 0:
            t = ((px - xs[e]) * ex[e] + (py - ys[e]) * ey[e]) / l2[e]
            if t < 0:
                t = 0.0
            elif t > 1:
                t = 1.0
        else:
            t = 0.0
        dx = px - (xs[e] + t * ex[e])
        dy = py - (ys[e] + t * ey[e])
        d2 = dx * dx + dy * dy
        if best < 0 or d2 < best:
            best = d2
            emin[0] = e
            tmin[0] = t
            dxm[0] = dx
            dym[0] = dy
        if inside and not (ex[e] * (py - ys[e]) - ey[e] * (px - xs[e]) > 0):
            inside = False
    if inside:
        return sqrt(best)
    return -sqrt(best)


cdef inline void _prep(const double[:, ::1] xy, Py_ssize_t* idx, double* xs, double* ys,
                       double* ex, double* ey, double* l2) nogil:
    cdef int e
    for e in range(3):
        xs[e] = xy[idx[e], 0]
        ys[e] = xy[idx[e], 1]
    for e in range(3):
        ex[e] = xs[(e + 1) % 3] - xs[e]
        ey[e] = ys[(e + 1) % 3] - ys[e]
        l2[e] = ex[e] * ex[e] + ey[e] * ey[e]


def soft_accumulate(xy_in, faces_in, int width, int height, double sigma):
    cdef const double[:, ::1] xy = np.ascontiguousarray(xy_in, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] faces = np.ascontiguousarray(faces_in, dtype=np.int64)
    acc_arr = np.zeros((height, width), dtype=np.float64)
    cdef double[:, ::1] acc = acc_arr
    cdef Py_ssize_t f, idx[3]
    cdef double area2, xs[3], ys[3], ex[3], ey[3], l2[3]
    cdef int x0, x1, y0, y1, r, c, emin
    cdef double x, tmin, dxm, dym, inv = 1.0 / sigma
    with nogil:
        for f in range(faces.shape[0]):
            _orient(xy, faces, f, idx, &area2)
            _prep(xy, idx, xs, ys, ex, ey, l2)
            _window(xs, ys, width, height, CUTOFF * sigma, &x0, &x1, &y0, &y1)
            for r in range(y0, y1 + 1):
                for c in range(x0, x1 + 1):
                    x = _face_sd(c + 0.5, r + 0.5, xs, ys, ex, ey, l2, area2 != 0,
                                 &emin, &tmin, &dxm, &dym) * inv
                    if x > -CUTOFF:
                        acc[r, c] += _softplus(x)
    return acc_arr


cdef inline void _grad_sd(double g, double sd, int emin, double tmin, double dxm, double dym,
                          double* ex, double* ey, double* l2, double* acc) nogil:
    """Accumulate ``g * d(sd)/d(vertex)`` into ``acc`` (x, y per oriented corner)."""
    cdef double ux, uy, d = fabs(sd), le
    cdef int e
    if d > 0:
        if sd > 0:
            ux = dxm / d
            uy = dym / d
        else:
            ux = -dxm / d
            uy = -dym / d
    else:
        # pixel exactly on an edge: that edge's inward unit normal
        le = sqrt(l2[emin])
        if le > 0:
            ux = -ey[emin] / le
            uy = ex[emin] / le
        else:
            ux = 0.0
            uy = 0.0
    acc[2 * emin] -= g * (1.0 - tmin) * ux
    acc[2 * emin + 1] -= g * (1.0 - tmin) * uy
    e = (emin + 1) % 3
    acc[2 * e] -= g * tmin * ux
    acc[2 * e + 1] -= g * tmin * uy


def soft_backward(xy_in, faces_in, int width, int height, double sigma, grad_in):
    cdef const double[:, ::1] xy = np.ascontiguousarray(xy_in, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] faces = np.ascontiguousarray(faces_in, dtype=np.int64)
    cdef const double[:, ::1] grad_s = np.ascontiguousarray(grad_in, dtype=np.float64)
    out_arr = np.zeros((xy.shape[0], 2), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t f, idx[3]
    cdef double area2, xs[3], ys[3], ex[3], ey[3], l2[3], acc[6]
    cdef int x0, x1, y0, y1, r, c, emin, e
    cdef double x, sd, g, tmin, dxm, dym, inv = 1.0 / sigma
    with nogil:
        for f in range(faces.shape[0]):
            _orient(xy, faces, f, idx, &area2)
            _prep(xy, idx, xs, ys, ex, ey, l2)
            _window(xs, ys, width, height, CUTOFF * sigma, &x0, &x1, &y0, &y1)
            for e in range(6):
                acc[e] = 0.0
            for r in range(y0, y1 + 1):
                for c in range(x0, x1 + 1):
                    g = grad_s[r, c]
                    if g == 0:
                        continue
                    sd = _face_sd(c + 0.5, r + 0.5, xs, ys, ex, ey, l2, area2 != 0,
                                  &emin, &tmin, &dxm, &dym)
                    x = sd * inv
                    if not x > -CUTOFF:
                        continue
                    _grad_sd(g * _sigmoid(x) * inv, sd, emin, tmin, dxm, dym, ex, ey, l2, acc)
            for e in range(3):
                out[idx[e], 0] += acc[2 * e]
                out[idx[e], 1] += acc[2 * e + 1]
    return out_arr


def soft_max_sd(xy_in, faces_in, int width, int height, double sigma):
    cdef const double[:, ::1] xy = np.ascontiguousarray(xy_in, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] faces = np.ascontiguousarray(faces_in, dtype=np.int64)
    best_arr = np.full((height, width), -np.inf, dtype=np.float64)
    arg_arr = np.full((height, width), -1, dtype=np.int64)
    cdef double[:, ::1] best = best_arr
    cdef cnp.int64_t[:, ::1] arg = arg_arr
    cdef Py_ssize_t f, idx[3]
    cdef double area2, xs[3], ys[3], ex[3], ey[3], l2[3]
    cdef int x0, x1, y0, y1, r, c, emin
    cdef double x, tmin, dxm, dym, inv = 1.0 / sigma
    with nogil:
        for f in range(faces.shape[0]):
            _orient(xy, faces, f, idx, &area2)
            _prep(xy, idx, xs, ys, ex, ey, l2)
            _window(xs, ys, width, height, CUTOFF * sigma, &x0, &x1, &y0, &y1)
            for r in range(y0, y1 + 1):
                for c in range(x0, x1 + 1):
                    x = _face_sd(c + 0.5, r + 0.5, xs, ys, ex, ey, l2, area2 != 0,
                                 &emin, &tmin, &dxm, &dym) * inv
                    if x > -CUTOFF and x > best[r, c]:
                        best[r, c] = x
                        arg[r, c] = f
    return best_arr, arg_arr


def soft_max_backward(xy_in, faces_in, int width, int height, double sigma, grad_in, arg_in):
    cdef const double[:, ::1] xy = np.ascontiguousarray(xy_in, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] faces = np.ascontiguousarray(faces_in, dtype=np.int64)
    cdef const double[:, ::1] grad_x = np.ascontiguousarray(grad_in, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] arg = np.ascontiguousarray(arg_in, dtype=np.int64)
    out_arr = np.zeros((xy.shape[0], 2), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t f, idx[3]
    cdef double area2, xs[3], ys[3], ex[3], ey[3], l2[3], acc[6]
    cdef int x0, x1, y0, y1, r, c, emin, e
    cdef double sd, g, tmin, dxm, dym, inv = 1.0 / sigma
    with nogil:
        for f in range(faces.shape[0]):
            _orient(xy, faces, f, idx, &area2)
            _prep(xy, idx, xs, ys, ex, ey, l2)
            _window(xs, ys, width, height, CUTOFF * sigma, &x0, &x1, &y0, &y1)
            for e in range(6):
                acc[e] = 0.0
            for r in range(y0, y1 + 1):
                for c in range(x0, x1 + 1):
                    if arg[r, c] != f:
                        continue
                    g = grad_x[r, c]
                    if g == 0:
                        continue
                    sd = _face_sd(c + 0.5, r + 0.5, xs, ys, ex, ey, l2, area2 != 0,
                                  &emin, &tmin, &dxm, &dym)
                    _grad_sd(g * inv, sd, emin, tmin, dxm, dym, ex, ey, l2, acc)
            for e in range(3):
                out[idx[e], 0] += acc[2 * e]
                out[idx[e], 1] += acc[2 * e + 1]
    return out_arr
