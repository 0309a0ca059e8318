# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-tetrahedron kernels.

Same functions and signatures as ``_kernels_py``; loops run over tets with
all small dense algebra (3x3 cofactor inverse, 6x6 Gauss-Jordan) unrolled
by hand so nothing calls back into Python inside the loop.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

LOCAL_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]], dtype=np.intp)

cdef int[6] _EA = [0, 0, 0, 1, 1, 2]
cdef int[6] _EB = [1, 2, 3, 2, 3, 3]


def signed_volumes(const double[:, ::1] coords, const cnp.intp_t[:, ::1] tets):
    cdef Py_ssize_t nt = tets.shape[0], t, k
    cdef double d[3][3]
    out = np.empty(nt)
    cdef double[::1] vol = out
    with nogil:
        for t in range(nt):
            for k in range(3):
                d[0][k] = coords[tets[t, 1], k] - coords[tets[t, 0], k]
                d[1][k] = coords[tets[t, 2], k] - coords[tets[t, 0], k]
                d[2][k] = coords[tets[t, 3], k] - coords[tets[t, 0], k]
            vol[t] = (d[0][0] * (d[1][1] * d[2][2] - d[1][2] * d[2][1])
                      - d[0][1] * (d[1][0] * d[2][2] - d[1][2] * d[2][0])
                      + d[0][2] * (d[1][0] * d[2][1] - d[1][1] * d[2][0])) / 6.0
    return out


def dof_maps(const double[:, ::1] coords, const cnp.intp_t[:, ::1] tets):
    cdef Py_ssize_t nt = tets.shape[0], t, i, k
    cdef double tv[3]
    cdef double length
    out = np.empty((nt, 6, 6))
    cdef double[:, :, ::1] m = out
    with nogil:
        for t in range(nt):
            for i in range(6):
                for k in range(3):
                    tv[k] = coords[tets[t, _EB[i]], k] - coords[tets[t, _EA[i]], k]
                length = sqrt(tv[0] * tv[0] + tv[1] * tv[1] + tv[2] * tv[2])
                m[t, i, 0] = tv[0] * tv[0] / length
                m[t, i, 1] = tv[1] * tv[1] / length
                m[t, i, 2] = tv[2] * tv[2] / length
                m[t, i, 3] = 2.0 * tv[0] * tv[1] / length
                m[t, i, 4] = 2.0 * tv[0] * tv[2] / length
                m[t, i, 5] = 2.0 * tv[1] * tv[2] / length
    return out


def invert_blocks(blocks):
    cdef const double[:, :, ::1] a_in = np.ascontiguousarray(blocks, dtype=np.float64)
    cdef Py_ssize_t nb = a_in.shape[0], n = a_in.shape[1], b, i, j, k, piv
    out = np.empty((nb, n, n))
    cdef double[:, :, ::1] inv = out
    work_arr = np.empty((n, n))
    cdef double[:, ::1] w = work_arr
    cdef double best, f, tmp
    cdef int singular = 0
    with nogil:
        for b in range(nb):
            for i in range(n):
                for j in range(n):
                    w[i, j] = a_in[b, i, j]
                    inv[b, i, j] = 1.0 if i == j else 0.0
            for k in range(n):
                piv = k
                best = fabs(w[k, k])
                for i in range(k + 1, n):
                    if fabs(w[i, k]) > best:
                        best = fabs(w[i, k])
                        piv = i
                if best == 0.0:
                    singular = 1
                    break
                if piv != k:
                    for j in range(n):
                        tmp = w[k, j]; w[k, j] = w[piv, j]; w[piv, j] = tmp
                        tmp = inv[b, k, j]; inv[b, k, j] = inv[b, piv, j]; inv[b, piv, j] = tmp
                f = 1.0 / w[k, k]
                for j in range(n):
                    w[k, j] *= f
                    inv[b, k, j] *= f
                for i in range(n):
                    if i != k and w[i, k] != 0.0:
                        f = w[i, k]
                        for j in range(n):
                            w[i, j] -= f * w[k, j]
                            inv[b, i, j] -= f * inv[b, k, j]
            if singular:
                break
    if singular:
        raise np.linalg.LinAlgError("Singular matrix")
    return out


cdef inline void _bary_grads(const double[:, ::1] coords, const cnp.intp_t[:, ::1] tets,
                             Py_ssize_t t, double g[4][3]) noexcept nogil:
    cdef double d[3][3]
    cdef double det
    cdef int k
    # columns of d are edge vectors from vertex 0
    for k in range(3):
        d[k][0] = coords[tets[t, 1], k] - coords[tets[t, 0], k]
        d[k][1] = coords[tets[t, 2], k] - coords[tets[t, 0], k]
        d[k][2] = coords[tets[t, 3], k] - coords[tets[t, 0], k]
    det = (d[0][0] * (d[1][1] * d[2][2] - d[1][2] * d[2][1])
           - d[0][1] * (d[1][0] * d[2][2] - d[1][2] * d[2][0])
           + d[0][2] * (d[1][0] * d[2][1] - d[1][1] * d[2][0]))
    # rows of inv(d)
    g[1][0] = (d[1][1] * d[2][2] - d[1][2] * d[2][1]) / det
    g[1][1] = (d[0][2] * d[2][1] - d[0][1] * d[2][2]) / det
    g[1][2] = (d[0][1] * d[1][2] - d[0][2] * d[1][1]) / det
    g[2][0] = (d[1][2] * d[2][0] - d[1][0] * d[2][2]) / det
    g[2][1] = (d[0][0] * d[2][2] - d[0][2] * d[2][0]) / det
    g[2][2] = (d[0][2] * d[1][0] - d[0][0] * d[1][2]) / det
    g[3][0] = (d[1][0] * d[2][1] - d[1][1] * d[2][0]) / det
    g[3][1] = (d[0][1] * d[2][0] - d[0][0] * d[2][1]) / det
    g[3][2] = (d[0][0] * d[1][1] - d[0][1] * d[1][0]) / det
    for k in range(3):
        g[0][k] = -(g[1][k] + g[2][k] + g[3][k])


def barycentric_gradients(const double[:, ::1] coords, const cnp.intp_t[:, ::1] tets):
    cdef Py_ssize_t nt = tets.shape[0], t
    cdef int a, k
    cdef double g[4][3]
    out = np.empty((nt, 4, 3))
    cdef double[:, :, ::1] o = out
    with nogil:
        for t in range(nt):
            _bary_grads(coords, tets, t, g)
            for a in range(4):
                for k in range(3):
                    o[t, a, k] = g[a][k]
    return out


def sym_grad_operators(const double[:, ::1] coords, const cnp.intp_t[:, ::1] tets):
    cdef Py_ssize_t nt = tets.shape[0], t
    cdef int a, c
    cdef double g[4][3]
    out = np.zeros((nt, 6, 12))
    cdef double[:, :, ::1] o = out
    with nogil:
        for t in range(nt):
            _bary_grads(coords, tets, t, g)
            for a in range(4):
                c = 3 * a
                o[t, 0, c] = g[a][0]
                o[t, 1, c + 1] = g[a][1]
                o[t, 2, c + 2] = g[a][2]
                o[t, 3, c] = 0.5 * g[a][1]
                o[t, 3, c + 1] = 0.5 * g[a][0]
                o[t, 4, c] = 0.5 * g[a][2]
                o[t, 4, c + 2] = 0.5 * g[a][0]
                o[t, 5, c + 1] = 0.5 * g[a][2]
                o[t, 5, c + 2] = 0.5 * g[a][1]
    return out


def weighted_blocks(ops, weights, form):
    cdef const double[:, :, ::1] op = np.ascontiguousarray(ops, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[:, ::1] q = np.ascontiguousarray(form, dtype=np.float64)
    cdef Py_ssize_t nt = op.shape[0], r = op.shape[1], k = op.shape[2]
    cdef Py_ssize_t t, i, j, a, b
    cdef double s
    out = np.empty((nt, k, k))
    cdef double[:, :, ::1] o = out
    tmp_arr = np.empty((r, k))
    cdef double[:, ::1] qo = tmp_arr
    with nogil:
        for t in range(nt):
            # qo = form @ op[t]
            for i in range(r):
                for b in range(k):
                    s = 0.0
                    for j in range(r):
                        s = s + q[i, j] * op[t, j, b]
                    qo[i, b] = s
            for a in range(k):
                for b in range(a, k):
                    s = 0.0
                    for i in range(r):
                        s = s + op[t, i, a] * qo[i, b]
                    o[t, a, b] = w[t] * s
                    o[t, b, a] = w[t] * s
    return out
