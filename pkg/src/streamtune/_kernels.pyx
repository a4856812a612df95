# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: pipeline makespan and the SMO inner loop.

Semantics match ``_kernels_py`` exactly; see that module for documentation.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double TAU = 1e-12


cdef inline bint _before(double ra, Py_ssize_t ia, double rb, Py_ssize_t ib):
    return ra < rb or (ra == rb and ia < ib)


def makespan(t_in, t_comp, t_out, Py_ssize_t partitions):
    cdef double[::1] tin = np.ascontiguousarray(t_in, dtype=np.float64)
    cdef double[::1] tcomp = np.ascontiguousarray(t_comp, dtype=np.float64)
    cdef double[::1] tout = np.ascontiguousarray(t_out, dtype=np.float64)
    cdef Py_ssize_t n = tin.shape[0]
    cdef double[::1] part_free = np.zeros(partitions, dtype=np.float64)
    # binary min-heap of pending transfer-outs keyed on (ready, task)
    cdef double[::1] hr = np.empty(max(n, 1), dtype=np.float64)
    cdef Py_ssize_t[::1] hi = np.empty(max(n, 1), dtype=np.intp)
    cdef Py_ssize_t size = 0
    cdef double channel = 0.0
    cdef Py_ssize_t next_in = 0
    cdef Py_ssize_t served = 0
    cdef Py_ssize_t i, j, p, c, parent
    cdef double start, done, r
    while served < 2 * n:
        if next_in < n and not (size > 0 and _before(hr[0], hi[0], 0.0, next_in)):
            i = next_in
            next_in += 1
            channel = channel + tin[i]
            p = i % partitions
            start = channel if channel > part_free[p] else part_free[p]
            done = start + tcomp[i]
            part_free[p] = done
            c = size
            size += 1
            while c > 0:
                parent = (c - 1) >> 1
                if not _before(done, i, hr[parent], hi[parent]):
                    break
                hr[c] = hr[parent]
                hi[c] = hi[parent]
                c = parent
            hr[c] = done
            hi[c] = i
        else:
            r = hr[0]
            j = hi[0]
            size -= 1
            # sift the last entry down from the root
            c = 0
            while True:
                p = 2 * c + 1
                if p >= size:
                    break
                if p + 1 < size and _before(hr[p + 1], hi[p + 1], hr[p], hi[p]):
                    p += 1
                if not _before(hr[p], hi[p], hr[size], hi[size]):
                    break
                hr[c] = hr[p]
                hi[c] = hi[p]
                c = p
            hr[c] = hr[size]
            hi[c] = hi[size]
            start = channel if channel > r else r
            channel = start + tout[j]
        served += 1
    return channel


def smo_solve(Q_in, y_in, double C, double tol, long max_iter):
    cdef double[:, ::1] Q = np.ascontiguousarray(Q_in, dtype=np.float64)
    cdef double[::1] y = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef Py_ssize_t n = Q.shape[0]
    alpha_arr = np.zeros(n, dtype=np.float64)
    G_arr = -np.ones(n, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] G = G_arr
    cdef long it = 0
    cdef bint converged = False
    cdef Py_ssize_t i, j, k
    cdef double gmax, gmin, v, ai, aj, ni, nj, quad, delta, diff, total, dai, daj
    while it < max_iter:
        i = -1
        j = -1
        gmax = 0.0
        gmin = 0.0
        for k in range(n):
            v = -y[k] * G[k]
            if (y[k] > 0 and alpha[k] < C) or (y[k] < 0 and alpha[k] > 0):
                if i < 0 or v > gmax:
                    gmax = v
                    i = k
            if (y[k] > 0 and alpha[k] > 0) or (y[k] < 0 and alpha[k] < C):
                if j < 0 or v < gmin:
                    gmin = v
                    j = k
        if i < 0 or j < 0:
            converged = True
            break
        if gmax - gmin < tol:
            converged = True
            break
        it += 1
        ai = alpha[i]
        aj = alpha[j]
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni = ai + delta
            nj = aj + delta
            if diff > 0:
                if nj < 0:
                    nj = 0.0
                    ni = diff
            else:
                if ni < 0:
                    ni = 0.0
                    nj = -diff
            if diff > 0:
                if ni > C:
                    ni = C
                    nj = C - diff
            else:
                if nj > C:
                    nj = C
                    ni = C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni = ai - delta
            nj = aj + delta
            if total > C:
                if ni > C:
                    ni = C
                    nj = total - C
            else:
                if nj < 0:
                    nj = 0.0
                    ni = total
            if total > C:
                if nj > C:
                    nj = C
                    ni = total - C
            else:
                if ni < 0:
                    ni = 0.0
                    nj = total
        alpha[i] = ni
        alpha[j] = nj
        dai = ni - ai
        daj = nj - aj
        for k in range(n):
            G[k] = G[k] + (Q[i, k] * dai + Q[j, k] * daj)
    return alpha_arr, G_arr, it, converged
