# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled best-first search over the 8-connected elevation grid.

Same contract and expansion order as ``_search_py.grid_search``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, atan2, fabs, INFINITY, M_PI
from libc.stdlib cimport malloc, realloc, free

cnp.import_array()

cdef int[8] MDX
cdef int[8] MDY
MDX[:] = [0, 1, 1, 1, 0, -1, -1, -1]
MDY[:] = [-1, -1, 0, 1, 1, 1, 0, -1]


cdef struct Entry:
    double key
    long long order
    Py_ssize_t node


cdef inline bint _less(Entry a, Entry b) nogil:
    if a.key < b.key:
        return True
    if a.key > b.key:
        return False
    return a.order < b.order


cdef struct Heap:
    Entry* data
    Py_ssize_t size
    Py_ssize_t cap


cdef int _push(Heap* h, Entry e) nogil:
    cdef Py_ssize_t i, p
    cdef Entry* grown
    if h.size == h.cap:
        grown = <Entry*> realloc(h.data, 2 * h.cap * sizeof(Entry))
        if grown == NULL:
            return -1
        h.data = grown
        h.cap *= 2
    i = h.size
    h.size += 1
    while i > 0:
        p = (i - 1) >> 1
        if _less(e, h.data[p]):
            h.data[i] = h.data[p]
            i = p
        else:
            break
    h.data[i] = e
    return 0


cdef Entry _pop(Heap* h) nogil:
    cdef Entry top = h.data[0]
    cdef Entry last
    cdef Py_ssize_t i, c, n
    h.size -= 1
    n = h.size
    if n > 0:
        last = h.data[n]
        i = 0
        while True:
            c = 2 * i + 1
            if c >= n:
                break
            if c + 1 < n and _less(h.data[c + 1], h.data[c]):
                c += 1
            if _less(h.data[c], last):
                h.data[i] = h.data[c]
                i = c
            else:
                break
        h.data[i] = last
    return top


def grid_search(elev, double scale, double eta_us, double eta_ds, double weight,
                Py_ssize_t sx, Py_ssize_t sy, Py_ssize_t gx, Py_ssize_t gy,
                double h_dist, double h_energy):
    z = np.ascontiguousarray(elev, dtype=np.float64)
    cdef Py_ssize_t height = z.shape[0]
    cdef Py_ssize_t width = z.shape[1]
    cdef Py_ssize_t n = width * height
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g_arr = np.full(n, np.inf)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] parent_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] closed_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] g = g_arr
    cdef long long[::1] parent = parent_arr
    cdef unsigned char[::1] closed = closed_arr
    cdef const double[:, ::1] zv = z
    cdef double quarter_pi = M_PI / 4.0
    cdef double c_up = eta_us / quarter_pi
    cdef double c_down = 1.0 - 2.0 * eta_ds
    cdef double zg = zv[gy, gx]
    cdef bint use_h = h_dist != 0.0 or h_energy != 0.0
    cdef Py_ssize_t start = sy * width + sx
    cdef Py_ssize_t goal = gy * width + gx
    cdef Heap heap
    cdef Entry e, top
    cdef long long counter = 1
    cdef long expanded = 0
    cdef Py_ssize_t node, x, y, nx, ny, m, k
    cdef int dx, dy
    cdef double zn, gn, dz, horiz, dist, beta, energy, cand, hx, hd, he, hdz

    heap.cap = 64
    heap.size = 0
    heap.data = <Entry*> malloc(heap.cap * sizeof(Entry))
    if heap.data == NULL:
        raise MemoryError()
    try:
        g[start] = 0.0
        e.key = _heuristic(zv, sx, sy, gx, gy, zg, scale, c_up, c_down, weight, h_dist, h_energy, use_h)
        e.order = 0
        e.node = start
        _push(&heap, e)
        with nogil:
            while heap.size > 0:
                top = _pop(&heap)
                node = top.node
                if closed[node]:
                    continue
                closed[node] = 1
                expanded += 1
                if node == goal:
                    break
                y = node // width
                x = node - y * width
                zn = zv[y, x]
                gn = g[node]
                for k in range(8):
                    dx = MDX[k]
                    dy = MDY[k]
                    nx = x + dx
                    ny = y + dy
                    if nx < 0 or ny < 0 or nx >= width or ny >= height:
                        continue
                    m = ny * width + nx
                    dz = zv[ny, nx] - zn
                    horiz = sqrt(<double>(dx * dx + dy * dy))
                    dist = sqrt(<double>(dx * dx + dy * dy) + dz * dz) * scale
                    beta = atan2(fabs(dz), horiz)
                    if dz > 0.0:
                        energy = dist * (beta / quarter_pi * eta_us)
                    else:
                        energy = dist * (1.0 - beta / quarter_pi * eta_ds)
                    cand = gn + (dist + weight * energy)
                    if cand < g[m]:
                        g[m] = cand
                        parent[m] = node
                        closed[m] = 0
                        e.key = cand + _heuristic(zv, nx, ny, gx, gy, zg, scale, c_up, c_down,
                                                  weight, h_dist, h_energy, use_h)
                        e.order = counter
                        e.node = m
                        counter += 1
                        if _push(&heap, e) != 0:
                            with gil:
                                raise MemoryError()
    finally:
        free(heap.data)

    if not closed[goal]:
        return None, expanded
    cells = []
    node = goal
    while node != -1:
        y = node // width
        cells.append((node - y * width, y))
        node = parent[node]
    cells.reverse()
    return cells, expanded


cdef inline double _heuristic(const double[:, ::1] zv, Py_ssize_t x, Py_ssize_t y,
                              Py_ssize_t gx, Py_ssize_t gy, double zg, double scale,
                              double c_up, double c_down, double weight,
                              double h_dist, double h_energy, bint use_h) nogil:
    cdef double dx, dy, dz, d, e
    if not use_h:
        return 0.0
    dx = <double>(x - gx)
    dy = <double>(y - gy)
    dz = zv[y, x] - zg
    d = sqrt(dx * dx + dy * dy + dz * dz) * scale
    if dz < 0.0:
        e = c_up * (-dz) * scale
    else:
        e = c_down * dz * scale
    return h_dist * d + h_energy * weight * e
