# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled coordinate-descent NNLS sweeps.

Same algorithm, sweep order and stopping rule as ``_pykernels.nnls_sweeps``.
"""
from libc.math cimport fabs


def nnls_sweeps(const double[:, ::1] gram, const double[:, ::1] cross,
                double[:, ::1] x, int max_sweeps, double stag_tol,
                object on_sweep=None):
    """Run cyclic coordinate sweeps on ``x`` in place; return the sweep count."""
    cdef Py_ssize_t q = x.shape[0]
    cdef Py_ssize_t r = x.shape[1]
    cdef Py_ssize_t i, j, l
    cdef int sweep
    cdef double gjj, s, new, change, max_change, max_abs
    for sweep in range(max_sweeps):
        max_change = 0.0
        with nogil:
            for j in range(r):
                gjj = gram[j, j]
                for i in range(q):
                    if gjj <= 0.0:
                        new = 0.0
                    else:
                        s = cross[i, j]
                        for l in range(r):
                            if l != j:
                                s = s - x[i, l] * gram[l, j]
                        new = s / gjj
                        if new < 0.0:
                            new = 0.0
                    change = fabs(new - x[i, j])
                    if change > max_change:
                        max_change = change
                    x[i, j] = new
            max_abs = 0.0
            for i in range(q):
                for j in range(r):
                    if x[i, j] > max_abs:
                        max_abs = x[i, j]
        if on_sweep is not None:
            on_sweep()
        if max_change < stag_tol * (1.0 + max_abs):
            return sweep + 1
    return max_sweeps
