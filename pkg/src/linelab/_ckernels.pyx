# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels.

Hot-loop twin of `linelab._pykernels`; same functions, same accumulation
order, operating on flat row-major `array('d')` buffers. Built with
-ffp-contract=off so results stay bit-identical to the pure backend.
"""

from cpython cimport array
from libc.math cimport exp, isfinite

import array as _array

NAME = "compiled"

cdef double _ONE_MINUS = 1.0 - 1.1102230246251565e-16
cdef double _TINY = 5e-324

cdef array.array _DOUBLE_TEMPLATE = _array.array("d", [])


def zeros(Py_ssize_t n):
    return array.clone(_DOUBLE_TEMPLATE, n, zero=True)


def matmul(array.array a, Py_ssize_t ar, Py_ssize_t ac, array.array b, Py_ssize_t bc, array.array out):
    cdef double* pa = a.data.as_doubles
    cdef double* pb = b.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i, j, k, ia, io, kb
    cdef double aik
    for i in range(ar):
        ia = i * ac
        io = i * bc
        for k in range(ac):
            aik = pa[ia + k]
            kb = k * bc
            for j in range(bc):
                po[io + j] += aik * pb[kb + j]


def matmul_tn(array.array a, Py_ssize_t ar, Py_ssize_t ac, array.array b, Py_ssize_t bc, array.array out):
    cdef double* pa = a.data.as_doubles
    cdef double* pb = b.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i, j, k, ka, kb, io
    cdef double aki
    for k in range(ar):
        ka = k * ac
        kb = k * bc
        for i in range(ac):
            aki = pa[ka + i]
            io = i * bc
            for j in range(bc):
                po[io + j] += aki * pb[kb + j]


def matmul_nt(array.array a, Py_ssize_t ar, Py_ssize_t ac, array.array b, Py_ssize_t br, array.array out):
    cdef double* pa = a.data.as_doubles
    cdef double* pb = b.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i, j, k, ia, io, jb
    cdef double s
    for i in range(ar):
        ia = i * ac
        io = i * br
        for j in range(br):
            jb = j * ac
            s = 0.0
            for k in range(ac):
                s += pa[ia + k] * pb[jb + k]
            po[io + j] = s


def add(array.array a, array.array b, array.array out, Py_ssize_t n):
    cdef double* pa = a.data.as_doubles
    cdef double* pb = b.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i
    for i in range(n):
        po[i] = pa[i] + pb[i]


def sub(array.array a, array.array b, array.array out, Py_ssize_t n):
    cdef double* pa = a.data.as_doubles
    cdef double* pb = b.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i
    for i in range(n):
        po[i] = pa[i] - pb[i]


def hadamard(array.array a, array.array b, array.array out, Py_ssize_t n):
    cdef double* pa = a.data.as_doubles
    cdef double* pb = b.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i
    for i in range(n):
        po[i] = pa[i] * pb[i]


def scale(array.array a, double s, array.array out, Py_ssize_t n):
    cdef double* pa = a.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i
    for i in range(n):
        po[i] = pa[i] * s


def add_row(array.array m, Py_ssize_t rows, Py_ssize_t cols, array.array v, array.array out):
    cdef double* pm = m.data.as_doubles
    cdef double* pv = v.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i, j, base
    for i in range(rows):
        base = i * cols
        for j in range(cols):
            po[base + j] = pm[base + j] + pv[j]


def transpose(array.array a, Py_ssize_t r, Py_ssize_t c, array.array out):
    cdef double* pa = a.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i, j, base
    for i in range(r):
        base = i * c
        for j in range(c):
            po[j * r + i] = pa[base + j]


def col_sum(array.array m, Py_ssize_t rows, Py_ssize_t cols, array.array out):
    cdef double* pm = m.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i, j, base
    for i in range(rows):
        base = i * cols
        for j in range(cols):
            po[j] += pm[base + j]


def row_sum(array.array m, Py_ssize_t rows, Py_ssize_t cols, array.array out):
    cdef double* pm = m.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i, j, base
    cdef double s
    for i in range(rows):
        base = i * cols
        s = 0.0
        for j in range(cols):
            s += pm[base + j]
        po[i] = s


def relu_vec(array.array a, array.array out, Py_ssize_t n):
    cdef double* pa = a.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i
    cdef double x
    for i in range(n):
        x = pa[i]
        po[i] = x if x > 0.0 else 0.0


def relu_grad_vec(array.array a, array.array out, Py_ssize_t n):
    cdef double* pa = a.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i
    for i in range(n):
        po[i] = 1.0 if pa[i] > 0.0 else 0.0


def sigmoid_vec(array.array a, array.array out, Py_ssize_t n):
    cdef double* pa = a.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i
    cdef double x, s, t
    for i in range(n):
        x = pa[i]
        if x >= 0.0:
            s = 1.0 / (1.0 + exp(-x))
        else:
            t = exp(x)
            s = t / (1.0 + t)
        if s >= 1.0:
            s = _ONE_MINUS
        elif s <= 0.0:
            s = _TINY
        po[i] = s


def sigmoid_grad_vec(array.array act, array.array out, Py_ssize_t n):
    cdef double* pa = act.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i
    cdef double s
    for i in range(n):
        s = pa[i]
        po[i] = s * (1.0 - s)


def heaviside_vec(array.array a, array.array out, Py_ssize_t n):
    cdef double* pa = a.data.as_doubles
    cdef double* po = out.data.as_doubles
    cdef Py_ssize_t i
    for i in range(n):
        po[i] = 1.0 if pa[i] >= 0.0 else 0.0


def sq_diff_sum(array.array a, array.array b, Py_ssize_t n):
    cdef double* pa = a.data.as_doubles
    cdef double* pb = b.data.as_doubles
    cdef Py_ssize_t i
    cdef double s = 0.0
    cdef double d
    for i in range(n):
        d = pa[i] - pb[i]
        s += d * d
    return s


def sgd_update(array.array p, array.array v, array.array g, double lr, double mom,
               array.array out_p, array.array out_v, Py_ssize_t n):
    cdef double* pp = p.data.as_doubles
    cdef double* pv = v.data.as_doubles
    cdef double* pg = g.data.as_doubles
    cdef double* pop = out_p.data.as_doubles
    cdef double* pov = out_v.data.as_doubles
    cdef Py_ssize_t i
    cdef int bad = 0
    cdef double gi, vi
    for i in range(n):
        gi = pg[i]
        if not isfinite(gi):
            bad += 1
        vi = mom * pv[i] + gi
        pov[i] = vi
        pop[i] = pp[i] - lr * vi
    return bad
