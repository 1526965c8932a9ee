"""Pure-Python numeric kernels.

Fallback twin of the compiled extension `linelab._ckernels`. Both backends
operate on flat row-major `array('d')` buffers and must accumulate in the
same index order so results are bit-identical between them.
"""

import math
from array import array

NAME = "pure"

# Largest double below 1.0; sigmoid output is clamped to the open interval
# (0, 1) so downstream code can rely on strict bounds even at saturation.
_ONE_MINUS = 1.0 - 1.1102230246251565e-16
_TINY = 5e-324


def zeros(n):
    return array("d", bytes(8 * n))


def matmul(a, ar, ac, b, bc, out):
    """(ar x ac) @ (ac x bc) -> out, accumulated over k in index order."""
    for i in range(ar):
        ia = i * ac
        io = i * bc
        for k in range(ac):
            aik = a[ia + k]
            kb = k * bc
            for j in range(bc):
                out[io + j] += aik * b[kb + j]


def matmul_tn(a, ar, ac, b, bc, out):
    """transpose(a) @ b where a is (ar x ac), b is (ar x bc) -> (ac x bc)."""
    for k in range(ar):
        ka = k * ac
        kb = k * bc
        for i in range(ac):
            aki = a[ka + i]
            io = i * bc
            for j in range(bc):
                out[io + j] += aki * b[kb + j]


def matmul_nt(a, ar, ac, b, br, out):
    """a @ transpose(b) where a is (ar x ac), b is (br x ac) -> (ar x br)."""
    for i in range(ar):
        ia = i * ac
        io = i * br
        for j in range(br):
            jb = j * ac
            s = 0.0
            for k in range(ac):
                s += a[ia + k] * b[jb + k]
            out[io + j] = s


def add(a, b, out, n):
    for i in range(n):
        out[i] = a[i] + b[i]


def sub(a, b, out, n):
    for i in range(n):
        out[i] = a[i] - b[i]


def hadamard(a, b, out, n):
    for i in range(n):
        out[i] = a[i] * b[i]


def scale(a, s, out, n):
    for i in range(n):
        out[i] = a[i] * s


def add_row(m, rows, cols, v, out):
    """Add the row vector v (length cols) to every row of m."""
    for i in range(rows):
        base = i * cols
        for j in range(cols):
            out[base + j] = m[base + j] + v[j]


def transpose(a, r, c, out):
    for i in range(r):
        base = i * c
        for j in range(c):
            out[j * r + i] = a[base + j]


def col_sum(m, rows, cols, out):
    for i in range(rows):
        base = i * cols
        for j in range(cols):
            out[j] += m[base + j]


def row_sum(m, rows, cols, out):
    for i in range(rows):
        base = i * cols
        s = 0.0
        for j in range(cols):
            s += m[base + j]
        out[i] = s


def relu_vec(a, out, n):
    for i in range(n):
        x = a[i]
        out[i] = x if x > 0.0 else 0.0


def relu_grad_vec(a, out, n):
    for i in range(n):
        out[i] = 1.0 if a[i] > 0.0 else 0.0


def sigmoid_vec(a, out, n):
    for i in range(n):
        x = a[i]
        if x >= 0.0:
            s = 1.0 / (1.0 + math.exp(-x))
        else:
            t = math.exp(x)
            s = t / (1.0 + t)
        if s >= 1.0:
            s = _ONE_MINUS
        elif s <= 0.0:
            s = _TINY
        out[i] = s


def sigmoid_grad_vec(act, out, n):
    for i in range(n):
        s = act[i]
        out[i] = s * (1.0 - s)


def heaviside_vec(a, out, n):
    for i in range(n):
        out[i] = 1.0 if a[i] >= 0.0 else 0.0


def sq_diff_sum(a, b, n):
    s = 0.0
    for i in range(n):
        d = a[i] - b[i]
        s += d * d
    return s


def sgd_update(p, v, g, lr, mom, out_p, out_v, n):
    """Classic momentum step; returns the count of non-finite gradient entries."""
    bad = 0
    for i in range(n):
        gi = g[i]
        if not math.isfinite(gi):
            bad += 1
        vi = mom * v[i] + gi
        out_v[i] = vi
        out_p[i] = p[i] - lr * vi
    return bad
