"""numba-compiled hot kernels (resampling, labeling, string matching).

Twin of ``_numpy``: identical results, compiled inner loops. The raw
``gpm_match_total_scratch`` kernel takes caller-owned scratch buffers so
batch sweeps can avoid per-call allocation.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def box_downsample_to(img, out_h, out_w):
    in_h, in_w = img.shape
    out = np.empty((out_h, out_w), dtype=np.uint8)
    den = in_h * in_w
    for dy in range(out_h):
        ylo = dy * in_h
        yhi = ylo + in_h
        sy0 = ylo // out_h
        sy1 = (yhi - 1) // out_h
        for dx in range(out_w):
            xlo = dx * in_w
            xhi = xlo + in_w
            sx0 = xlo // out_w
            sx1 = (xhi - 1) // out_w
            num = 0
            for sy in range(sy0, sy1 + 1):
                wy = min((sy + 1) * out_h, yhi) - max(sy * out_h, ylo)
                for sx in range(sx0, sx1 + 1):
                    wx = min((sx + 1) * out_w, xhi) - max(sx * out_w, xlo)
                    num += wy * wx * img[sy, sx]
            out[dy, dx] = (2 * num + den) // (2 * den)
    return out


@njit(cache=True, nogil=True)
def nn_scale_to(img, out_h, out_w):
    in_h, in_w = img.shape
    out = np.empty((out_h, out_w), dtype=img.dtype)
    for dy in range(out_h):
        sy = (dy * in_h) // out_h
        for dx in range(out_w):
            out[dy, dx] = img[sy, (dx * in_w) // out_w]
    return out


@njit(cache=True, nogil=True)
def nn_upsample_frac(img, num, den, out_h, out_w):
    in_h, in_w = img.shape
    out = np.empty((out_h, out_w), dtype=img.dtype)
    for dy in range(out_h):
        sy = (dy * den) // num
        if sy > in_h - 1:
            sy = in_h - 1
        for dx in range(out_w):
            sx = (dx * den) // num
            if sx > in_w - 1:
                sx = in_w - 1
            out[dy, dx] = img[sy, sx]
    return out


@njit(cache=True, nogil=True)
def label_components(binary):
    """8-connected two-pass union-find labeling, 0 = background."""
    h, w = binary.shape
    labels = np.zeros((h, w), dtype=np.int32)
    parent = np.zeros(h * w // 2 + 2, dtype=np.int32)
    nxt = 1
    for y in range(h):
        for x in range(w):
            if binary[y, x] == 0:
                continue
            # already-visited neighbors: W, NW, N, NE
            best = 0
            for dy, dx in ((0, -1), (-1, -1), (-1, 0), (-1, 1)):
                ny = y + dy
                nx_ = x + dx
                if 0 <= ny < h and 0 <= nx_ < w:
                    lab = labels[ny, nx_]
                    if lab > 0:
                        # find root
                        r = lab
                        while parent[r] != r:
                            r = parent[r]
                        if best == 0 or r < best:
                            if best != 0:
                                parent[best] = r
                            best = r
                        elif r != best:
                            parent[r] = best
            if best == 0:
                parent[nxt] = nxt
                labels[y, x] = nxt
                nxt += 1
            else:
                labels[y, x] = best
    # resolve roots
    for i in range(1, nxt):
        r = i
        while parent[r] != r:
            r = parent[r]
        parent[i] = r
    for y in range(h):
        for x in range(w):
            lab = labels[y, x]
            if lab > 0:
                labels[y, x] = parent[lab]
    return labels


@njit(cache=True, nogil=True)
def gpm_match_total_scratch(a, la, b, lb, stack, j2len):
    """Ratcliff-Obershelp total matched chars; iterative splitting.

    Tie-breaks on the longest common substring follow ascending scan order:
    earliest start in `a`, then earliest start in `b` (strict `>` update).
    `stack` needs 4*(la+lb+1) int64 slots, `j2len` needs lb int64 slots.
    """
    if la == 0 or lb == 0:
        return 0
    stack[0] = 0
    stack[1] = la
    stack[2] = 0
    stack[3] = lb
    top = 4
    total = 0
    while top > 0:
        top -= 4
        alo = stack[top]
        ahi = stack[top + 1]
        blo = stack[top + 2]
        bhi = stack[top + 3]
        besti = alo
        bestj = blo
        bestk = 0
        ai = a[alo]
        for j in range(blo, bhi):
            eq = 1 if b[j] == ai else 0
            j2len[j] = eq
            if eq > bestk:
                bestk = 1
                besti = alo
                bestj = j
        for i in range(alo + 1, ahi):
            ai = a[i]
            carry = 0
            for j in range(blo, bhi):
                old = j2len[j]
                k = (carry + 1) if b[j] == ai else 0
                j2len[j] = k
                carry = old
                if k > bestk:
                    besti = i - k + 1
                    bestj = j - k + 1
                    bestk = k
        if bestk > 0:
            total += bestk
            if alo < besti and blo < bestj:
                stack[top] = alo
                stack[top + 1] = besti
                stack[top + 2] = blo
                stack[top + 3] = bestj
                top += 4
            if besti + bestk < ahi and bestj + bestk < bhi:
                stack[top] = besti + bestk
                stack[top + 1] = ahi
                stack[top + 2] = bestj + bestk
                stack[top + 3] = bhi
                top += 4
    return total


def gpm_match_total(a: np.ndarray, b: np.ndarray) -> int:
    la, lb = len(a), len(b)
    stack = np.empty(4 * (la + lb + 1), dtype=np.int64)
    j2len = np.zeros(max(lb, 1), dtype=np.int64)
    return int(gpm_match_total_scratch(a, la, b, lb, stack, j2len))
