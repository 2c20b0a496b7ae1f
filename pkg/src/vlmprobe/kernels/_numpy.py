"""Pure numpy/scipy kernel implementations.

Fallback path for environments without numba (or with VLMPROBE_KERNELS=numpy).
Every function here must produce bit-identical output to its twin in
``_numba``; the resampling arithmetic is exact integer math throughout.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

_EIGHT_CONN = np.ones((3, 3), dtype=np.uint8)


def box_weights(in_len: int, out_len: int) -> np.ndarray:
    """Integer overlap weights between output cells and input cells.

    Boundaries are laid out on a common grid of unit 1/out_len: output cell d
    covers [d*in_len, (d+1)*in_len), input cell s covers [s*out_len,
    (s+1)*out_len). Each row sums to in_len.
    """
    w = np.zeros((out_len, in_len), dtype=np.int64)
    for d in range(out_len):
        lo = d * in_len
        hi = (d + 1) * in_len
        s0 = lo // out_len
        s1 = (hi - 1) // out_len
        for s in range(s0, s1 + 1):
            w[d, s] = min((s + 1) * out_len, hi) - max(s * out_len, lo)
    return w


def box_downsample_to(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w = img.shape
    wy = box_weights(in_h, out_h)
    wx = box_weights(in_w, out_w)
    num = wy @ img.astype(np.int64) @ wx.T
    den = in_h * in_w
    # round half away from zero; all values non-negative
    return ((2 * num + den) // (2 * den)).astype(np.uint8)


def nn_scale_to(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w = img.shape
    rows = (np.arange(out_h, dtype=np.int64) * in_h) // out_h
    cols = (np.arange(out_w, dtype=np.int64) * in_w) // out_w
    return img[rows][:, cols]


def nn_upsample_frac(img: np.ndarray, num: int, den: int, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor upsample by rational factor num/den: src = dst*den//num."""
    in_h, in_w = img.shape
    rows = np.minimum((np.arange(out_h, dtype=np.int64) * den) // num, in_h - 1)
    cols = np.minimum((np.arange(out_w, dtype=np.int64) * den) // num, in_w - 1)
    return img[rows][:, cols]


def label_components(binary: np.ndarray) -> np.ndarray:
    """8-connected component labels, 0 = background (arbitrary label order)."""
    labels, _ = ndimage.label(binary, structure=_EIGHT_CONN)
    return labels.astype(np.int32)


def gpm_match_total(a: np.ndarray, b: np.ndarray) -> int:
    """Total matched characters of Ratcliff-Obershelp on two code arrays.

    Iterative version of the recursive definition: take the longest common
    substring (ties resolved to the earliest start in `a`, then in `b`),
    then process the left-of-match and right-of-match remainders.
    """
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        return 0
    total = 0
    stack = [(0, la, 0, lb)]
    while stack:
        alo, ahi, blo, bhi = stack.pop()
        j2len = [0] * (bhi - blo)
        besti, bestj, bestk = alo, blo, 0
        for i in range(alo, ahi):
            ai = a[i]
            carry = 0
            for idx, j in enumerate(range(blo, bhi)):
                old = j2len[idx]
                if b[j] == ai:
                    k = carry + 1
                    j2len[idx] = k
                    if k > bestk:
                        besti, bestj, bestk = i - k + 1, j - k + 1, k
                else:
                    j2len[idx] = 0
                carry = old
        if bestk:
            total += bestk
            if alo < besti and blo < bestj:
                stack.append((alo, besti, blo, bestj))
            if besti + bestk < ahi and bestj + bestk < bhi:
                stack.append((besti + bestk, ahi, bestj + bestk, bhi))
    return total
