"""Both kernel backends must agree bit-for-bit; oracles pin the semantics."""

import numpy as np
import pytest

import oracles
from vlmprobe.kernels import _numba, _numpy, label_components

rng = np.random.default_rng(42)


def _rand_img(h, w):
    return rng.integers(0, 256, size=(h, w), dtype=np.uint8)


@pytest.mark.parametrize("dims", [(12, 12, 3, 4), (30, 20, 10, 10), (45, 33, 9, 11), (8, 8, 8, 8)])
def test_box_downsample_backends_agree(dims):
    h, w, oh, ow = dims
    img = _rand_img(h, w)
    a = _numba.box_downsample_to(img, oh, ow)
    b = _numpy.box_downsample_to(img, oh, ow)
    assert np.array_equal(a, b)


def test_box_downsample_integer_factor_matches_block_mean():
    img = _rand_img(24, 36)
    got = _numpy.box_downsample_to(img, 6, 9)
    assert np.array_equal(got, oracles.box_mean(img, 4))
    got = _numba.box_downsample_to(img, 6, 9)
    assert np.array_equal(got, oracles.box_mean(img, 4))


def test_box_weights_rows_sum_to_input_length():
    for in_len, out_len in ((14, 5), (20, 8), (7, 7), (32, 3)):
        w = _numpy.box_weights(in_len, out_len)
        assert (w.sum(axis=1) == in_len).all()


def test_nn_scale_backends_agree():
    img = _rand_img(17, 23)
    for oh, ow in ((34, 46), (17, 23), (5, 50), (51, 7)):
        assert np.array_equal(_numba.nn_scale_to(img, oh, ow), _numpy.nn_scale_to(img, oh, ow))


def test_nn_scale_integer_factor_is_replication():
    img = _rand_img(6, 5)
    assert np.array_equal(_numpy.nn_scale_to(img, 18, 15), oracles.nn_replicate(img, 3))


def test_nn_upsample_frac_backends_agree():
    img = _rand_img(9, 13)
    # factor 5.5 = 11/2
    oh, ow = round(9 * 5.5), round(13 * 5.5)
    a = _numba.nn_upsample_frac(img, 11, 2, oh, ow)
    b = _numpy.nn_upsample_frac(img, 11, 2, oh, ow)
    assert np.array_equal(a, b)
    # mapping law: src = floor(dst / factor)
    for dy in (0, 10, oh - 1):
        for dx in (0, 7, ow - 1):
            assert a[dy, dx] == img[min(dy * 2 // 11, 8), min(dx * 2 // 11, 12)]


def test_label_components_backends_agree_canonically():
    for _ in range(20):
        binary = (rng.random((40, 40)) < 0.35).astype(np.uint8)
        a = _canonical(_numba.label_components(binary))
        b = _canonical(_numpy.label_components(binary))
        assert np.array_equal(a, b)
    # the public wrapper applies the same canonicalization
    binary = (rng.random((30, 30)) < 0.4).astype(np.uint8)
    assert np.array_equal(label_components(binary), _canonical(_numpy.label_components(binary)))


def _canonical(raw):
    flat = raw.ravel()
    fg = flat > 0
    if not fg.any():
        return raw
    labels, first = np.unique(flat[fg], return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.zeros(int(labels.max()) + 1, dtype=np.int32)
    remap[labels[order]] = np.arange(1, len(labels) + 1, dtype=np.int32)
    return remap[raw]


def test_label_components_8_connectivity():
    img = np.zeros((5, 5), dtype=np.uint8)
    img[0, 0] = 1
    img[1, 1] = 1  # diagonal touch -> same component
    img[4, 4] = 1
    labels = label_components(img)
    assert labels[0, 0] == labels[1, 1] == 1
    assert labels[4, 4] == 2


def test_gpm_match_total_backends_agree():
    for _ in range(300):
        la, lb = rng.integers(0, 13, size=2)
        a = rng.integers(48, 58, size=la, dtype=np.uint32)
        b = rng.integers(48, 58, size=lb, dtype=np.uint32)
        assert _numba.gpm_match_total(a, b) == _numpy.gpm_match_total(a, b)


def test_gpm_match_total_against_recursive_oracle():
    for _ in range(300):
        la, lb = rng.integers(0, 11, size=2)
        a = "".join(chr(c) for c in rng.integers(97, 101, size=la))
        b = "".join(chr(c) for c in rng.integers(97, 101, size=lb))
        ca = np.array([ord(c) for c in a], dtype=np.uint32)
        cb = np.array([ord(c) for c in b], dtype=np.uint32)
        assert _numpy.gpm_match_total(ca, cb) == oracles.ro_match_total(a, b)
