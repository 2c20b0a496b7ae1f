"""Canvas raster operations: glyph rendering and the two resampling moves.

A canvas ("gray image") is a (h, w) uint8 numpy array, 255 = white
background, 0 = black ink. All operations return new arrays except
:func:`render_text`, which composites onto the caller's canvas in place (the
cv2.putText idiom) and returns the layout bbox.

The two stimulus interventions are:

* quality: box-average downsample then nearest-neighbor upsample back to the
  original size ("downsample-upsample"), which lowers the sampling rate of
  the content while keeping size and position;
* size: crop a region and nearest-neighbor upsample it ("crop-upsample"),
  which enlarges the object while keeping its sampling rate.

Box filtering and nearest-neighbor mapping are exact integer arithmetic;
fractional pixel values round half away from zero.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from . import kernels
from .glyphs import GLYPHS, letter_spacing, round_half_away, scaled_advance, scaled_mask, text_width

Bbox = tuple[int, int, int, int]  # (x, y, w, h)


class RasterError(ValueError):
    pass


class OutOfBounds(RasterError):
    pass


class UnknownGlyph(RasterError):
    pass


class NonDivisibleFactor(RasterError):
    pass


class RectOutOfBounds(RasterError):
    pass


def new_canvas(width: int, height: int) -> np.ndarray:
    if width < 1 or height < 1:
        raise RasterError("canvas dims must be >= 1")
    return np.full((height, width), 255, dtype=np.uint8)


def render_text(canvas: np.ndarray, text: str, sampling_rate: int, anchor: tuple[int, int]) -> Bbox:
    """Composite `text` as black glyphs onto `canvas`, top-left at `anchor`.

    Glyph masks are nearest-neighbor scaled from the 32-unit reference grid
    to `sampling_rate` rows. Returns the layout bbox (x, y, w, h) with
    h == sampling_rate; w is the sum of scaled advances plus spacing.
    """
    x, y = anchor
    if text == "":
        return (x, y, 0, 0)
    for ch in text:
        if ch not in GLYPHS:
            raise UnknownGlyph(f"no glyph for {ch!r}")
    if sampling_rate < 1:
        raise RasterError("sampling_rate must be >= 1")
    w = text_width(text, sampling_rate)
    h = sampling_rate
    ch_h, ch_w = canvas.shape
    if x < 0 or y < 0 or x + w > ch_w or y + h > ch_h:
        raise OutOfBounds(f"text bbox {(x, y, w, h)} exceeds canvas {ch_w}x{ch_h}")
    sp = letter_spacing(sampling_rate)
    pen = x
    for ch in text:
        mask = scaled_mask(ch, sampling_rate)
        mh, mw = mask.shape
        region = canvas[y : y + mh, pen : pen + mw]
        region[mask > 0] = 0
        pen += scaled_advance(ch, sampling_rate) + sp
    return (x, y, w, h)


def text_extent(text: str, sampling_rate: int) -> tuple[int, int]:
    """(w, h) the layout bbox of `text` would have, without rendering."""
    if text == "":
        return (0, 0)
    return (text_width(text, sampling_rate), sampling_rate)


def downsample(img: np.ndarray, factor: int) -> np.ndarray:
    """Box-average downsample by an integer factor dividing both dims."""
    if factor < 1 or int(factor) != factor:
        raise NonDivisibleFactor(f"factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    h, w = img.shape
    if h % factor or w % factor:
        raise NonDivisibleFactor(f"factor {factor} does not divide {w}x{h}")
    return kernels.box_downsample_to(img, h // factor, w // factor)


def upsample(img: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbor replication by an integer factor."""
    if factor < 1 or int(factor) != factor:
        raise RasterError(f"factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    h, w = img.shape
    return kernels.nn_scale_to(img, h * factor, w * factor)


def downsample_upsample(img: np.ndarray, factor: int) -> np.ndarray:
    """Quality intervention: same dims back, sampling rate divided by factor."""
    return upsample(downsample(img, factor), factor)


def crop_upsample(img: np.ndarray, rect: Bbox, factor) -> np.ndarray:
    """Size intervention: crop `rect` then nearest-neighbor upsample.

    `factor` can be fractional (e.g. 5.5); output dims are
    round(rect.w * factor) x round(rect.h * factor) and the index mapping is
    src = floor(dst / factor).
    """
    x, y, w, h = rect
    ih, iw = img.shape
    if x < 0 or y < 0 or w < 1 or h < 1 or x + w > iw or y + h > ih:
        raise RectOutOfBounds(f"rect {rect} outside image {iw}x{ih}")
    f = Fraction(factor)
    if f <= 0:
        raise RasterError("factor must be positive")
    out_w = round_half_away(w * f.numerator, f.denominator)
    out_h = round_half_away(h * f.numerator, f.denominator)
    crop = np.ascontiguousarray(img[y : y + h, x : x + w])
    return kernels.nn_upsample_frac(crop, f.numerator, f.denominator, out_h, out_w)


def reduce_sampling_rate(img: np.ndarray, bbox: Bbox, base_rate: int, target_rate: int) -> np.ndarray:
    """Downsample-upsample a tile around `bbox` so its content has
    `target_rate` instead of `base_rate`, leaving size and position intact.

    The tile starts at the bbox origin and spans whole multiples of
    `base_rate`, so the rational ratio target/base always yields integer
    downsampled dims and the white surround is unaffected. Returns a new
    canvas.
    """
    if not (1 <= target_rate <= base_rate):
        raise RasterError("need 1 <= target_rate <= base_rate")
    x, y, w, h = bbox
    if h != base_rate:
        raise RasterError("bbox height must equal base_rate")
    out = img.copy()
    if target_rate == base_rate or w == 0:
        return out
    ih, iw = img.shape
    tw = ((w + base_rate - 1) // base_rate) * base_rate
    tx = x
    if tx + tw > iw:
        tx = iw - tw
    if tx < 0:
        raise OutOfBounds("canvas too small for degradation tile")
    tile = np.ascontiguousarray(img[y : y + base_rate, tx : tx + tw])
    down = kernels.box_downsample_to(tile, target_rate, tw * target_rate // base_rate)
    up = kernels.nn_scale_to(down, base_rate, tw)
    out[y : y + base_rate, tx : tx + tw] = up
    return out


def center_fit(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Center-crop (or white-pad) an image to exactly (width, height)."""
    h, w = img.shape
    out = np.full((height, width), 255, dtype=np.uint8)
    sx = max(0, (w - width) // 2)
    sy = max(0, (h - height) // 2)
    dx = max(0, (width - w) // 2)
    dy = max(0, (height - h) // 2)
    cw = min(w, width)
    ch = min(h, height)
    out[dy : dy + ch, dx : dx + cw] = img[sy : sy + ch, sx : sx + cw]
    return out


def dark_pixel_count(img: np.ndarray) -> int:
    """Number of pixels below the ink threshold (value < 128)."""
    return int(np.count_nonzero(img < 128))
