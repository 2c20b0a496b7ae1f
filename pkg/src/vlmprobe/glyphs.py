"""Embedded bitmap glyphs for the probe stimuli.

Characters '0'-'9', 'a'-'j' and '=' are defined as segment-built monochrome
masks on a 32-row reference grid, with per-glyph advance widths. Shapes are
deliberately bold (6-unit strokes) so that box-filter degradation keeps them
machine-readable down to an 8-pixel glyph height, and every glyph except '='
is a single 8-connected component. Rendering from this table is bit-exact on
any platform, which a system font could not guarantee.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import kernels

H_REF = 32  # reference glyph height in grid units

# Segment rectangles on a 16-wide, 32-tall grid: (row0, row1, col0, col1),
# exclusive ends. The 6-unit center gap (cols 5..11), 6-row bars and 5-unit
# side strokes keep every segment visible under nearest-neighbor scaling
# down to 8 rows and under box-filter degradation at that rate.
_SEG = {
    "A": (0, 6, 0, 16),     # top bar
    "G": (13, 19, 0, 16),   # middle bar
    "D": (26, 32, 0, 16),   # bottom bar
    "F": (0, 16, 0, 5),     # upper left
    "B": (0, 16, 11, 16),   # upper right
    "E": (16, 32, 0, 5),    # lower left
    "C": (16, 32, 11, 16),  # lower right
}

_DIGIT_SEGS = {
    "0": "ABCDEF",
    "2": "ABGED",
    "3": "ABGCD",
    "4": "FGBC",
    "5": "AFGCD",
    "6": "AFGECD",
    "7": "ABC",
    "8": "ABCDEFG",
    "9": "ABCDFG",
}

_LETTER_SEGS = {
    "a": "AFEBCG",
    "b": "FEGCD",
    "c": "AFED",
    "d": "BCGED",
    "e": "AFEGD",
    "f": "AFEG",
    "h": "FEBCG",
    "j": "BCDE",
}


def _from_segments(segs: str, extra=()) -> np.ndarray:
    mask = np.zeros((H_REF, 16), dtype=np.uint8)
    for name in segs:
        r0, r1, c0, c1 = _SEG[name]
        mask[r0:r1, c0:c1] = 1
    for r0, r1, c0, c1 in extra:
        mask[r0:r1, c0:c1] = 1
    return mask


def _build_glyphs() -> dict[str, tuple[np.ndarray, int]]:
    glyphs: dict[str, tuple[np.ndarray, int]] = {}
    for ch, segs in _DIGIT_SEGS.items():
        glyphs[ch] = (_from_segments(segs), 17)
    for ch, segs in _LETTER_SEGS.items():
        glyphs[ch] = (_from_segments(segs), 17)
    # '1': plain full-height bar, narrower advance
    one = np.ones((H_REF, 6), dtype=np.uint8)
    glyphs["1"] = (one, 8)
    # 'g': block G, a 'c' with the lower-right stub
    glyphs["g"] = (_from_segments("AFEDC"), 17)
    # 'i': serif bar, distinct from '1' by the full-width serifs
    glyphs["i"] = (_from_segments("AD", extra=[(0, 32, 5, 11)]), 17)
    # '=': two bars; the only multi-component glyph
    glyphs["="] = (_from_segments("", extra=[(8, 16, 0, 16), (20, 28, 0, 16)]), 17)
    return glyphs


GLYPHS = _build_glyphs()


def round_half_away(num: int, den: int) -> int:
    """round(num/den) with halves away from zero, for non-negative num/den."""
    return (2 * num + den) // (2 * den)


def letter_spacing(rate: int) -> int:
    """Inter-glyph spacing in pixels at a given sampling rate."""
    return max(1, round_half_away(rate, 10))


def scaled_advance(ch: str, rate: int) -> int:
    _, adv = GLYPHS[ch]
    return max(1, round_half_away(adv * rate, H_REF))


@lru_cache(maxsize=4096)
def scaled_mask(ch: str, rate: int) -> np.ndarray:
    """Glyph ink mask nearest-neighbor scaled from H_REF to `rate` rows."""
    mask, _ = GLYPHS[ch]
    w = max(1, round_half_away(mask.shape[1] * rate, H_REF))
    out = kernels.nn_scale_to(mask, rate, w)
    out.setflags(write=False)
    return out


def text_width(text: str, rate: int) -> int:
    """Layout width: sum of scaled advances plus inter-glyph spacing."""
    if not text:
        return 0
    sp = letter_spacing(rate)
    return sum(scaled_advance(ch, rate) for ch in text) + sp * (len(text) - 1)
