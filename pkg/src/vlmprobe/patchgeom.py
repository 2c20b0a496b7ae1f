"""Patch-grid geometry for the evaluated model family.

Vision encoders tile the input image into square patches consumed in
raster-scan (row-major) order; placement math, merged grids, and
boundary-cut classification all live here. Coordinates are pixels,
bboxes are (x, y, w, h) with closed-open pixel intervals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

Bbox = tuple[int, int, int, int]

VERTICAL = "vertical"
HORIZONTAL = "horizontal"


class GeometryError(ValueError):
    pass


class NonDivisibleMerge(GeometryError):
    pass


class TextLargerThanCell(GeometryError):
    pass


class NotCut(GeometryError):
    pass


@dataclass(frozen=True)
class ModelProfile:
    """Input resolution and patch geometry of one model."""

    name: str
    resolution: tuple[int, int]  # (W, H)
    patch_size: int
    merge_factor: int = 1
    ocr_enhanced: bool = False

    def __post_init__(self):
        w, h = self.resolution
        if w % self.patch_size or h % self.patch_size:
            raise GeometryError(
                f"patch size {self.patch_size} does not divide resolution {w}x{h}"
            )

    @property
    def grid(self) -> tuple[int, int]:
        """(rows, cols) of the patch grid."""
        w, h = self.resolution
        return (h // self.patch_size, w // self.patch_size)


@dataclass(frozen=True)
class CutReport:
    axis: str
    crossed_boundaries: tuple[int, ...]
    is_cut: bool
    range_ratio: float


BUILTIN_PROFILES = {
    "blip2": ModelProfile("blip2", (224, 224), 14),
    "instructblip": ModelProfile("instructblip", (224, 224), 14),
    "llava-1.5": ModelProfile("llava-1.5", (336, 336), 14),
    "qwen-vl-chat": ModelProfile("qwen-vl-chat", (448, 448), 14, ocr_enhanced=True),
    # fixed 30px patches; the grid is pinned to 10x10 via a 300x300 canvas
    "fuyu-8b": ModelProfile("fuyu-8b", (300, 300), 30),
}


def get_profile(name: str, config_path=None) -> ModelProfile:
    """Look up a profile by name; built-ins never require the config file."""
    if name in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[name]
    if config_path is not None:
        profiles = load_profiles(config_path)
        if name in profiles:
            return profiles[name]
    raise GeometryError(f"unknown model profile {name!r}")


def load_profiles(path) -> dict[str, ModelProfile]:
    """Profiles from a JSON file keyed by model name.

    Entry shape: {"resolution": [W, H], "patch_size": P,
                  "ocr_enhanced": bool (optional)}.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    out = {}
    for name, entry in raw.items():
        out[name] = ModelProfile(
            name=name,
            resolution=tuple(entry["resolution"]),
            patch_size=int(entry["patch_size"]),
            ocr_enhanced=bool(entry.get("ocr_enhanced", False)),
        )
    return out


def merged_grid(profile: ModelProfile, k: int) -> ModelProfile:
    """Amalgamate k x k adjacent patches into one (k=1 is a no-op)."""
    if k < 1:
        raise NonDivisibleMerge("merge factor must be >= 1")
    rows, cols = profile.grid
    if rows % k or cols % k:
        raise NonDivisibleMerge(f"merge {k} does not divide grid {rows}x{cols}")
    return replace(
        profile,
        patch_size=profile.patch_size * k,
        merge_factor=profile.merge_factor * k,
    )


def cell_center_anchor(
    profile: ModelProfile, row: int, col: int, text_w: int, text_h: int
) -> tuple[int, int]:
    """Top-left anchor that centers a text bbox inside grid cell (row, col).

    Half-pixel ties go toward the top-left (integer floor division).
    """
    rows, cols = profile.grid
    if not (0 <= row < rows and 0 <= col < cols):
        raise GeometryError(f"cell ({row}, {col}) outside grid {rows}x{cols}")
    p = profile.patch_size
    if text_w > p or text_h > p:
        raise TextLargerThanCell(f"text {text_w}x{text_h} larger than cell {p}x{p}")
    return (col * p + (p - text_w) // 2, row * p + (p - text_h) // 2)


def classify_cut(bbox: Bbox, profile: ModelProfile, axis: str) -> CutReport:
    """Which patch boundaries pass through the strict interior of a bbox.

    A bbox whose edge merely touches a boundary is undivided. range_ratio is
    the bbox leading edge position over its travel span along the axis.
    """
    x, y, w, h = bbox
    wres, hres = profile.resolution
    p = profile.patch_size
    if axis == VERTICAL:
        lead, extent, span = x, w, wres
    elif axis == HORIZONTAL:
        lead, extent, span = y, h, hres
    else:
        raise GeometryError(f"axis must be {VERTICAL!r} or {HORIZONTAL!r}")
    crossed = []
    b = (lead // p + 1) * p
    while b < lead + extent:
        crossed.append(b)
        b += p
    ratio = 0.0 if span == extent else lead / (span - extent)
    return CutReport(axis, tuple(crossed), bool(crossed), ratio)


def token_distance(profile: ModelProfile, bbox: Bbox, axis: str) -> int:
    """Raster-order index gap between the patches on either side of the
    first crossed boundary: 1 for vertical cuts, one grid row for horizontal.
    """
    report = classify_cut(bbox, profile, axis)
    if not report.is_cut:
        raise NotCut(f"bbox {bbox} is not cut along {axis}")
    if axis == VERTICAL:
        return 1
    return profile.grid[1]
