"""Probe suite construction: five controlled stimulus families.

Each builder produces plain :class:`TrialRecord` values (no rasterization),
so protocol arithmetic can be checked cheaply; :func:`render_trial` turns a
record into its canvas deterministically, and :func:`generate` materializes
PNGs plus a JSONL manifest sorted by trial id.

Seeding: every random draw comes from a counter-based Philox stream keyed by
a blake2b hash of (master seed, suite id, purpose, cell coordinates), so
adding cells or reordering builds never perturbs other cells' data, and the
byte stream is identical on every platform. Numbers are shared across the
swept parameter within a suite (the same 500 numbers appear at every
sampling rate, etc.) to keep comparisons paired.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import pngio, rastercore
from .patchgeom import ModelProfile, cell_center_anchor, classify_cut, get_profile, merged_grid
from .rastercore import Bbox, center_fit, crop_upsample, new_canvas, reduce_sampling_rate, render_text, text_extent

PROMPT_READ = "What is the number on the image?"
PROMPT_VARIABLE = "What is the number assigned to variable 'a' in the image?"

SUITE_KINDS = ("quality", "size", "distractor", "location", "boundary_cut")

_DISTRACTOR_LABELS = "bcdefghij"


class ForgeError(ValueError):
    pass


class PlacementFailure(ForgeError):
    """Rejection sampling could not place a distractor (over-dense layout)."""


class TextLargerThanCrop(ForgeError):
    pass


class SpecValidationError(ForgeError):
    pass


def derive_key(*parts) -> int:
    """Stable 64-bit key from heterogeneous seed parts."""
    blob = "|".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "big")


class SeedStream:
    """Unbiased integer draws from a Philox counter stream.

    Only the raw 64-bit output of the bit generator is consumed, with
    explicit rejection sampling on top, so results do not depend on numpy's
    higher-level distribution code.
    """

    def __init__(self, *parts):
        self._bg = np.random.Philox(key=derive_key(*parts))
        self._buf: list[int] = []

    def _raw(self) -> int:
        if not self._buf:
            self._buf = [int(v) for v in self._bg.random_raw(64)][::-1]
        return self._buf.pop()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi)."""
        m = hi - lo
        if m <= 0:
            raise ValueError("empty range")
        lim = (2**64 // m) * m
        while True:
            u = self._raw()
            if u < lim:
                return lo + u % m

    def sample(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), order-sensitive (partial shuffle)."""
        idx = list(range(n))
        for i in range(k):
            j = self.randint(i, n)
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k]


def draw_number(seed: int, n_digits: int) -> str:
    """Uniform n-digit number (no leading zero) from a keyed Philox stream."""
    if n_digits < 1:
        raise ValueError("n_digits must be >= 1")
    stream = SeedStream(seed)
    lo = 10 ** (n_digits - 1)
    return str(stream.randint(lo, 10 * lo))


@dataclass(frozen=True)
class Placement:
    label: str | None
    text: str
    bbox: Bbox


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    suite: str
    ground_truth: str
    params: dict
    placements: tuple[Placement, ...]
    prompt: str

    @property
    def image_ref(self) -> str:
        return f"images/{self.suite}/{self.trial_id}.png"

    def to_json(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "suite": self.suite,
            "params": self.params,
            "ground_truth": self.ground_truth,
            "prompt": self.prompt,
            "placements": [
                {"label": p.label, "text": p.text, "bbox": list(p.bbox)} for p in self.placements
            ],
            "image": self.image_ref,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrialRecord":
        return cls(
            trial_id=obj["trial_id"],
            suite=obj["suite"],
            ground_truth=obj["ground_truth"],
            params=obj["params"],
            placements=tuple(
                Placement(p["label"], p["text"], tuple(p["bbox"])) for p in obj["placements"]
            ),
            prompt=obj["prompt"],
        )


@dataclass
class SuiteSpec:
    """Declarative description of one probe suite."""

    kind: str
    profile: ModelProfile
    master_seed: int
    suite_id: str = ""
    # quality
    rates: tuple[int, ...] = (2, 4, 6, 8, 10, 12, 14, 16, 18, 20)
    base_rate: int = 20
    # size
    scales: tuple[float, ...] = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5)
    base_font: int = 8
    # quality + size
    digit_tiers: tuple[int, ...] = (3, 5, 7)
    trials_per_cell: int = 500
    # distractor
    counts: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    fonts: tuple[int, ...] = (8, 12)
    n_numbers: int = 100
    reps: int = 5
    n_digits: int | None = None
    # location
    location_distractors: int | None = None
    # boundary_cut
    axes: tuple[str, ...] = ("vertical", "horizontal")
    step: int = 1

    def __post_init__(self):
        if self.kind not in SUITE_KINDS:
            raise SpecValidationError(f"unknown suite kind {self.kind!r}")
        if not self.suite_id:
            self.suite_id = self.kind


def _trial_id(suite_id: str, *cell) -> str:
    blob = "|".join(str(c) for c in cell)
    return hashlib.blake2b(f"{suite_id}|{blob}".encode(), digest_size=8).hexdigest()


def _centered_anchor(canvas_wh: tuple[int, int], text_wh: tuple[int, int]) -> tuple[int, int]:
    return ((canvas_wh[0] - text_wh[0]) // 2, (canvas_wh[1] - text_wh[1]) // 2)


def build_quality_suite(spec: SuiteSpec) -> list[TrialRecord]:
    """Sampling-rate sweep: render at base_rate, degrade to each target rate."""
    w, h = spec.profile.resolution
    records = []
    for rate in spec.rates:
        if not 1 <= rate <= spec.base_rate:
            raise SpecValidationError(f"rate {rate} outside [1, base_rate={spec.base_rate}]")
        for tier in spec.digit_tiers:
            for idx in range(spec.trials_per_cell):
                number = draw_number(derive_key(spec.master_seed, spec.suite_id, "num", tier, idx), tier)
                tw, th = text_extent(number, spec.base_rate)
                anchor = _centered_anchor((w, h), (tw, th))
                records.append(
                    TrialRecord(
                        trial_id=_trial_id(spec.suite_id, rate, tier, idx),
                        suite=spec.suite_id,
                        ground_truth=number,
                        params={
                            "kind": "quality",
                            "canvas": [w, h],
                            "sampling_rate": rate,
                            "base_rate": spec.base_rate,
                            "digits": tier,
                        },
                        placements=(Placement(None, number, (*anchor, tw, th)),),
                        prompt=PROMPT_READ,
                    )
                )
    return records


def build_size_suite(spec: SuiteSpec) -> list[TrialRecord]:
    """Size sweep: fixed-rate base render, crop-upsample by each scale."""
    w, h = spec.profile.resolution
    records = []
    for scale in spec.scales:
        f = Fraction(scale)
        if f < 1:
            raise SpecValidationError(f"scale {scale} must be >= 1")
        cw = -((-w) // f)  # ceil(w / scale) keeps the refit crop-only
        ch = -((-h) // f)
        cw, ch = int(cw), int(ch)
        rect = ((w - cw) // 2, (h - ch) // 2, cw, ch)
        for tier in spec.digit_tiers:
            for idx in range(spec.trials_per_cell):
                number = draw_number(derive_key(spec.master_seed, spec.suite_id, "num", tier, idx), tier)
                tw, th = text_extent(number, spec.base_font)
                ax, ay = _centered_anchor((w, h), (tw, th))
                if not (rect[0] <= ax and ax + tw <= rect[0] + cw and rect[1] <= ay and ay + th <= rect[1] + ch):
                    raise TextLargerThanCrop(
                        f"text {tw}x{th} does not fit the 1/{scale} center crop {cw}x{ch}"
                    )
                records.append(
                    TrialRecord(
                        trial_id=_trial_id(spec.suite_id, scale, tier, idx),
                        suite=spec.suite_id,
                        ground_truth=number,
                        params={
                            "kind": "size",
                            "canvas": [w, h],
                            "scale": float(scale),
                            "base_rate": spec.base_font,
                            "digits": tier,
                            "crop": list(rect),
                        },
                        placements=(Placement(None, number, (ax, ay, tw, th)),),
                        prompt=PROMPT_READ,
                    )
                )
    return records


def _inflate(bbox: Bbox, pad: int) -> Bbox:
    x, y, w, h = bbox
    return (x - pad, y - pad, w + 2 * pad, h + 2 * pad)


def _intersects(a: Bbox, b: Bbox) -> bool:
    return a[0] < b[0] + b[2] and b[0] < a[0] + a[2] and a[1] < b[1] + b[3] and b[1] < a[1] + a[3]


def _place_distractors(
    stream: SeedStream,
    canvas_wh: tuple[int, int],
    taken: list[Bbox],
    k: int,
    font: int,
    target_value: str,
    n_digits: int,
    max_attempts: int = 1000,
) -> list[Placement]:
    """Non-overlapping labeled distractors at rejection-sampled positions."""
    w, h = canvas_wh
    out = []
    occupied = [_inflate(b, 2) for b in taken]
    for d in range(k):
        value = target_value
        while value == target_value:
            value = str(stream.randint(10 ** (n_digits - 1), 10**n_digits))
        text = f"{_DISTRACTOR_LABELS[d]}={value}"
        tw, th = text_extent(text, font)
        for attempt in range(max_attempts):
            x = stream.randint(0, w - tw + 1)
            y = stream.randint(0, h - th + 1)
            bbox = (x, y, tw, th)
            padded = _inflate(bbox, 2)
            if not any(_intersects(padded, o) for o in occupied):
                occupied.append(padded)
                out.append(Placement(text[0], value, bbox))
                break
        else:
            raise PlacementFailure(f"could not place distractor {d + 1}/{k} after {max_attempts} tries")
    return out


def build_distractor_suite(spec: SuiteSpec) -> list[TrialRecord]:
    """Centered 'a=NNN' target plus k labeled distractors at random spots."""
    w, h = spec.profile.resolution
    n_digits = spec.n_digits or 3
    records = []
    for k in spec.counts:
        if k > len(_DISTRACTOR_LABELS):
            raise SpecValidationError(f"at most {len(_DISTRACTOR_LABELS)} distractors supported")
        for font in spec.fonts:
            for idx in range(spec.n_numbers):
                number = draw_number(derive_key(spec.master_seed, spec.suite_id, "num", idx), n_digits)
                target_text = f"a={number}"
                tw, th = text_extent(target_text, font)
                anchor = _centered_anchor((w, h), (tw, th))
                target = Placement("a", number, (*anchor, tw, th))
                for rep in range(spec.reps):
                    stream = SeedStream(spec.master_seed, spec.suite_id, "cell", k, font, idx, rep)
                    distractors = _place_distractors(
                        stream, (w, h), [target.bbox], k, font, number, n_digits
                    )
                    records.append(
                        TrialRecord(
                            trial_id=_trial_id(spec.suite_id, k, font, idx, rep),
                            suite=spec.suite_id,
                            ground_truth=number,
                            params={
                                "kind": "distractor",
                                "canvas": [w, h],
                                "k": k,
                                "font": font,
                                "digits": n_digits,
                            },
                            placements=(target, *distractors),
                            prompt=PROMPT_VARIABLE,
                        )
                    )
    return records


def location_profile(profile: ModelProfile) -> ModelProfile:
    """Grid used for the location sweep: 2x2-merged for 14px-patch models."""
    return merged_grid(profile, 2) if profile.patch_size == 14 else profile


def build_location_suite(spec: SuiteSpec) -> list[TrialRecord]:
    """Target centered in every merged cell, with 0 and k distractors."""
    w, h = spec.profile.resolution
    mp = location_profile(spec.profile)
    rows, cols = mp.grid
    n_digits = spec.n_digits or 3
    rate = 8
    if spec.location_distractors is not None:
        k_model = spec.location_distractors
    else:
        k_model = 9 if spec.profile.ocr_enhanced else 1
    records = []
    for row in range(rows):
        for col in range(cols):
            for k in (0, k_model):
                for idx in range(spec.n_numbers):
                    number = draw_number(derive_key(spec.master_seed, spec.suite_id, "num", idx), n_digits)
                    text = f"a={number}"
                    tw, th = text_extent(text, rate)
                    anchor = cell_center_anchor(mp, row, col, tw, th)
                    target = Placement("a", number, (*anchor, tw, th))
                    placements = [target]
                    if k:
                        stream = SeedStream(spec.master_seed, spec.suite_id, "cell", row, col, k, idx)
                        others = [(r, c) for r in range(rows) for c in range(cols) if (r, c) != (row, col)]
                        chosen = stream.sample(len(others), k)
                        for d, cell_idx in enumerate(chosen):
                            value = number
                            while value == number:
                                value = str(stream.randint(10 ** (n_digits - 1), 10**n_digits))
                            dtext = f"{_DISTRACTOR_LABELS[d]}={value}"
                            dw, dh = text_extent(dtext, rate)
                            r, c = others[cell_idx]
                            dx, dy = cell_center_anchor(mp, r, c, dw, dh)
                            placements.append(Placement(dtext[0], value, (dx, dy, dw, dh)))
                    records.append(
                        TrialRecord(
                            trial_id=_trial_id(spec.suite_id, row, col, k, idx),
                            suite=spec.suite_id,
                            ground_truth=number,
                            params={
                                "kind": "location",
                                "canvas": [w, h],
                                "row": row,
                                "col": col,
                                "k": k,
                                "cell_px": mp.patch_size,
                                "grid": [rows, cols],
                            },
                            placements=tuple(placements),
                            prompt=PROMPT_VARIABLE,
                        )
                    )
    return records


def boundary_digit_count(profile: ModelProfile) -> int:
    """Digits per target: as many as fit one patch (6 on 30px, else 3)."""
    return 6 if profile.patch_size >= 30 else 3


def build_boundary_cut_suite(spec: SuiteSpec) -> list[TrialRecord]:
    """Pixel-step sweeps of the text across patch boundaries, per axis."""
    w, h = spec.profile.resolution
    n_digits = spec.n_digits or boundary_digit_count(spec.profile)
    rate = 8
    records = []
    for axis in spec.axes:
        if axis not in ("vertical", "horizontal"):
            raise SpecValidationError(f"invalid axis {axis!r}")
        for idx in range(spec.n_numbers):
            number = draw_number(derive_key(spec.master_seed, spec.suite_id, "num", axis, idx), n_digits)
            tw, th = text_extent(number, rate)
            if axis == "vertical":
                span = w - tw
                fixed = (h - th) // 2
            else:
                span = h - th
                fixed = (w - tw) // 2
            for pos in range(0, span + 1, spec.step):
                bbox = (pos, fixed, tw, th) if axis == "vertical" else (fixed, pos, tw, th)
                report = classify_cut(bbox, spec.profile, axis)
                records.append(
                    TrialRecord(
                        trial_id=_trial_id(spec.suite_id, axis, idx, pos),
                        suite=spec.suite_id,
                        ground_truth=number,
                        params={
                            "kind": "boundary_cut",
                            "canvas": [w, h],
                            "axis": axis,
                            "position": pos,
                            "range_ratio": report.range_ratio,
                            "is_cut": report.is_cut,
                            "crossed": list(report.crossed_boundaries),
                            "digits": n_digits,
                            "patch": spec.profile.patch_size,
                        },
                        placements=(Placement(None, number, bbox),),
                        prompt=PROMPT_READ,
                    )
                )
    return records


_BUILDERS = {
    "quality": build_quality_suite,
    "size": build_size_suite,
    "distractor": build_distractor_suite,
    "location": build_location_suite,
    "boundary_cut": build_boundary_cut_suite,
}


def build_suite(spec: SuiteSpec) -> list[TrialRecord]:
    return _BUILDERS[spec.kind](spec)


def render_trial(record: TrialRecord) -> np.ndarray:
    """Deterministically rasterize a record from its placements and params."""
    params = record.params
    w, h = params["canvas"]
    kind = params["kind"]
    canvas = new_canvas(w, h)
    if kind == "quality":
        base = params["base_rate"]
        (placement,) = record.placements
        bbox = render_text(canvas, placement.text, base, placement.bbox[:2])
        return reduce_sampling_rate(canvas, bbox, base, params["sampling_rate"])
    if kind == "size":
        (placement,) = record.placements
        render_text(canvas, placement.text, params["base_rate"], placement.bbox[:2])
        scale = Fraction(params["scale"])
        if scale == 1:
            return canvas
        out = crop_upsample(canvas, tuple(params["crop"]), scale)
        return center_fit(out, w, h)
    # direct renders: distractor, location, boundary_cut
    rate = params.get("font") or 8
    for placement in record.placements:
        text = f"{placement.label}={placement.text}" if placement.label else placement.text
        render_text(canvas, text, rate, placement.bbox[:2])
    return canvas


def load_suite_specs(path) -> list[SuiteSpec]:
    """Parse and validate a declarative suite spec document (JSON)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise SpecValidationError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
    if not isinstance(doc, dict):
        raise SpecValidationError(f"{path}: top level must be an object")
    if "master_seed" not in doc or not isinstance(doc["master_seed"], int):
        raise SpecValidationError(f"{path}: 'master_seed' (integer) is required")
    suites = doc.get("suites")
    if not isinstance(suites, list) or not suites:
        raise SpecValidationError(f"{path}: 'suites' must be a non-empty array")
    default_profile = doc.get("profile")
    out = []
    seen_ids = set()
    for i, entry in enumerate(suites):
        where = f"{path}: suites[{i}]"
        if not isinstance(entry, dict):
            raise SpecValidationError(f"{where}: must be an object")
        kind = entry.get("kind")
        if kind not in SUITE_KINDS:
            raise SpecValidationError(f"{where}: 'kind' must be one of {SUITE_KINDS}, got {kind!r}")
        profile_name = entry.get("profile", default_profile)
        if not profile_name:
            raise SpecValidationError(f"{where}: no 'profile' given and no document default")
        try:
            profile = get_profile(profile_name, doc.get("profile_config"))
        except Exception as e:
            raise SpecValidationError(f"{where}: {e}")
        kwargs = {}
        for fname, caster in (
            ("rates", lambda v: tuple(int(x) for x in v)),
            ("scales", lambda v: tuple(float(x) for x in v)),
            ("digit_tiers", lambda v: tuple(int(x) for x in v)),
            ("counts", lambda v: tuple(int(x) for x in v)),
            ("fonts", lambda v: tuple(int(x) for x in v)),
            ("axes", lambda v: tuple(str(x) for x in v)),
            ("trials_per_cell", int),
            ("n_numbers", int),
            ("reps", int),
            ("n_digits", int),
            ("base_rate", int),
            ("base_font", int),
            ("location_distractors", int),
            ("step", int),
            ("id", str),
        ):
            if fname in entry and entry[fname] is not None:
                try:
                    value = caster(entry[fname])
                except (TypeError, ValueError) as e:
                    raise SpecValidationError(f"{where}.{fname}: {e}")
                kwargs["suite_id" if fname == "id" else fname] = value
        try:
            spec = SuiteSpec(kind=kind, profile=profile, master_seed=doc["master_seed"], **kwargs)
        except SpecValidationError as e:
            raise SpecValidationError(f"{where}: {e}")
        if spec.suite_id in seen_ids:
            raise SpecValidationError(f"{where}: duplicate suite id {spec.suite_id!r}")
        seen_ids.add(spec.suite_id)
        out.append(spec)
    return out


def generate(specs: list[SuiteSpec], out_dir, write_images: bool = True) -> list[TrialRecord]:
    """Build all suites, write images and the manifest; returns the records."""
    records: list[TrialRecord] = []
    for spec in specs:
        records.extend(build_suite(spec))
    records.sort(key=lambda r: r.trial_id)
    ids = [r.trial_id for r in records]
    if len(set(ids)) != len(ids):
        raise ForgeError("trial id collision across suites")
    os.makedirs(out_dir, exist_ok=True)
    if write_images:
        for rec in records:
            img = render_trial(rec)
            path = os.path.join(out_dir, rec.image_ref)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            pngio.write_png(path, img)
    manifest = os.path.join(out_dir, "manifest.jsonl")
    with open(manifest, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True, separators=(",", ":")) + "\n")
    return records


def read_manifest(path) -> list[TrialRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(TrialRecord.from_json(json.loads(line)))
    return records
