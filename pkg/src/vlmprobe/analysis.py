"""Run scoring, factor-curve/heatmap aggregation, and VQA slicing.

Aggregates are deterministic: rows are processed in trial-id order, the
bootstrap uses a keyed counter-based stream, and CSV cells carry fixed
formatting, so re-scoring the same inputs reproduces identical bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .metrics import exact_match, gpm, inclusion_match, normalize, score_reply
from .probeforge import TrialRecord, derive_key


class AnalysisError(ValueError):
    pass


class NoBoxes(AnalysisError):
    pass


class TooFewRecords(AnalysisError):
    pass


UNIFIED_DIM = 224  # analysis-side common resolution; 224*224 = 50176 pixels


# ---------------------------------------------------------------------------
# scoring


def score_results(records: list[TrialRecord], results: list[dict]) -> tuple[list[dict], list[str]]:
    """Join result rows to manifest records and attach match scores.

    Returns (scored rows sorted by trial id, unmatched result ids). Trials
    whose backend errored score zero and keep the error payload.
    """
    by_id = {r.trial_id: r for r in records}
    scored = []
    unmatched = []
    for row in results:
        rec = by_id.get(row["trial_id"])
        if rec is None:
            unmatched.append(row["trial_id"])
            continue
        out = {
            "trial_id": rec.trial_id,
            "suite": rec.suite,
            "params": rec.params,
            "ground_truth": rec.ground_truth,
            "backend_id": row.get("backend_id"),
            "reply": row.get("reply"),
            "error": row.get("error"),
        }
        if row.get("error") is None and row.get("reply") is not None:
            m = score_reply(row["reply"], rec.ground_truth)
            out.update(
                gpm=m.gpm,
                exact=m.exact,
                inclusion=m.inclusion,
                normalized_prediction=m.normalized_prediction,
                extracted_answer=m.extracted_answer,
            )
        else:
            out.update(gpm=0.0, exact=0, inclusion=0, normalized_prediction="", extracted_answer="")
        scored.append(out)
    scored.sort(key=lambda r: r["trial_id"])
    return scored, unmatched


def write_scored(path, scored: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in scored:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_scored(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    rows.sort(key=lambda r: r["trial_id"])
    return rows


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class CurvePoint:
    param: object
    mean_gpm: float
    n: int
    n_error: int
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class HeatmapCell:
    row: int
    col: int
    mean_gpm: float
    n: int


def bootstrap_ci(values: np.ndarray, seed_parts, n_resamples: int = 1000) -> tuple[float, float]:
    """Seeded 95% percentile bootstrap of the mean.

    Resample indices come from raw Philox output reduced mod n (the ~1e-17
    modulo bias is irrelevant next to resampling noise and buys bit-stable
    results on every platform).
    """
    n = len(values)
    if n == 0:
        raise AnalysisError("no values")
    if n == 1:
        v = float(values[0])
        return (v, v)
    bg = np.random.Philox(key=derive_key("bootstrap", *seed_parts))
    idx = (bg.random_raw(n_resamples * n).reshape(n_resamples, n) % n).astype(np.intp)
    means = values[idx].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return (float(lo), float(hi))


def _cell_values(scored: list[dict], key_fn) -> dict:
    groups: dict = {}
    for row in scored:
        groups.setdefault(key_fn(row), []).append(row)
    return groups


def aggregate_curve(scored: list[dict], param_key: str, seed: int = 0) -> list[CurvePoint]:
    """Mean GPM per swept-parameter cell with a seeded bootstrap CI.

    Errored trials count as GPM 0 and are tallied in n_error.
    """
    groups = _cell_values(scored, lambda r: r["params"][param_key])
    points = []
    for param in sorted(groups):
        rows = groups[param]
        values = np.array([r["gpm"] for r in rows], dtype=np.float64)
        lo, hi = bootstrap_ci(values, (seed, param_key, param))
        points.append(
            CurvePoint(
                param=param,
                mean_gpm=float(values.mean()),
                n=len(rows),
                n_error=sum(1 for r in rows if r["error"] is not None),
                ci_low=lo,
                ci_high=hi,
            )
        )
    return points


def aggregate_heatmap(scored: list[dict]) -> list[HeatmapCell]:
    """Mean GPM per (row, col) grid cell, row-major order."""
    groups = _cell_values(scored, lambda r: (r["params"]["row"], r["params"]["col"]))
    cells = []
    for row, col in sorted(groups):
        rows = groups[(row, col)]
        values = [r["gpm"] for r in rows]
        cells.append(HeatmapCell(row, col, float(np.mean(values)), len(rows)))
    return cells


def boundary_cut_report(scored: list[dict], bin_width: float = 0.01) -> dict:
    """Per-axis sweep view: GPM binned by range ratio plus cut/uncut means.

    Returns {axis: {"bins": [(bin_lo, mean, n)], "window": <bins in
    [0.25, 0.75)>, "cut_mean", "cut_n", "uncut_mean", "uncut_n"}}.
    """
    out = {}
    n_bins = int(round(1.0 / bin_width))
    for axis in sorted({r["params"]["axis"] for r in scored}):
        rows = [r for r in scored if r["params"]["axis"] == axis]
        per_bin: dict[int, list[float]] = {}
        per_bin_cut: dict[int, list[bool]] = {}
        cut_vals = []
        uncut_vals = []
        for r in rows:
            ratio = r["params"]["range_ratio"]
            b = min(int(ratio / bin_width), n_bins - 1)
            per_bin.setdefault(b, []).append(r["gpm"])
            per_bin_cut.setdefault(b, []).append(bool(r["params"]["is_cut"]))
            (cut_vals if r["params"]["is_cut"] else uncut_vals).append(r["gpm"])
        bins = [
            (round(b * bin_width, 10), float(np.mean(v)), len(v)) for b, v in sorted(per_bin.items())
        ]
        window = [b for b in bins if 0.25 <= b[0] < 0.75]
        cut_bins = [
            (round(b * bin_width, 10), sum(flags) * 2 > len(flags))
            for b, flags in sorted(per_bin_cut.items())
        ]
        out[axis] = {
            "bins": bins,
            "window": window,
            "cut_bins": cut_bins,
            "cut_mean": float(np.mean(cut_vals)) if cut_vals else None,
            "cut_n": len(cut_vals),
            "uncut_mean": float(np.mean(uncut_vals)) if uncut_vals else None,
            "uncut_n": len(uncut_vals),
        }
    return out


# ---------------------------------------------------------------------------
# annotation slicing


@dataclass(frozen=True)
class AnnotationRecord:
    """One VQA question with target boxes and a model prediction.

    `boxes` are pixel rects (x, y, w, h); for OCR-token mode each carries a
    `text`. `n_objects` is the total annotated object count of the image
    (needed for object-distractor counting).
    """

    question_id: str
    width: int
    height: int
    answers: tuple[str, ...]
    boxes: tuple[dict, ...]
    prediction: str
    n_objects: int | None = None

    def __post_init__(self):
        if not self.answers:
            raise AnalysisError(f"{self.question_id}: answers must be non-empty")
        for b in self.boxes:
            if b["x"] < 0 or b["y"] < 0 or b["x"] + b["w"] > self.width or b["y"] + b["h"] > self.height:
                raise AnalysisError(f"{self.question_id}: box {b} outside {self.width}x{self.height}")


def read_annotations(path) -> list[AnnotationRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                AnnotationRecord(
                    question_id=str(obj["question_id"]),
                    width=int(obj["width"]),
                    height=int(obj["height"]),
                    answers=tuple(obj["answers"]),
                    boxes=tuple(obj.get("boxes", ())),
                    prediction=obj.get("prediction", ""),
                    n_objects=obj.get("n_objects"),
                )
            )
    return out


def union_area(boxes: list[tuple[int, int, int, int]]) -> int:
    """Exact area of a union of axis-aligned integer rects (coordinate
    compression, no rasterization)."""
    xs = sorted({x for b in boxes for x in (b[0], b[0] + b[2])})
    ys = sorted({y for b in boxes for y in (b[1], b[1] + b[3])})
    area = 0
    for yi in range(len(ys) - 1):
        y0, y1 = ys[yi], ys[yi + 1]
        for xi in range(len(xs) - 1):
            x0, x1 = xs[xi], xs[xi + 1]
            for bx, by, bw, bh in boxes:
                if bx <= x0 and x1 <= bx + bw and by <= y0 and y1 <= by + bh:
                    area += (x1 - x0) * (y1 - y0)
                    break
    return area


def relative_target_area(rec: AnnotationRecord, mode: str) -> float:
    """Fraction of the image covered by the question's target region.

    Object mode ('gqa'): union of all target boxes. OCR-token mode
    ('textvqa'): the single token box whose text best GPM-matches the first
    answer (ties: larger area, then first index).
    """
    if not rec.boxes:
        raise NoBoxes(f"{rec.question_id}: no target boxes")
    if mode == "gqa":
        area = union_area([(b["x"], b["y"], b["w"], b["h"]) for b in rec.boxes])
    elif mode == "textvqa":
        answer = normalize(rec.answers[0])
        best = None
        for i, b in enumerate(rec.boxes):
            sim = gpm(normalize(b.get("text", "")), answer)
            key = (sim, b["w"] * b["h"], -i)
            if best is None or key > best[0]:
                best = (key, b)
        area = best[1]["w"] * best[1]["h"]
    else:
        raise AnalysisError(f"unknown mode {mode!r}")
    return area / (rec.width * rec.height)


def unified_pixel_count(fraction: float) -> int:
    """Pixel count of a region fraction on the unified 224x224 input."""
    return int(math.floor(fraction * UNIFIED_DIM * UNIFIED_DIM + 0.5))


def count_distractors(rec: AnnotationRecord, mode: str) -> int:
    """Distractors: OCR tokens unrelated to any answer, or annotated objects
    outside the target set."""
    if mode == "textvqa":
        answers = [normalize(a) for a in rec.answers]
        answers = [a for a in answers if a]
        n = 0
        for b in rec.boxes:
            t = normalize(b.get("text", ""))
            if not t or not any(t == a or t in a for a in answers):
                n += 1
        return n
    if mode == "gqa":
        if rec.n_objects is None:
            raise AnalysisError(f"{rec.question_id}: n_objects required for object mode")
        return max(0, rec.n_objects - len(rec.boxes))
    raise AnalysisError(f"unknown mode {mode!r}")


def quantile_slice(
    records: list[AnnotationRecord], mode: str, key: str = "relative_size", q: int = 5
) -> list[dict]:
    """Equal-count buckets by relative target size or distractor count.

    Stable sort by key (input order breaks ties); remainder records go one
    each to the first buckets. Each row reports the key interval, unified
    pixel interval (size key only), mean distractor count, and accuracy
    under inclusion and exact matching.
    """
    if len(records) < q:
        raise TooFewRecords(f"need at least {q} records, got {len(records)}")
    if key == "relative_size":
        keyed = [(relative_target_area(r, mode), r) for r in records]
    elif key == "distractor_count":
        keyed = [(count_distractors(r, mode), r) for r in records]
    else:
        raise AnalysisError(f"unknown slice key {key!r}")
    keyed.sort(key=lambda kv: kv[0])  # python sort is stable
    n = len(keyed)
    base, rem = divmod(n, q)
    rows = []
    pos = 0
    for b in range(q):
        size = base + (1 if b < rem else 0)
        chunk = keyed[pos : pos + size]
        pos += size
        keys = [kv[0] for kv in chunk]
        recs = [kv[1] for kv in chunk]
        row = {
            "quantile": b + 1,
            "n": size,
            "key_lo": keys[0],
            "key_hi": keys[-1],
            "mean_distractors": float(np.mean([count_distractors(r, mode) for r in recs])),
            "acc_inclusion": float(
                np.mean([inclusion_match(r.prediction, list(r.answers)) for r in recs])
            ),
            "acc_exact": float(np.mean([exact_match(r.prediction, list(r.answers)) for r in recs])),
        }
        if key == "relative_size":
            row["pixels_lo"] = unified_pixel_count(keys[0])
            row["pixels_hi"] = unified_pixel_count(keys[-1])
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# native dataset converters (thin)


def convert_gqa(questions: dict, scene_graphs: dict, predictions: dict | None = None) -> list[AnnotationRecord]:
    """GQA native format -> annotation records.

    `questions`: {qid: {"imageId", "answer", "annotations": {"answer"|
    "fullAnswer"|"question": {pointer: objectId}}}}; `scene_graphs`:
    {imageId: {"width", "height", "objects": {oid: {"x","y","w","h"}}}}.
    Target boxes aggregate every object referenced by the annotations.
    """
    out = []
    for qid in sorted(questions):
        q = questions[qid]
        scene = scene_graphs[q["imageId"]]
        objects = scene["objects"]
        target_ids: list[str] = []
        for section in ("answer", "fullAnswer", "question"):
            for oid in (q.get("annotations", {}).get(section) or {}).values():
                for one in str(oid).split(","):
                    if one in objects and one not in target_ids:
                        target_ids.append(one)
        boxes = tuple(
            {"x": objects[o]["x"], "y": objects[o]["y"], "w": objects[o]["w"], "h": objects[o]["h"]}
            for o in target_ids
        )
        out.append(
            AnnotationRecord(
                question_id=str(qid),
                width=scene["width"],
                height=scene["height"],
                answers=(q["answer"],),
                boxes=boxes,
                prediction=(predictions or {}).get(qid, ""),
                n_objects=len(objects),
            )
        )
    return out


def convert_textvqa(data: dict, ocr: dict, predictions: dict | None = None) -> list[AnnotationRecord]:
    """TextVQA native format -> annotation records.

    `data`: {"data": [{"question_id", "image_id", "image_width",
    "image_height", "answers"}]}; `ocr`: {"data": [{"image_id", "ocr_info":
    [{"word", "bounding_box": {"top_left_x","top_left_y","width","height"}
    in 0-1 coords}]}]}.
    """
    ocr_by_image = {entry["image_id"]: entry.get("ocr_info", []) for entry in ocr.get("data", [])}
    out = []
    for item in data.get("data", []):
        w = item["image_width"]
        h = item["image_height"]
        boxes = []
        for tok in ocr_by_image.get(item["image_id"], []):
            bb = tok["bounding_box"]
            x0 = max(0, min(w, round(bb["top_left_x"] * w)))
            y0 = max(0, min(h, round(bb["top_left_y"] * h)))
            boxes.append(
                {
                    "x": x0,
                    "y": y0,
                    "w": max(1, min(w - x0, round(bb["width"] * w))),
                    "h": max(1, min(h - y0, round(bb["height"] * h))),
                    "text": tok["word"],
                }
            )
        qid = str(item["question_id"])
        out.append(
            AnnotationRecord(
                question_id=qid,
                width=w,
                height=h,
                answers=tuple(item["answers"]),
                boxes=tuple(boxes),
                prediction=(predictions or {}).get(qid, ""),
            )
        )
    return out


# ---------------------------------------------------------------------------
# tabular / SVG emission


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def curve_csv_rows(points: list[CurvePoint]) -> tuple[list[str], list[list]]:
    header = ["param", "mean_gpm", "n", "n_error", "ci_low", "ci_high"]
    return header, [[p.param, p.mean_gpm, p.n, p.n_error, p.ci_low, p.ci_high] for p in points]


def heatmap_csv_rows(cells: list[HeatmapCell]) -> tuple[list[str], list[list]]:
    header = ["row", "col", "mean_gpm", "n"]
    return header, [[c.row, c.col, c.mean_gpm, c.n] for c in cells]


def quantile_csv_rows(rows: list[dict]) -> tuple[list[str], list[list]]:
    header = ["quantile", "n", "key_lo", "key_hi", "pixels_lo", "pixels_hi",
              "mean_distractors", "acc_inclusion", "acc_exact"]
    table = []
    for r in rows:
        table.append(
            [r["quantile"], r["n"], r["key_lo"], r["key_hi"], r.get("pixels_lo", ""),
             r.get("pixels_hi", ""), r["mean_distractors"], r["acc_inclusion"], r["acc_exact"]]
        )
    return header, table


def svg_curve(points: list[CurvePoint], title: str, width: int = 480, height: int = 320) -> str:
    """Self-contained line plot with a CI band; x spans the param range."""
    pad = 44
    xs = [float(p.param) for p in points]
    x0, x1 = min(xs), max(xs)
    sx = lambda x: pad + (x - x0) / (x1 - x0 or 1) * (width - 2 * pad)
    sy = lambda y: height - pad - y * (height - 2 * pad)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
    ]
    band = [f"{sx(x):.2f},{sy(p.ci_high):.2f}" for x, p in zip(xs, points)]
    band += [f"{sx(x):.2f},{sy(p.ci_low):.2f}" for x, p in zip(reversed(xs), reversed(points))]
    parts.append(f'<polygon points="{" ".join(band)}" fill="#c8d8f0" stroke="none"/>')
    line = " ".join(f"{sx(x):.2f},{sy(p.mean_gpm):.2f}" for x, p in zip(xs, points))
    parts.append(f'<polyline points="{line}" fill="none" stroke="#20508c" stroke-width="2"/>')
    for x, p in zip(xs, points):
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(p.mean_gpm):.2f}" r="3" fill="#20508c"/>')
    for frac in (0.0, 0.5, 1.0):
        parts.append(
            f'<text x="{pad - 6}" y="{sy(frac):.1f}" text-anchor="end" font-size="10">{frac:.1f}</text>'
        )
    for x in xs:
        parts.append(
            f'<text x="{sx(x):.1f}" y="{height - pad + 14}" text-anchor="middle" font-size="10">{x:g}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def svg_heatmap(cells: list[HeatmapCell], title: str, cell_px: int = 22) -> str:
    """Grayscale grid, lighter = higher mean GPM."""
    rows = max(c.row for c in cells) + 1
    cols = max(c.col for c in cells) + 1
    pad = 30
    width = cols * cell_px + 2 * pad
    height = rows * cell_px + 2 * pad + 10
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
    ]
    for c in cells:
        shade = int(round(c.mean_gpm * 255))
        parts.append(
            f'<rect x="{pad + c.col * cell_px}" y="{pad + 10 + c.row * cell_px}" '
            f'width="{cell_px}" height="{cell_px}" fill="rgb({shade},{shade},{shade})" '
            f'stroke="#888" stroke-width="0.5"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def svg_boundary(report_axis: dict, title: str, width: int = 640, height: int = 320) -> str:
    """Sweep plot with the boundary-cut position ranges shaded gray."""
    pad = 44
    bins = report_axis["bins"]
    sx = lambda x: pad + x * (width - 2 * pad)
    sy = lambda y: height - pad - y * (height - 2 * pad)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
    ]
    for lo, shaded in report_axis.get("cut_bins", []):
        if shaded:
            parts.append(
                f'<rect x="{sx(lo):.2f}" y="{pad}" width="{sx(lo + 0.01) - sx(lo):.2f}" '
                f'height="{height - 2 * pad}" fill="#dddddd" stroke="none"/>'
            )
    line = " ".join(f"{sx(lo):.2f},{sy(mean):.2f}" for lo, mean, _ in bins)
    parts.append(f'<polyline points="{line}" fill="none" stroke="#b03030" stroke-width="1.5"/>')
    parts.append("</svg>")
    return "\n".join(parts)
