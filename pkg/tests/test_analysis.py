import json

import numpy as np
import pytest

import oracles
from vlmprobe import analysis as an
from vlmprobe.probeforge import Placement, TrialRecord


def _record(trial_id, suite="quality", truth="593", **params):
    params.setdefault("kind", "quality")
    params.setdefault("sampling_rate", 8)
    return TrialRecord(
        trial_id=trial_id,
        suite=suite,
        ground_truth=truth,
        params=params,
        placements=(Placement(None, truth, (0, 0, 10, 8)),),
        prompt="What is the number on the image?",
    )


def _result(trial_id, reply, error=None):
    return {"trial_id": trial_id, "backend_id": "test", "reply": reply, "error": error}


class TestScoreResults:
    def test_joins_and_scores(self):
        records = [_record("a1"), _record("a2")]
        results = [_result("a2", "the number is 593"), _result("a1", "nope")]
        scored, unmatched = an.score_results(records, results)
        assert unmatched == []
        assert [r["trial_id"] for r in scored] == ["a1", "a2"]  # sorted
        assert scored[1]["gpm"] == 1.0
        assert scored[0]["gpm"] == 0.0

    def test_unmatched_reported(self):
        scored, unmatched = an.score_results([_record("a1")], [_result("zz", "x")])
        assert unmatched == ["zz"]
        assert scored == []

    def test_error_rows_score_zero(self):
        scored, _ = an.score_results(
            [_record("a1")], [{"trial_id": "a1", "reply": None, "error": {"kind": "timeout"}}]
        )
        assert scored[0]["gpm"] == 0.0
        assert scored[0]["error"]["kind"] == "timeout"


class TestAggregateCurve:
    def test_all_correct(self):
        records = [_record(f"t{i}", sampling_rate=r) for i, r in enumerate([2, 2, 4, 4])]
        results = [_result(f"t{i}", "593") for i in range(4)]
        scored, _ = an.score_results(records, results)
        points = an.aggregate_curve(scored, "sampling_rate")
        assert [p.param for p in points] == [2, 4]
        for p in points:
            assert p.mean_gpm == 1.0
            assert (p.ci_low, p.ci_high) == (1.0, 1.0)
            assert p.n == 2 and p.n_error == 0

    def test_single_record_degenerate_ci(self):
        scored, _ = an.score_results([_record("t0")], [_result("t0", "123")])
        (point,) = an.aggregate_curve(scored, "sampling_rate")
        assert point.ci_low == point.ci_high == point.mean_gpm

    def test_half_half_mean(self):
        records = [_record(f"t{i}") for i in range(10)]
        results = [_result(f"t{i}", "593" if i < 5 else "xxx") for i in range(10)]
        scored, _ = an.score_results(records, results)
        (point,) = an.aggregate_curve(scored, "sampling_rate")
        assert point.mean_gpm == 0.5
        assert point.ci_low <= 0.5 <= point.ci_high

    def test_permutation_invariant(self):
        records = [_record(f"t{i}") for i in range(8)]
        results = [_result(f"t{i}", "593" if i % 3 else "59") for i in range(8)]
        scored1, _ = an.score_results(records, results)
        scored2, _ = an.score_results(records, list(reversed(results)))
        p1 = an.aggregate_curve(scored1, "sampling_rate", seed=1)
        p2 = an.aggregate_curve(scored2, "sampling_rate", seed=1)
        assert p1 == p2

    def test_bootstrap_seeded_and_sane(self):
        rng = np.random.default_rng(0)
        values = rng.uniform(0, 1, size=60)
        ci_a = an.bootstrap_ci(values, (1, "k"))
        ci_b = an.bootstrap_ci(values, (1, "k"))
        ci_c = an.bootstrap_ci(values, (2, "k"))
        assert ci_a == ci_b
        assert ci_a != ci_c  # different key -> different resamples
        assert ci_a[0] <= values.mean() <= ci_a[1]

    def test_errors_tallied(self):
        records = [_record("t0"), _record("t1")]
        results = [_result("t0", "593"), {"trial_id": "t1", "reply": None, "error": {"kind": "timeout"}}]
        scored, _ = an.score_results(records, results)
        (point,) = an.aggregate_curve(scored, "sampling_rate")
        assert point.n == 2 and point.n_error == 1
        assert point.mean_gpm == 0.5


class TestHeatmapAndBoundary:
    def test_heatmap_cells(self):
        records = [
            _record(f"t{r}{c}", kind="location", row=r, col=c, sampling_rate=8)
            for r in range(2)
            for c in range(3)
        ]
        results = [_result(rec.trial_id, "593") for rec in records]
        scored, _ = an.score_results(records, results)
        cells = an.aggregate_heatmap(scored)
        assert [(c.row, c.col) for c in cells] == [(r, c) for r in range(2) for c in range(3)]
        assert all(c.mean_gpm == 1.0 and c.n == 1 for c in cells)

    def test_boundary_report_partitions(self):
        records = []
        results = []
        for i in range(40):
            ratio = i / 39
            cut = 0.3 < ratio < 0.6
            records.append(
                _record(
                    f"b{i:02d}", kind="boundary_cut", axis="vertical",
                    range_ratio=ratio, is_cut=cut, sampling_rate=8,
                )
            )
            results.append(_result(f"b{i:02d}", "593" if not cut else "59"))
        scored, _ = an.score_results(records, results)
        report = an.boundary_cut_report(scored)["vertical"]
        assert report["cut_n"] + report["uncut_n"] == 40
        assert report["uncut_mean"] == 1.0
        assert report["cut_mean"] < 1.0
        assert all(0.25 <= b[0] < 0.75 for b in report["window"])
        total_binned = sum(b[2] for b in report["bins"])
        assert total_binned == 40


class TestRelativeTargetArea:
    def test_full_image_box(self):
        rec = an.AnnotationRecord("q", 100, 50, ("x",), ({"x": 0, "y": 0, "w": 100, "h": 50},), "")
        assert an.relative_target_area(rec, "gqa") == 1.0

    def test_disjoint_boxes_sum(self):
        rec = an.AnnotationRecord(
            "q", 100, 100, ("x",),
            ({"x": 0, "y": 0, "w": 10, "h": 100}, {"x": 50, "y": 0, "w": 20, "h": 100}), "",
        )
        assert an.relative_target_area(rec, "gqa") == pytest.approx(0.3)

    def test_overlapping_boxes_union(self):
        # two 20x100 boxes overlapping by half: union = 3000 px of 10000
        boxes = ({"x": 0, "y": 0, "w": 20, "h": 100}, {"x": 10, "y": 0, "w": 20, "h": 100})
        rec = an.AnnotationRecord("q", 100, 100, ("x",), boxes, "")
        got = an.relative_target_area(rec, "gqa")
        raster = oracles.union_area_raster([(b["x"], b["y"], b["w"], b["h"]) for b in boxes], 100, 100)
        assert got == raster / 10000 == 0.3

    def test_random_unions_match_raster_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            boxes = []
            for _ in range(rng.integers(1, 6)):
                w = int(rng.integers(1, 40))
                h = int(rng.integers(1, 40))
                x = int(rng.integers(0, 100 - w))
                y = int(rng.integers(0, 80 - h))
                boxes.append({"x": x, "y": y, "w": w, "h": h})
            rec = an.AnnotationRecord("q", 100, 80, ("x",), tuple(boxes), "")
            got = an.relative_target_area(rec, "gqa") * 100 * 80
            want = oracles.union_area_raster([(b["x"], b["y"], b["w"], b["h"]) for b in boxes], 100, 80)
            assert got == pytest.approx(want)

    def test_textvqa_best_token(self):
        boxes = (
            {"x": 0, "y": 0, "w": 10, "h": 10, "text": "cat"},
            {"x": 0, "y": 20, "w": 20, "h": 10, "text": "stop"},
        )
        rec = an.AnnotationRecord("q", 100, 100, ("stop",), boxes, "")
        assert an.relative_target_area(rec, "textvqa") == pytest.approx(0.02)

    def test_textvqa_tie_prefers_larger(self):
        boxes = (
            {"x": 0, "y": 0, "w": 10, "h": 10, "text": "stop"},
            {"x": 0, "y": 20, "w": 20, "h": 10, "text": "stop"},
        )
        rec = an.AnnotationRecord("q", 100, 100, ("stop",), boxes, "")
        assert an.relative_target_area(rec, "textvqa") == pytest.approx(0.02)

    def test_no_boxes(self):
        rec = an.AnnotationRecord("q", 10, 10, ("x",), (), "")
        with pytest.raises(an.NoBoxes):
            an.relative_target_area(rec, "gqa")


class TestUnifiedPixelCount:
    def test_table_bounds(self):
        assert an.unified_pixel_count(1.0) == 50176
        assert an.unified_pixel_count(0.25) == 12544
        assert an.unified_pixel_count(0.0005) == 25


class TestCountDistractors:
    def test_all_tokens_match(self):
        boxes = ({"x": 0, "y": 0, "w": 5, "h": 5, "text": "stop"},)
        rec = an.AnnotationRecord("q", 10, 10, ("stop",), boxes, "")
        assert an.count_distractors(rec, "textvqa") == 0

    def test_counts_unrelated_tokens(self):
        boxes = tuple(
            {"x": i, "y": 0, "w": 1, "h": 1, "text": t}
            for i, t in enumerate(["stop", "go", "exit", "waRN", "stop sign"])
        )
        rec = an.AnnotationRecord("q", 10, 10, ("stop",), boxes, "")
        # 'stop' equal; 'stop sign' contains... substring direction: token in answer;
        # 'stop sign' is not a substring of 'stop' -> distractor
        assert an.count_distractors(rec, "textvqa") == 4

    def test_substring_tokens_not_distractors(self):
        boxes = (
            {"x": 0, "y": 0, "w": 1, "h": 1, "text": "sto"},
            {"x": 2, "y": 0, "w": 1, "h": 1, "text": "nope"},
        )
        rec = an.AnnotationRecord("q", 10, 10, ("stop",), boxes, "")
        assert an.count_distractors(rec, "textvqa") == 1

    def test_gqa_object_count(self):
        rec = an.AnnotationRecord(
            "q", 10, 10, ("x",), ({"x": 0, "y": 0, "w": 1, "h": 1},), "", n_objects=7
        )
        assert an.count_distractors(rec, "gqa") == 6


class TestQuantileSlice:
    def _records(self, keys):
        recs = []
        for i, k in enumerate(keys):
            w = max(1, round(100 * k))
            recs.append(
                an.AnnotationRecord(
                    f"q{i:04d}", 100, 100, ("ans",),
                    ({"x": 0, "y": 0, "w": w, "h": 100, "text": "ans"},), "ans",
                    n_objects=1,
                )
            )
        return recs

    def test_even_split(self):
        rows = an.quantile_slice(self._records([i / 10 + 0.05 for i in range(10)]), "gqa", q=5)
        assert [r["n"] for r in rows] == [2, 2, 2, 2, 2]

    def test_remainder_split(self):
        rows = an.quantile_slice(self._records([i / 11 + 0.05 for i in range(11)]), "gqa", q=5)
        assert [r["n"] for r in rows] == [3, 2, 2, 2, 2]

    def test_intervals_ordered_and_cover(self):
        rng = np.random.default_rng(5)
        keys = [float(k) for k in rng.uniform(0.01, 0.99, size=57)]
        rows = an.quantile_slice(self._records(keys), "gqa", q=5)
        assert sum(r["n"] for r in rows) == 57
        for a, b in zip(rows, rows[1:]):
            assert a["key_hi"] <= b["key_lo"]

    def test_against_sort_oracle(self):
        rng = np.random.default_rng(6)
        keys = [float(k) for k in rng.uniform(0.01, 0.99, size=203)]
        records = self._records(keys)
        rows = an.quantile_slice(records, "gqa", q=5)
        actual_keys = [an.relative_target_area(r, "gqa") for r in records]
        buckets, order = oracles.quantile_oracle(actual_keys, 5)
        for row, (start, size) in zip(rows, buckets):
            chunk = [actual_keys[i] for i in order[start : start + size]]
            assert row["n"] == size
            assert row["key_lo"] == pytest.approx(min(chunk))
            assert row["key_hi"] == pytest.approx(max(chunk))

    def test_too_few(self):
        with pytest.raises(an.TooFewRecords):
            an.quantile_slice(self._records([0.5, 0.6]), "gqa", q=5)


class TestConverters:
    def test_gqa(self):
        questions = {
            "q1": {
                "imageId": "im1",
                "answer": "dog",
                "annotations": {"answer": {"2": "o2"}, "question": {"4": "o1"}},
            }
        }
        scenes = {
            "im1": {
                "width": 200,
                "height": 100,
                "objects": {
                    "o1": {"x": 0, "y": 0, "w": 10, "h": 10},
                    "o2": {"x": 50, "y": 50, "w": 20, "h": 20},
                    "o3": {"x": 90, "y": 90, "w": 5, "h": 5},
                },
            }
        }
        (rec,) = an.convert_gqa(questions, scenes, {"q1": "a dog"})
        assert rec.n_objects == 3
        assert len(rec.boxes) == 2
        assert rec.answers == ("dog",)
        assert rec.prediction == "a dog"
        assert an.count_distractors(rec, "gqa") == 1

    def test_textvqa(self):
        data = {
            "data": [
                {
                    "question_id": 77,
                    "image_id": "im9",
                    "image_width": 100,
                    "image_height": 200,
                    "answers": ["stop", "stop sign"],
                }
            ]
        }
        ocr = {
            "data": [
                {
                    "image_id": "im9",
                    "ocr_info": [
                        {
                            "word": "STOP",
                            "bounding_box": {"top_left_x": 0.1, "top_left_y": 0.2, "width": 0.3, "height": 0.1},
                        }
                    ],
                }
            ]
        }
        (rec,) = an.convert_textvqa(data, ocr, {"77": "stop"})
        assert rec.boxes[0]["x"] == 10 and rec.boxes[0]["y"] == 40
        assert rec.boxes[0]["w"] == 30 and rec.boxes[0]["h"] == 20
        assert an.relative_target_area(rec, "textvqa") == pytest.approx(600 / 20000)


class TestCsv:
    def test_fixed_float_format(self, tmp_path):
        path = tmp_path / "t.csv"
        an.write_csv(path, ["a", "b"], [[1, 0.5], [2, 1 / 3]])
        assert path.read_text() == "a,b\n1,0.500000\n2,0.333333\n"

    def test_annotation_jsonl_round_trip(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        row = {
            "question_id": "q1", "width": 10, "height": 10, "answers": ["yes"],
            "boxes": [{"x": 1, "y": 2, "w": 3, "h": 4, "text": "t"}],
            "n_objects": 5, "prediction": "yes",
        }
        path.write_text(json.dumps(row) + "\n")
        (rec,) = an.read_annotations(path)
        assert rec.question_id == "q1"
        assert rec.boxes[0]["w"] == 3
        assert rec.n_objects == 5


class TestSvg:
    def test_curve_svg_well_formed(self):
        points = [an.CurvePoint(2, 0.5, 10, 0, 0.4, 0.6), an.CurvePoint(4, 0.9, 10, 0, 0.8, 1.0)]
        svg = an.svg_curve(points, "demo")
        assert svg.startswith("<svg") and svg.endswith("</svg>")
        assert "polyline" in svg

    def test_heatmap_svg_shades(self):
        cells = [an.HeatmapCell(0, 0, 1.0, 5), an.HeatmapCell(0, 1, 0.0, 5)]
        svg = an.svg_heatmap(cells, "demo")
        assert "rgb(255,255,255)" in svg and "rgb(0,0,0)" in svg
