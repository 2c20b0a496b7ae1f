import json
import math
from collections import Counter

import numpy as np
import pytest

import oracles
from vlmprobe import probeforge as pf
from vlmprobe import rastercore as rc
from vlmprobe.patchgeom import BUILTIN_PROFILES

BLIP2 = BUILTIN_PROFILES["blip2"]
FUYU = BUILTIN_PROFILES["fuyu-8b"]
QWEN = BUILTIN_PROFILES["qwen-vl-chat"]


class TestDrawNumber:
    def test_range_single_digit(self):
        for seed in range(50):
            v = pf.draw_number(seed, 1)
            assert v in set("123456789")

    def test_deterministic(self):
        assert pf.draw_number(1234, 3) == pf.draw_number(1234, 3)

    def test_no_leading_zero(self):
        for seed in range(200):
            assert pf.draw_number(seed, 4)[0] != "0"

    def test_uniformity_chi_square(self):
        # 10^6 draws of 3-digit numbers: every value within 5 sigma of uniform
        n_draws = 1_000_000
        counts = Counter(pf.draw_number(seed, 3) for seed in range(n_draws))
        expected = n_draws / 900
        sigma = math.sqrt(n_draws * (1 / 900) * (1 - 1 / 900))
        assert len(counts) == 900
        worst = max(abs(c - expected) for c in counts.values())
        assert worst < 5 * sigma, worst


class TestSeedStream:
    def test_randint_bounds(self):
        s = pf.SeedStream(1, "x")
        vals = [s.randint(5, 12) for _ in range(500)]
        assert set(vals) <= set(range(5, 12))
        assert len(set(vals)) == 7

    def test_platform_stable_values(self):
        # frozen: raw Philox output must never drift
        s = pf.SeedStream(42, "stream")
        assert [s.randint(0, 1000) for _ in range(4)] == [976, 77, 975, 259]

    def test_sample_distinct(self):
        s = pf.SeedStream(9)
        picks = s.sample(20, 8)
        assert len(set(picks)) == 8
        assert all(0 <= p < 20 for p in picks)


def _spec(kind, **kw):
    return pf.SuiteSpec(kind=kind, profile=kw.pop("profile", BLIP2), master_seed=7, **kw)


class TestQualitySuite:
    def test_cell_arithmetic(self):
        records = pf.build_quality_suite(_spec("quality", trials_per_cell=2))
        assert len(records) == 10 * 3 * 2
        cells = {(r.params["sampling_rate"], r.params["digits"]) for r in records}
        assert len(cells) == 30

    def test_full_scale_cardinality(self):
        records = pf.build_quality_suite(_spec("quality"))
        assert len(records) == 15000

    def test_rate20_equals_direct_render(self):
        records = pf.build_quality_suite(_spec("quality", rates=(20,), digit_tiers=(3,), trials_per_cell=1))
        img = pf.render_trial(records[0])
        direct = rc.new_canvas(224, 224)
        p = records[0].placements[0]
        rc.render_text(direct, p.text, 20, p.bbox[:2])
        assert np.array_equal(img, direct)

    def test_rate10_blocks_and_fixed_bbox(self):
        spec = _spec("quality", rates=(10, 20), digit_tiers=(3,), trials_per_cell=1)
        records = pf.build_quality_suite(spec)
        by_rate = {r.params["sampling_rate"]: r for r in records}
        assert by_rate[10].placements[0].bbox == by_rate[20].placements[0].bbox
        img = pf.render_trial(by_rate[10])
        x, y, w, h = by_rate[10].placements[0].bbox
        tile = img[y : y + 20, x : x + 40]
        assert np.array_equal(tile[0::2, 0::2], tile[1::2, 0::2])

    def test_numbers_shared_across_rates(self):
        spec = _spec("quality", rates=(4, 16), digit_tiers=(5,), trials_per_cell=3)
        records = pf.build_quality_suite(spec)
        r4 = sorted(r.ground_truth for r in records if r.params["sampling_rate"] == 4)
        r16 = sorted(r.ground_truth for r in records if r.params["sampling_rate"] == 16)
        assert r4 == r16


class TestSizeSuite:
    def test_full_scale_cardinality(self):
        assert len(pf.build_size_suite(_spec("size"))) == 15000

    def test_scale1_identity(self):
        records = pf.build_size_suite(_spec("size", scales=(1.0,), digit_tiers=(3,), trials_per_cell=1))
        img = pf.render_trial(records[0])
        direct = rc.new_canvas(224, 224)
        p = records[0].placements[0]
        rc.render_text(direct, p.text, 8, p.bbox[:2])
        assert np.array_equal(img, direct)

    def test_scale3_dark_pixels_square(self):
        records = pf.build_size_suite(_spec("size", scales=(1.0, 3.0), digit_tiers=(3,), trials_per_cell=1))
        by_scale = {r.params["scale"]: pf.render_trial(r) for r in records}
        assert rc.dark_pixel_count(by_scale[3.0]) == 9 * rc.dark_pixel_count(by_scale[1.0])

    def test_text_height_scales(self):
        for scale in (1.5, 2.5, 5.5):
            records = pf.build_size_suite(
                _spec("size", scales=(scale,), digit_tiers=(7,), trials_per_cell=1)
            )
            img = pf.render_trial(records[0])
            rows = oracles.dark_rows(img)
            assert rows[-1] - rows[0] + 1 == round(8 * scale)

    def test_canvas_dims_preserved(self):
        for profile in (BLIP2, FUYU):
            records = pf.build_size_suite(
                _spec("size", profile=profile, scales=(2.5, 4.5), digit_tiers=(3,), trials_per_cell=1)
            )
            for r in records:
                img = pf.render_trial(r)
                assert img.shape == (profile.resolution[1], profile.resolution[0])


class TestDistractorSuite:
    def test_full_scale_cardinality(self):
        assert len(pf.build_distractor_suite(_spec("distractor"))) == 10000

    def test_zero_distractors_single_centered(self):
        records = pf.build_distractor_suite(
            _spec("distractor", counts=(0,), fonts=(8,), n_numbers=1, reps=1)
        )
        (rec,) = records
        assert len(rec.placements) == 1
        assert rec.placements[0].label == "a"
        x, y, w, h = rec.placements[0].bbox
        assert abs((x + w / 2) - 112) <= 1 and abs((y + h / 2) - 112) <= 1

    def test_disjoint_and_labels(self):
        records = pf.build_distractor_suite(
            _spec("distractor", counts=(5, 9), fonts=(8, 12), n_numbers=3, reps=2)
        )
        for rec in records:
            boxes = [p.bbox for p in rec.placements]
            for i in range(len(boxes)):
                for j in range(i + 1, len(boxes)):
                    assert not pf._intersects(boxes[i], boxes[j])
            labels = [p.label for p in rec.placements]
            assert labels == list("ab" + "cdefghij")[: len(labels)]
            for p in rec.placements[1:]:
                assert p.text != rec.ground_truth

    def test_numbers_shared_across_fonts(self):
        records = pf.build_distractor_suite(
            _spec("distractor", counts=(0,), fonts=(8, 12), n_numbers=4, reps=1)
        )
        f8 = [r.ground_truth for r in records if r.params["font"] == 8]
        f12 = [r.ground_truth for r in records if r.params["font"] == 12]
        assert f8 == f12


class TestLocationSuite:
    def test_merged_cell_count(self):
        records = pf.build_location_suite(_spec("location", n_numbers=1))
        cells = {(r.params["row"], r.params["col"]) for r in records}
        assert len(cells) == 64
        assert records[0].params["cell_px"] == 28

    def test_fuyu_cell_count(self):
        records = pf.build_location_suite(_spec("location", profile=FUYU, n_numbers=1))
        cells = {(r.params["row"], r.params["col"]) for r in records}
        assert len(cells) == 100
        assert records[0].params["cell_px"] == 30

    def test_variants_and_distractor_count(self):
        records = pf.build_location_suite(_spec("location", n_numbers=1))
        ks = {r.params["k"] for r in records}
        assert ks == {0, 1}
        for r in records:
            assert len(r.placements) == 1 + r.params["k"]

    def test_qwen_gets_nine_distractors(self):
        records = pf.build_location_suite(_spec("location", profile=QWEN, n_numbers=1))
        assert {r.params["k"] for r in records} == {0, 9}

    def test_placements_in_distinct_cells(self):
        records = pf.build_location_suite(_spec("location", profile=QWEN, n_numbers=1))
        rec = next(r for r in records if r.params["k"] == 9)
        cell = rec.params["cell_px"]
        cells = {(p.bbox[1] // cell, p.bbox[0] // cell) for p in rec.placements}
        assert len(cells) == 10


class TestBoundaryCutSuite:
    def test_range_ratio_endpoints_and_tags(self):
        records = pf.build_boundary_cut_suite(_spec("boundary_cut", n_numbers=1, step=1))
        vertical = [r for r in records if r.params["axis"] == "vertical"]
        ratios = [r.params["range_ratio"] for r in vertical]
        assert ratios[0] == 0.0 and ratios[-1] == 1.0
        for r in vertical:
            is_cut, bounds = oracles.cut_oracle(r.placements[0].bbox, 14, "vertical")
            assert r.params["is_cut"] == is_cut
            assert r.params["crossed"] == bounds

    def test_cut_runs_contiguous(self):
        records = pf.build_boundary_cut_suite(_spec("boundary_cut", n_numbers=1, step=1))
        vertical = [r for r in records if r.params["axis"] == "vertical"]
        flags = [r.params["is_cut"] for r in vertical]
        # runs of identical flags alternate; count transitions
        transitions = sum(1 for a, b in zip(flags, flags[1:]) if a != b)
        boundaries_touched = {b for r in vertical for b in r.params["crossed"]}
        assert transitions == 2 * len(boundaries_touched)

    def test_digit_counts(self):
        recs = pf.build_boundary_cut_suite(_spec("boundary_cut", n_numbers=1, step=50))
        assert all(len(r.ground_truth) == 3 for r in recs)
        recs = pf.build_boundary_cut_suite(_spec("boundary_cut", profile=FUYU, n_numbers=1, step=50))
        assert all(len(r.ground_truth) == 6 for r in recs)

    def test_vertically_centered(self):
        recs = pf.build_boundary_cut_suite(_spec("boundary_cut", n_numbers=1, step=100))
        v = next(r for r in recs if r.params["axis"] == "vertical")
        assert v.placements[0].bbox[1] == (224 - 8) // 2


class TestManifest:
    def test_round_trip_json(self):
        records = pf.build_distractor_suite(
            _spec("distractor", counts=(2,), fonts=(8,), n_numbers=1, reps=1)
        )
        rec = records[0]
        assert pf.TrialRecord.from_json(rec.to_json()) == rec

    def test_generate_is_byte_deterministic(self, tmp_path, smoke_spec_path):
        specs1 = pf.load_suite_specs(smoke_spec_path)
        specs2 = pf.load_suite_specs(smoke_spec_path)
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        pf.generate([s for s in specs1 if s.kind == "distractor"], out1)
        pf.generate([s for s in specs2 if s.kind == "distractor"], out2)
        m1 = (out1 / "manifest.jsonl").read_bytes()
        m2 = (out2 / "manifest.jsonl").read_bytes()
        assert m1 == m2

    def test_rendered_image_matches_emitted_png(self, tmp_path, smoke_spec_path):
        from vlmprobe import pngio

        specs = [s for s in pf.load_suite_specs(smoke_spec_path) if s.kind == "quality"]
        records = pf.generate(specs, tmp_path / "out")
        for rec in records[:10]:
            emitted = pngio.read_png(tmp_path / "out" / rec.image_ref)
            assert np.array_equal(emitted, pf.render_trial(rec))


class TestSpecValidation:
    def test_loads_smoke_spec(self, smoke_spec_path):
        specs = pf.load_suite_specs(smoke_spec_path)
        assert [s.kind for s in specs] == ["quality", "size", "distractor", "location", "boundary_cut"]

    def test_rejects_bad_kind(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"master_seed": 1, "profile": "blip2", "suites": [{"kind": "nope"}]}))
        with pytest.raises(pf.SpecValidationError, match="suites\\[0\\]"):
            pf.load_suite_specs(path)

    def test_rejects_missing_seed(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"profile": "blip2", "suites": [{"kind": "quality"}]}))
        with pytest.raises(pf.SpecValidationError, match="master_seed"):
            pf.load_suite_specs(path)

    def test_reports_json_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "master_seed": 1,\n  !!!\n}')
        with pytest.raises(pf.SpecValidationError, match="line 3"):
            pf.load_suite_specs(path)

    def test_rejects_unknown_profile(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"master_seed": 1, "profile": "gpt9", "suites": [{"kind": "quality"}]}))
        with pytest.raises(pf.SpecValidationError, match="gpt9"):
            pf.load_suite_specs(path)
