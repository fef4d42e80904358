import math

import numpy as np
import pytest

from myosynth.measure import (FiberRecord, assign_regions, measure_objects,
                              point_in_polygon, records_from_csv,
                              records_to_csv, validate_polygon)


def disc_mask(shape, cy, cx, r):
    yy, xx = np.indices(shape)
    return ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(np.int32)


class TestMeasure:
    def test_empty_labels_empty_list(self):
        assert measure_objects(np.zeros((8, 8), np.int32), 1.0) == []

    def test_rectangle_feret(self):
        lab = np.zeros((40, 60), np.int32)
        w, h = 30, 12
        lab[5:5 + h, 10:10 + w] = 1
        (r,) = measure_objects(lab, 2.0)
        assert r.area_um2 == w * h * 4.0
        # hull spans pixel centers: diagonal (w-1, h-1), width h-1
        assert r.feret_max_um == pytest.approx(
            2.0 * math.hypot(w - 1, h - 1), abs=1e-9)
        assert r.feret_min_um == pytest.approx(2.0 * (h - 1), abs=1e-9)
        assert abs(r.feret_max_um - 2.0 * math.hypot(w, h)) <= 2.0 * 1.5
        assert abs(r.feret_min_um - 2.0 * h) <= 2.0 * 1.5

    def test_square_circularity_near_pi_over_four(self):
        lab = np.zeros((40, 40), np.int32)
        lab[4:34, 4:34] = 1
        (r,) = measure_objects(lab, 1.0)
        assert abs(r.circularity - math.pi / 4.0) <= 0.05

    def test_disc_circularity_and_equiv_diameter(self):
        lab = disc_mask((70, 70), 35, 35, 30)
        (r,) = measure_objects(lab, 1.0)
        assert r.circularity >= 0.95
        assert abs(r.equiv_diameter_um - 60.0) / 60.0 <= 0.02

    def test_translation_invariance(self):
        blob = disc_mask((30, 30), 14, 14, 9)
        blob[5:9, 20:26] = 1
        a = np.zeros((64, 64), np.int32)
        b = np.zeros((64, 64), np.int32)
        a[2:32, 3:33] = blob
        b[30:60, 20:50] = blob
        ra = measure_objects(a, 1.0)[0]
        rb = measure_objects(b, 1.0)[0]
        for f in ("area_um2", "perimeter_um", "circularity", "feret_min_um",
                  "feret_max_um", "equiv_diameter_um"):
            assert getattr(ra, f) == pytest.approx(getattr(rb, f), abs=1e-9)

    def test_rotation_invariance_90deg(self):
        lab = np.zeros((50, 50), np.int32)
        lab[10:30, 15:40] = 1
        lab[28:36, 20:26] = 1
        ra = measure_objects(lab, 1.0)[0]
        rb = measure_objects(np.rot90(lab).copy(), 1.0)[0]
        assert ra.area_um2 == rb.area_um2
        assert ra.perimeter_um == pytest.approx(rb.perimeter_um, abs=1e-9)

    def test_single_pixel_degenerate(self):
        lab = np.zeros((5, 5), np.int32)
        lab[2, 2] = 1
        (r,) = measure_objects(lab, 1.0)
        assert r.perimeter_um == 0.0
        assert r.circularity == 1.0
        assert r.feret_max_um == 0.0

    def test_feret_bounds_hold(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            m = rng.random((48, 48)) < 0.45
            from myosynth.imgproc import area_opening, connected_components
            m = area_opening(m, 8)
            lab, n = connected_components(m)
            for r in measure_objects(lab, 1.0):
                assert r.feret_min_um <= r.feret_max_um + 1e-12
                # diameter bound with one ring of rasterization slack
                assert r.equiv_diameter_um <= r.feret_max_um + 1.3
                assert r.area_um2 <= math.pi * (r.feret_max_um / 2 + 1.0) ** 2

    def test_thin_line_circularity(self):
        lab = np.zeros((6, 120), np.int32)
        lab[3, 5:115] = 1
        (r,) = measure_objects(lab, 1.0)
        assert r.circularity < 0.1

    def test_records_sorted_by_id(self):
        lab = np.zeros((20, 20), np.int32)
        lab[15:18, 15:18] = 1
        lab[2:5, 2:5] = 2
        recs = measure_objects(lab, 1.0)
        assert [r.id for r in recs] == [1, 2]

    def test_invalid_scale(self):
        with pytest.raises(ValueError):
            measure_objects(np.ones((3, 3), np.int32), 0.0)


class TestRegions:
    @staticmethod
    def _rec(x, y):
        return FiberRecord(1, 100.0, 40.0, 0.8, 10.0, 12.0, 11.3, x, y)

    def test_inside_soleus(self):
        poly = np.array([[0, 0], [100, 0], [100, 100], [0, 100]], float)
        recs = assign_regions([self._rec(50, 50)], [("soleus", poly)])
        assert recs[0].region == "soleus"

    def test_no_polygons_whole(self):
        recs = assign_regions([self._rec(5, 5)], [])
        assert recs[0].region == "whole"

    def test_outside_soleus_defaults_gastrocnemius(self):
        poly = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], float)
        recs = assign_regions([self._rec(50, 50)], [("soleus", poly)])
        assert recs[0].region == "gastrocnemius"

    def test_edge_half_open_convention(self):
        square = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], float)
        assert point_in_polygon(0.0, 5.0, square)        # left edge in
        assert not point_in_polygon(10.0, 5.0, square)   # right edge out

    def test_self_intersecting_rejected(self):
        bowtie = [[0, 0], [10, 10], [10, 0], [0, 10]]
        with pytest.raises(ValueError, match="self-intersecting"):
            validate_polygon(bowtie)
        with pytest.raises(ValueError):
            validate_polygon([[0, 0], [1, 1]])


class TestCsv:
    def test_round_trip(self):
        recs = [FiberRecord(1, 1567.5, 141.2, 0.84, 36.6, 52.1, 44.7,
                            100.5, 200.25, "soleus", True),
                FiberRecord(2, 900.0, 110.0, 0.9, 30.0, 40.0, 33.9,
                            10.0, 20.0)]
        text = records_to_csv(recs)
        assert text.startswith("id,area_um2,perimeter_um,circularity,")
        assert "\r" not in text
        back = records_from_csv(text)
        assert back[0].region == "soleus" and back[0].excluded is True
        assert back[1].excluded is False
        assert back[0].area_um2 == pytest.approx(1567.5)

    def test_bad_header_rejected(self):
        with pytest.raises(ValueError):
            records_from_csv("nope\n1,2\n")
