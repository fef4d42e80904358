import numpy as np
import pytest

from myosynth.analysis import (ReferenceStats, SectionStats, classify_abnormal,
                               export_scatter, kde_diameters, section_stats)
from myosynth.measure import FiberRecord


def rec(d, region="whole", excluded=False, rid=1, area=1000.0):
    return FiberRecord(rid, area, 100.0, 0.8, d, d * 1.4, d * 1.1,
                       0.0, 0.0, region, excluded)


class TestSectionStats:
    def test_single_fiber(self):
        s = section_stats([rec(40.0)], "s1")
        assert s.fiber_count == 1
        assert s.mean_diameter_um == 40.0
        assert s.std_diameter_um == 0.0

    def test_population_std(self):
        s = section_stats([rec(30.0, rid=1), rec(50.0, rid=2)], "s1")
        assert s.mean_diameter_um == pytest.approx(40.0)
        assert s.std_diameter_um == pytest.approx(10.0)

    def test_region_partition(self):
        recs = [rec(30, "soleus", rid=1), rec(50, "gastrocnemius", rid=2),
                rec(40, "soleus", rid=3)]
        sol = section_stats(recs, "s", "soleus")
        gas = section_stats(recs, "s", "gastrocnemius")
        whole = section_stats(recs, "s", "whole")
        assert sol.fiber_count == 2 and gas.fiber_count == 1
        assert sol.fiber_count + gas.fiber_count == whole.fiber_count

    def test_excluded_skipped_and_empty_null(self):
        s = section_stats([rec(30, excluded=True)], "s1")
        assert s.fiber_count == 0
        assert s.mean_diameter_um is None


class TestAbnormal:
    REFS = [ReferenceStats(36.6, 11.0, "whole")]

    def test_small_abnormal(self):
        out = classify_abnormal([rec(12.0)], self.REFS)
        assert out[0]["abnormal"] and out[0]["direction"] == "small"

    def test_mean_is_normal(self):
        out = classify_abnormal([rec(36.6)], self.REFS)
        assert not out[0]["abnormal"]

    def test_boundary_strictly_greater(self):
        # |58.6 - 36.6| == 2 * 11.0 exactly: not larger, hence normal
        out = classify_abnormal([rec(58.6)], self.REFS)
        assert not out[0]["abnormal"]
        out = classify_abnormal([rec(58.6 + 1e-6)], self.REFS)
        assert out[0]["abnormal"] and out[0]["direction"] == "large"

    def test_per_region_references(self):
        refs = [ReferenceStats(30.0, 5.0, "soleus"),
                ReferenceStats(45.0, 5.0, "gastrocnemius")]
        recs = [rec(41.0, "soleus", rid=1), rec(41.0, "gastrocnemius", rid=2)]
        out = classify_abnormal(recs, refs)
        assert out[0]["abnormal"] and out[0]["direction"] == "large"
        assert not out[1]["abnormal"]

    def test_missing_reference_raises(self):
        with pytest.raises(KeyError):
            classify_abnormal([rec(30.0, "soleus")],
                              [ReferenceStats(30, 5, "gastrocnemius")])

    def test_two_sigma_calibration(self):
        rng = np.random.default_rng(42)
        d = rng.normal(36.6, 11.0, 100_000)
        recs = [rec(float(v), rid=i) for i, v in enumerate(d)]
        out = classify_abnormal(recs, self.REFS)
        rate = sum(o["abnormal"] for o in out) / len(out)
        assert abs(rate - 0.0455) <= 0.005

    def test_shift_equivariance(self):
        rng = np.random.default_rng(3)
        d = rng.normal(40, 8, 500)
        base = classify_abnormal([rec(float(v), rid=i)
                                  for i, v in enumerate(d)],
                                 [ReferenceStats(40.0, 8.0, "whole")])
        shifted = classify_abnormal([rec(float(v) + 100.0, rid=i)
                                     for i, v in enumerate(d)],
                                    [ReferenceStats(140.0, 8.0, "whole")])
        assert [o["abnormal"] for o in base] == \
               [o["abnormal"] for o in shifted]


class TestKde:
    def test_integrates_to_one(self):
        rng = np.random.default_rng(0)
        recs = [rec(float(v), rid=i)
                for i, v in enumerate(rng.normal(36.6, 11.0, 400))]
        xs, dens = kde_diameters(recs)
        assert len(xs) == 256
        assert np.trapezoid(dens, xs) == pytest.approx(1.0, abs=1e-3)

    def test_two_point_symmetry(self):
        xs, dens = kde_diameters([rec(30.0, rid=1), rec(50.0, rid=2)])
        mid = np.trapezoid(dens[xs <= 40.0], xs[xs <= 40.0])
        assert mid == pytest.approx(0.5, abs=0.01)
        # density symmetric about 40
        assert dens[np.argmin(np.abs(xs - 35))] == pytest.approx(
            dens[np.argmin(np.abs(xs - 45))], rel=1e-6)

    def test_mode_near_true_mean(self):
        rng = np.random.default_rng(1)
        recs = [rec(float(v), rid=i)
                for i, v in enumerate(rng.normal(36.6, 11.0, 1000))]
        xs, dens = kde_diameters(recs)
        assert abs(xs[np.argmax(dens)] - 36.6) <= 1.5

    def test_needs_two_fibers(self):
        with pytest.raises(ValueError):
            kde_diameters([rec(30.0)])


class TestScatterExport:
    def test_rows_and_ordering(self):
        sections = []
        for sid in ("s2", "s1"):
            for region in ("whole", "soleus", "gastrocnemius"):
                sections.append(SectionStats(sid, region, 3, 40.0, 5.0,
                                             1500.0, 8.0, 1, 0))
        text = export_scatter(sections)
        lines = text.strip().split("\n")
        assert len(lines) == 7
        assert lines[1].startswith("s1,gastrocnemius")
        assert lines[4].startswith("s2,")
        assert text == export_scatter(sections)  # deterministic

    def test_values_projected(self):
        s = SectionStats("a", "whole", 2, 40.0, 10.0, 1200.0, 7.5, 1, 2)
        line = export_scatter([s]).strip().split("\n")[1]
        assert line == "a,whole,2,40,10,1200,7.5,1,2"
