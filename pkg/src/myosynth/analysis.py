"""Per-section statistics, reference-based abnormality flags and
distribution exports for fiber morphometry records.

"Diameter" throughout is the minimum Feret diameter in micrometres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .measure import FiberRecord


@dataclass(frozen=True)
class ReferenceStats:
    """Healthy-reference diameter distribution for one region."""

    mu_um: float
    sigma_um: float
    region: str = "whole"
    source: str = ""

    def __post_init__(self):
        if self.sigma_um < 0:
            raise ValueError("sigma_um must be >= 0")


@dataclass
class SectionStats:
    section_id: str
    region: str
    fiber_count: int
    mean_diameter_um: Optional[float]
    std_diameter_um: Optional[float]
    mean_area_um2: Optional[float]
    ct_mean_thickness_um: Optional[float]
    abnormal_small_count: int = 0
    abnormal_large_count: int = 0


def _included(records, region):
    recs = [r for r in records if not r.excluded]
    if region != "whole":
        recs = [r for r in recs if r.region == region]
    return recs


def section_stats(records: list[FiberRecord], section_id: str,
                  region: str = "whole",
                  ct_mean_thickness_um: float | None = None) -> SectionStats:
    """Population mean/std (n divisor) of the diameter over included fibers
    of the region; zero fibers yield null statistics."""
    recs = _included(records, region)
    n = len(recs)
    if n == 0:
        return SectionStats(section_id, region, 0, None, None, None,
                            ct_mean_thickness_um)
    d = np.array([r.feret_min_um for r in recs])
    a = np.array([r.area_um2 for r in recs])
    return SectionStats(
        section_id=section_id,
        region=region,
        fiber_count=n,
        mean_diameter_um=float(d.mean()),
        std_diameter_um=float(d.std()),  # population convention
        mean_area_um2=float(a.mean()),
        ct_mean_thickness_um=ct_mean_thickness_um,
    )


def classify_abnormal(records: list[FiberRecord],
                      refs: list[ReferenceStats]) -> list[dict]:
    """Flag fibers whose diameter deviates from their region's reference
    mean by strictly more than two reference standard deviations.

    Returns one dict per record: {id, region, diameter_um, abnormal,
    direction} with direction in {"small", "large", None}.  Every record's
    region must have a reference (records tagged "whole" fall back to a
    "whole" reference).
    """
    by_region = {r.region: r for r in refs}
    out = []
    for rec in records:
        ref = by_region.get(rec.region)
        if ref is None:
            ref = by_region.get("whole")
        if ref is None:
            raise KeyError(f"no reference stats for region '{rec.region}'")
        d = rec.feret_min_um
        dev = d - ref.mu_um
        abnormal = abs(dev) > 2.0 * ref.sigma_um
        out.append({
            "id": rec.id,
            "region": rec.region,
            "diameter_um": d,
            "abnormal": bool(abnormal),
            "direction": ("small" if dev < 0 else "large") if abnormal
            else None,
        })
    return out


def kde_diameters(records: list[FiberRecord],
                  bandwidth: float | None = None,
                  points: int = 256):
    """Gaussian KDE of the included-fiber diameters.

    Bandwidth defaults to Silverman's rule 1.06 * std * n^(-1/5) (population
    std).  The curve is sampled on ``points`` positions spanning
    [min - 3h, max + 3h] and integrates to ~1 by the trapezoid rule.
    """
    d = np.array([r.feret_min_um for r in records if not r.excluded])
    if d.size < 2:
        raise ValueError("KDE needs at least 2 fibers")
    if bandwidth is None:
        sd = float(d.std())
        if sd == 0.0:
            sd = max(abs(float(d.mean())) * 1e-3, 1e-6)
        bandwidth = 1.06 * sd * d.size ** (-1.0 / 5.0)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    xs = np.linspace(d.min() - 3.0 * bandwidth, d.max() + 3.0 * bandwidth,
                     points)
    z = (xs[:, None] - d[None, :]) / bandwidth
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (
        d.size * bandwidth * math.sqrt(2.0 * math.pi))
    return xs, dens


def export_scatter(sections: list[SectionStats]) -> str:
    """One CSV row per (section, region): diameter mean/std, count and the
    connective-tissue mean thickness; deterministic ordering."""
    header = ("section_id,region,fiber_count,mean_diameter_um,"
              "std_diameter_um,mean_area_um2,ct_mean_thickness_um,"
              "abnormal_small_count,abnormal_large_count")
    lines = [header]

    def fmt(v):
        return "" if v is None else f"{v:.6g}"

    for s in sorted(sections, key=lambda s: (s.section_id, s.region)):
        lines.append(
            f"{s.section_id},{s.region},{s.fiber_count},"
            f"{fmt(s.mean_diameter_um)},{fmt(s.std_diameter_um)},"
            f"{fmt(s.mean_area_um2)},{fmt(s.ct_mean_thickness_um)},"
            f"{s.abnormal_small_count},{s.abnormal_large_count}")
    return "\n".join(lines) + "\n"
