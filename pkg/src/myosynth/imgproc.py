"""Deterministic binary/label image kernels.

Conventions shared by every operation here (and by their test oracles):

* out-of-image pixels count as background for morphology, hole filling and
  distance transforms;
* foreground connectivity defaults to 8, background/hole connectivity to 4;
* component labels are assigned in raster-scan order of first occurrence.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage.morphology import h_maxima as _h_maxima
from skimage.segmentation import watershed as _watershed

_S4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_S8 = np.ones((3, 3), dtype=bool)


def _as_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError("mask must be 2-D")
    return m.astype(bool, copy=False)


def threshold_map(prob, level: int) -> np.ndarray:
    """Binarize a [0,1] probability map at an 8-bit intensity level.

    A pixel is foreground iff round(255*p) >= level, rounding half up.
    """
    p = np.asarray(prob, dtype=np.float64)
    return np.floor(255.0 * p + 0.5) >= level


def _raster_relabel(lab: np.ndarray, count: int) -> np.ndarray:
    """Remap labels to 1..count ordered by first raster occurrence."""
    if count == 0:
        return lab.astype(np.int32)
    flat = lab.ravel()
    nz = np.flatnonzero(flat)
    first = np.full(count + 1, flat.size, dtype=np.int64)
    # reversed pass keeps the earliest index per label
    np.minimum.at(first, flat[nz], nz)
    order = np.argsort(first[1:], kind="stable")
    remap = np.empty(count + 1, dtype=np.int32)
    remap[0] = 0
    remap[order + 1] = np.arange(1, count + 1, dtype=np.int32)
    return remap[lab]


def connected_components(mask, connectivity: int = 8):
    """Label connected foreground regions; returns (labels, count).

    Labels are 1..count in raster-scan order of each component's first pixel.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    m = _as_mask(mask)
    lab, count = ndimage.label(m, structure=_S4 if connectivity == 4 else _S8)
    return _raster_relabel(lab, count), count


def dilate(mask, n: int) -> np.ndarray:
    """n iterations of 3x3 (8-neighborhood) dilation; border = background."""
    if n < 0:
        raise ValueError("iterations must be >= 0")
    m = _as_mask(mask)
    if n == 0 or not m.any():
        return m.copy()
    return ndimage.binary_dilation(m, structure=_S8, iterations=n)


def erode(mask, n: int) -> np.ndarray:
    """n iterations of 3x3 (8-neighborhood) erosion; border = background."""
    if n < 0:
        raise ValueError("iterations must be >= 0")
    m = _as_mask(mask)
    if n == 0:
        return m.copy()
    return ndimage.binary_erosion(m, structure=_S8, iterations=n,
                                  border_value=0)


def fill_holes(mask) -> np.ndarray:
    """Fill background regions not 4-connected to the image border."""
    m = _as_mask(mask)
    bg, nbg = ndimage.label(~m, structure=_S4)
    if nbg == 0:
        return m.copy()
    border = np.unique(np.concatenate([bg[0], bg[-1], bg[:, 0], bg[:, -1]]))
    keep = np.zeros(nbg + 1, dtype=bool)
    keep[border] = True
    keep[0] = True
    return m | ~keep[bg]


def area_opening(mask, max_area: int) -> np.ndarray:
    """Remove foreground components with area <= max_area pixels."""
    if max_area < 0:
        raise ValueError("max_area must be >= 0")
    m = _as_mask(mask)
    if max_area == 0:
        return m.copy()
    lab, count = ndimage.label(m, structure=_S8)
    if count == 0:
        return m.copy()
    areas = np.bincount(lab.ravel(), minlength=count + 1)
    keep = areas > max_area
    keep[0] = False
    return keep[lab]


def squared_distance_transform(mask) -> np.ndarray:
    """Exact integer squared Euclidean distance to the nearest background
    pixel, with out-of-image treated as background."""
    m = _as_mask(mask)
    if not m.any():
        return np.zeros(m.shape, dtype=np.int64)
    padded = np.pad(m, 1)
    _, (iy, ix) = ndimage.distance_transform_edt(padded, return_indices=True)
    yy, xx = np.indices(padded.shape)
    d2 = (yy - iy).astype(np.int64) ** 2 + (xx - ix).astype(np.int64) ** 2
    return d2[1:-1, 1:-1]


def distance_transform(mask) -> np.ndarray:
    """Exact Euclidean distance to the nearest background pixel (px units).

    Out-of-image counts as background: on an all-foreground image the value
    at the border row/column is 1.
    """
    return np.sqrt(squared_distance_transform(mask).astype(np.float64))


def watershed_split(mask, h: float = 1.0) -> np.ndarray:
    """Split touching convex blobs by a distance-transform watershed.

    Seeds are the regional maxima of the distance field surviving h-maxima
    suppression; flooding runs in descending distance order and the
    watershed-line pixels are assigned to background, so every remaining
    foreground pixel carries exactly one label.
    """
    m = _as_mask(mask)
    if not m.any():
        return np.zeros(m.shape, dtype=np.int32)
    dist = distance_transform(m)
    maxima = _h_maxima(dist, h) & m
    seeds, nseeds = ndimage.label(maxima, structure=_S8)
    seeds = _raster_relabel(seeds, nseeds)
    if nseeds == 0:
        lab, count = connected_components(m)
        return lab
    lab = _watershed(-dist, markers=seeds, mask=m, watershed_line=True)
    return lab.astype(np.int32)


def local_thickness(mask, um_per_px: float = 1.0) -> np.ndarray:
    """Largest-inscribed-disc thickness map, in micrometres.

    A pixel y belongs to the disc seeded at foreground pixel c when
    |y - c| <= EDT(c); the physical diameter of that disc is
    2*(EDT(c) - 0.5), the half-pixel accounting for the material boundary
    running midway between foreground and background pixel centers.
    thickness(y) is the largest such diameter over all covering discs.
    Containment is evaluated in integer squared distances, so the result is
    exactly reproducible.  Background pixels are 0.
    """
    if um_per_px <= 0:
        raise ValueError("um_per_px must be > 0")
    m = _as_mask(mask)
    out = np.zeros(m.shape, dtype=np.float64)
    if not m.any():
        return out
    d2 = squared_distance_transform(m)

    # paint discs in descending radius order; the first disc covering a
    # pixel is therefore the largest one, so each pixel is written once
    ys, xs = np.nonzero(m)
    rc2 = d2[ys, xs]
    order = np.lexsort((xs, ys, -rc2))
    hgt, wid = m.shape
    for k in order:
        cy, cx, cd2 = ys[k], xs[k], rc2[k]
        if out[cy, cx] != 0.0 and cd2 <= 1:
            continue  # unit disc of an already-covered center paints nothing new
        ri = int(np.sqrt(cd2))
        y0, y1 = max(cy - ri, 0), min(cy + ri + 1, hgt)
        x0, x1 = max(cx - ri, 0), min(cx + ri + 1, wid)
        win = out[y0:y1, x0:x1]
        dy = np.arange(y0, y1) - cy
        dx = np.arange(x0, x1) - cx
        disc = (dy[:, None] ** 2 + dx[None, :] ** 2) <= cd2
        paint = disc & (win == 0.0) & m[y0:y1, x0:x1]
        win[paint] = 2.0 * (np.sqrt(float(cd2)) - 0.5)
    return out * um_per_px
