"""Composite photo-realistic H&E muscle cross-sections with pixel-perfect
ground truth.

The geometry (tessellation, gaps, perimysium bands, tissue extent) fully
determines the instance labels; nuclei and artifact stages only touch RGB,
so toggling them never changes the ground truth.  Everything is a pure
function of SceneParams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.measure import label as _sk_label

from .imgproc import _raster_relabel, distance_transform
from .noise import (FeatureGrid, WarpField, _mix64, derive_seed, value_noise,
                    warp_point, worley_eval)
from .params import SceneParams


class GenerationError(RuntimeError):
    pass


@dataclass
class WeightParams:
    """Loss-weighting parameters: strong border emphasis between close
    instances plus class weights."""

    w0: float = 400.0
    sigma: float = 5.0
    fiber_body_weight: float = 50.0
    background_weight: float = 10.0

    def validate(self):
        if min(self.w0, self.sigma, self.fiber_body_weight,
               self.background_weight) <= 0:
            raise ValueError("weight parameters must be strictly positive")
        return self


@dataclass
class DegradeParams:
    """Synthetic-degradation knobs turning ground truth into a probability
    map that stands in for a trained model's output."""

    blur_sigma: float = 0.0
    noise_amplitude: float = 0.0
    noise_frequency: float = 1.0 / 32.0
    drop_prob: float = 0.0
    seed: int = 0


@dataclass
class RenderedSample:
    rgb: np.ndarray        # (H, W, 3) uint8
    instances: np.ndarray  # (H, W) uint16, 0 = background
    classes: np.ndarray    # (H, W) uint8, 0/1/2 = background/fiber/boundary
    weights: np.ndarray    # (H, W) float64
    meta: dict


def _hash01(*parts: int) -> float:
    return (derive_seed(*parts) >> 11) * 2.0 ** -53


def hsv_to_rgb(h, s, v):
    """Vectorized HSV -> RGB, hue wrapping mod 1; float arrays in [0, 1]."""
    h = np.mod(h, 1.0) * 6.0
    i = np.floor(h)
    f = h - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return r, g, b


def extract_class_map(instances, boundary_halfwidth: int) -> np.ndarray:
    """Three-class map: 0 background, 1 fiber interior, 2 boundary.

    A labeled pixel is boundary iff some pixel within the Chebyshev
    ``boundary_halfwidth`` window carries a different id (including 0).
    The window is clipped at the image border: fibers cut by the frame do
    not grow a boundary ring along the frame edge.
    """
    lab = np.asarray(instances)
    h = int(boundary_halfwidth)
    if h < 0:
        raise ValueError("boundary_halfwidth must be >= 0")
    H, W = lab.shape
    diff = np.zeros(lab.shape, dtype=bool)
    for dy in range(-h, h + 1):
        for dx in range(-h, h + 1):
            if dy == 0 and dx == 0:
                continue
            ay0, ay1 = max(0, -dy), H - max(0, dy)
            ax0, ax1 = max(0, -dx), W - max(0, dx)
            if ay0 >= ay1 or ax0 >= ax1:
                continue
            a = lab[ay0:ay1, ax0:ax1]
            b = lab[ay0 + dy:ay1 + dy, ax0 + dx:ax1 + dx]
            diff[ay0:ay1, ax0:ax1] |= a != b
    out = np.zeros(lab.shape, dtype=np.uint8)
    fg = lab > 0
    out[fg] = 1
    out[fg & diff] = 2
    return out


def compute_weight_map(instances, wp: WeightParams | None = None) -> np.ndarray:
    """Per-pixel loss weights: class weight plus a border term on background.

    w(x) = w_class(x) + w0 * exp(-(d1+d2)^2 / (2 sigma^2)) on background,
    where d1/d2 are the Euclidean distances to the two nearest distinct
    instances, measured so that a background pixel directly adjacent to an
    instance is at distance zero (pixel-center distance minus one).  With
    fewer than two instances the border term is zero.  Terms below 1e-12
    are truncated, which is invisible at any practical output precision.
    """
    wp = (wp or WeightParams()).validate()
    lab = np.asarray(instances)
    fg = lab > 0
    out = np.where(fg, wp.fiber_body_weight, wp.background_weight).astype(
        np.float64)
    n = int(lab.max())
    if n < 2:
        return out
    # beyond this d1+d2 the border term drops under the truncation level
    reach = wp.sigma * math.sqrt(2.0 * math.log(wp.w0 * 1e12))
    pad = int(math.ceil(reach)) + 2
    d1 = np.full(lab.shape, np.inf)
    d2 = np.full(lab.shape, np.inf)
    H, W = lab.shape
    for k, sl in enumerate(ndimage.find_objects(lab), start=1):
        if sl is None:
            continue
        y0 = max(sl[0].start - pad, 0)
        y1 = min(sl[0].stop + pad, H)
        x0 = max(sl[1].start - pad, 0)
        x1 = min(sl[1].stop + pad, W)
        win = (slice(y0, y1), slice(x0, x1))
        dk = ndimage.distance_transform_edt(lab[win] != k)
        dk = np.maximum(dk - 1.0, 0.0)
        cur1 = d1[win]
        cur2 = d2[win]
        closer = dk < cur1
        d2[win] = np.where(closer, cur1, np.minimum(cur2, dk))
        d1[win] = np.where(closer, dk, cur1)
    both = np.isfinite(d1) & np.isfinite(d2) & ~fg
    ds = d1[both] + d2[both]
    term = wp.w0 * np.exp(-(ds * ds) / (2.0 * wp.sigma * wp.sigma))
    out[both] += np.where(term >= 1e-12, term, 0.0)
    return out


def _pixel_grids(params: SceneParams):
    u = params.um_per_px
    xs = (np.arange(params.width, dtype=np.float64) + 0.5) * u
    ys = (np.arange(params.height, dtype=np.float64) + 0.5) * u
    return np.broadcast_to(xs, (params.height, params.width)), \
        np.broadcast_to(ys[:, None], (params.height, params.width))


def _tissue_field(params: SceneParams, X, Y):
    """Smooth scalar field whose sub-level set is the tissue blob; the
    threshold is the exact quantile for the configured area fraction."""
    seed = derive_seed(params.seed, 10)
    rng_vals = [_hash01(seed, i) for i in range(6)]
    w_um = params.width * params.um_per_px
    h_um = params.height * params.um_per_px
    cx = w_um * (0.5 + 0.14 * (rng_vals[0] - 0.5))
    cy = h_um * (0.5 + 0.14 * (rng_vals[1] - 0.5))
    ax = 0.9 + 0.35 * rng_vals[2]
    ay = 0.9 + 0.35 * rng_vals[3]
    p = 2.4 + 1.2 * rng_vals[4]
    nx = np.abs((X - cx) / (0.5 * w_um * ax))
    ny = np.abs((Y - cy) / (0.5 * h_um * ay))
    base = (nx ** p + ny ** p) ** (1.0 / p)
    rough = value_noise(derive_seed(seed, 1), 1.0 / params.tissue.feature_um,
                        2, X, Y)
    return base + params.tissue.edge_noise * rough


def _instance_geometry(params: SceneParams):
    """All label-determining geometry; returns (instances int32, count,
    fiber_metric_um, extras dict for the color pass)."""
    u = params.um_per_px
    X, Y = _pixel_grids(params)

    field = _tissue_field(params, X, Y)
    level = float(np.quantile(field, params.tissue.fraction))
    tissue = field < level

    # coarse tessellation: bands follow cell borders where f2 - f1 is small
    peri_cell = 1000.0 / math.sqrt(params.perimysium.density_per_mm2)
    peri = worley_eval(FeatureGrid(peri_cell, derive_seed(params.seed, 11)),
                       X, Y)
    pm = peri.f2 - peri.f1
    bmin, bmax = params.perimysium.band_um
    bw_noise = value_noise(derive_seed(params.seed, 12), 1.0 / 60.0, 2, X, Y)
    band_w = (0.5 * (bmin + bmax)) * (
        1.0 + params.perimysium.waviness * bw_noise)
    band_w = np.clip(band_w, bmin * 0.4, bmax)
    band = (pm < band_w) & tissue

    # fiber tessellation on domain-warped coordinates
    warp = WarpField(params.warp.frequency, params.warp.amplitude_um,
                     params.warp.octaves, params.warp.seed)
    Xw, Yw = warp_point(warp, X, Y)
    cell = 1000.0 / math.sqrt(params.fiber_density_per_mm2)
    fib = worley_eval(FeatureGrid(cell, derive_seed(params.seed, 13),
                                  params.fiber_jitter), Xw, Yw)
    fm = fib.f2 - fib.f1

    gmin, gmax = params.endomysium_gap_um
    gap_noise = value_noise(derive_seed(params.seed, 14), 1.0 / 90.0, 2, X, Y)
    gap = gmin + (gmax - gmin) * 0.5 * (1.0 + gap_noise)

    # fibers shrink smoothly toward bands and the section edge instead of
    # being knife-cut, so partial slivers stay rare
    band_ramp = params.perimysium.shrink_um * np.clip(
        1.0 - (pm - band_w) / np.maximum(1.2 * band_w, 1e-6), 0.0, 1.0)
    edge_um = distance_transform(tissue) * u
    shrink = params.tissue.edge_shrink_um
    edge_ramp = shrink * np.clip(
        1.0 - edge_um / max(1.5 * shrink, 1e-6), 0.0, 1.0)

    threshold = gap + band_ramp + edge_ramp
    fiber_mask = tissue & ~band & (fm > threshold)

    raw = np.where(fiber_mask, fib.cell_id.astype(np.int64) + 1, 0)
    comp = _sk_label(raw, background=0, connectivity=1)
    count = int(comp.max())
    comp = _raster_relabel(comp, count)

    # prune sub-threshold debris, then compact ids preserving raster order
    min_px = params.min_fiber_area_um2 / (u * u)
    areas = np.bincount(comp.ravel(), minlength=count + 1)
    keep = areas >= max(min_px, 1.0)
    keep[0] = False
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[keep] = np.arange(1, int(keep.sum()) + 1, dtype=np.int32)
    instances = remap[comp]
    count = int(keep.sum())

    # stable per-fiber identity for the stain pass: the Worley cell hash
    # behind each final instance (crop-stable, unlike the compact ids)
    cell_hash = np.zeros(count + 1, dtype=np.int64)
    flat_inst = instances.ravel()
    nz = np.flatnonzero(flat_inst)
    if nz.size:
        ids, idx = np.unique(flat_inst[nz], return_index=True)
        cell_hash[ids] = raw.ravel()[nz[idx]] - 1

    extras = {
        "tissue": tissue, "band": band, "band_w": band_w, "pm": pm,
        "fm": fm, "threshold": threshold, "gap": gap, "X": X, "Y": Y,
        "cell_hash": cell_hash,
    }
    return instances, count, extras


def _stain_image(params: SceneParams, instances, count, extras):
    """Paint the scene in HSV following the compositing order background ->
    endomysium -> per-fiber cytoplasm -> perimysium band; returns float RGB
    in [0, 1]."""
    st = params.stain
    X, Y = extras["X"], extras["Y"]
    tissue = extras["tissue"]
    band = extras["band"]
    fiber = instances > 0

    h = np.full(instances.shape, st.background_hsv[0], dtype=np.float64)
    s = np.full(instances.shape, st.background_hsv[1], dtype=np.float64)
    v = np.full(instances.shape, st.background_hsv[2], dtype=np.float64)

    # gentle illumination falloff keeps large empty areas from looking flat
    illum = value_noise(derive_seed(params.seed, 20), 1.0 / 900.0, 2, X, Y)
    v += 0.015 * illum

    endo = tissue & ~fiber
    grain = value_noise(derive_seed(params.seed, 21), 1.0 / 18.0, 2, X, Y)
    s[endo] = st.endomysium_hsv[1] * (1.0 + 0.25 * grain[endo])
    v[endo] = st.endomysium_hsv[2] + 0.02 * grain[endo]
    h[endo] = st.endomysium_hsv[0]

    if count:
        ch = extras["cell_hash"]
        seed = derive_seed(params.seed, 22)
        jh, js, jv = st.cytoplasm_jitter
        ha = np.array([0.0] + [st.cytoplasm_hsv[0] + jh * (
            2.0 * _hash01(seed, int(c), 1) - 1.0) for c in ch[1:]])
        sa = np.array([0.0] + [st.cytoplasm_hsv[1] + js * (
            2.0 * _hash01(seed, int(c), 2) - 1.0) for c in ch[1:]])
        va = np.array([0.0] + [st.cytoplasm_hsv[2] + jv * (
            2.0 * _hash01(seed, int(c), 3) - 1.0) for c in ch[1:]])
        h[fiber] = ha[instances[fiber]]
        s[fiber] = sa[instances[fiber]]
        v[fiber] = va[instances[fiber]]
        # intra-fiber eosin texture plus a darker rim toward the membrane
        tex = value_noise(derive_seed(params.seed, 23), 1.0 / 8.0, 2, X, Y)
        depth = extras["fm"] - extras["threshold"]
        rim = np.exp(-np.maximum(depth, 0.0) / 5.0)
        v[fiber] += (st.texture_amplitude * tex[fiber]
                     - 0.05 * rim[fiber])
        s[fiber] += 0.4 * st.texture_amplitude * tex[fiber] + 0.06 * rim[fiber]

    peri_px = band & ~fiber
    t = np.clip(1.0 - extras["pm"] / np.maximum(extras["band_w"], 1e-6),
                0.0, 1.0)
    h[peri_px] = st.perimysium_hsv[0]
    s[peri_px] = st.perimysium_hsv[1] * (1.0 - 0.45 * t[peri_px]) \
        + 0.2 * st.endomysium_hsv[1]
    v[peri_px] = st.perimysium_hsv[2] + 0.06 * t[peri_px]

    r, g, b = hsv_to_rgb(h, np.clip(s, 0.0, 1.0), np.clip(v, 0.0, 1.0))
    return np.stack([r, g, b], axis=-1)


def _blend(rgb, y0, y1, x0, x1, alpha, color):
    win = rgb[y0:y1, x0:x1]
    a = alpha[..., None]
    win *= (1.0 - a)
    win += a * np.asarray(color)[None, None, :]


def _paint_nuclei(rgb, params: SceneParams, instances, count):
    """Scatter noise-perturbed elliptical nuclei along fiber rims (plus the
    occasional central nucleus).  RGB only."""
    if count == 0:
        return
    u = params.um_per_px
    nu = params.nuclei
    rng = np.random.default_rng(derive_seed(params.seed, 30))
    edt = ndimage.distance_transform_edt(instances > 0)
    H, W = instances.shape

    flat = instances.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=count + 1)
    offsets = np.cumsum(counts)
    nuc_rgb_base = np.array(hsv_to_rgb(*map(np.asarray, params.stain.nucleus_hsv)))

    rim_limit = 2.0 * nu.radius_um[1] / u
    for k in range(1, count + 1):
        idx = order[offsets[k - 1]:offsets[k]]
        if idx.size == 0:
            continue
        d = edt.ravel()[idx]
        rim = idx[d <= rim_limit]
        perimeter_um = float((d <= 1.5).sum()) * u
        n_nuclei = rng.poisson(nu.rim_density_per_um * perimeter_um)
        picks = []
        if rim.size and n_nuclei:
            picks = list(rng.choice(rim, size=min(n_nuclei, rim.size),
                                    replace=False))
        if rng.random() < nu.central_prob:
            picks.append(int(idx[np.argmax(d)]))
        for flat_pos in picks:
            cy, cx = divmod(int(flat_pos), W)
            radius_px = rng.uniform(*nu.radius_um) / u
            ecc = rng.uniform(*nu.eccentricity)
            ratio = math.sqrt(max(1.0 - ecc * ecc, 0.05))
            a = radius_px / math.sqrt(ratio)
            b = radius_px * math.sqrt(ratio)
            theta = rng.uniform(0.0, math.pi)
            profile = 1.0 + 0.22 * rng.standard_normal(8)
            shade = rng.uniform(0.85, 1.1)
            r_ext = int(math.ceil(max(a, b) * 1.4)) + 2
            y0, y1 = max(cy - r_ext, 0), min(cy + r_ext + 1, H)
            x0, x1 = max(cx - r_ext, 0), min(cx + r_ext + 1, W)
            if y0 >= y1 or x0 >= x1:
                continue
            dy = np.arange(y0, y1, dtype=np.float64)[:, None] - cy
            dx = np.arange(x0, x1, dtype=np.float64)[None, :] - cx
            ct, stn = math.cos(theta), math.sin(theta)
            lx = (dx * ct + dy * stn) / a
            ly = (-dx * stn + dy * ct) / b
            q = lx * lx + ly * ly
            ang = np.arctan2(ly, lx) / (2.0 * math.pi) * 8.0 % 8.0
            i0 = ang.astype(np.int64) % 8
            frac = ang - np.floor(ang)
            wobble = profile[i0] * (1 - frac) + profile[(i0 + 1) % 8] * frac
            alpha = np.clip((wobble - np.sqrt(q)) * 2.5, 0.0, 1.0)
            _blend(rgb, y0, y1, x0, x1, alpha,
                   np.clip(nuc_rgb_base * shade, 0.0, 1.0))


def _paint_artifacts(rgb, params: SceneParams, extras):
    """Freeze holes, folds and stain spills; RGB only."""
    art = params.artifacts
    u = params.um_per_px
    rng = np.random.default_rng(derive_seed(params.seed, 31))
    H, W = rgb.shape[:2]
    X, Y = extras["X"], extras["Y"]
    tissue = extras["tissue"]
    bg = params.stain.background_hsv
    white = np.array(hsv_to_rgb(*map(np.asarray, bg)))

    if rng.random() < art.freeze_hole_prob and tissue.any():
        ty, tx = np.nonzero(tissue)
        for _ in range(1 + rng.poisson(1.0)):
            pick = rng.integers(0, ty.size)
            cy, cx = int(ty[pick]), int(tx[pick])
            region_um = art.freeze_hole_size_um * rng.uniform(0.7, 1.4)
            r_px = int(region_um / u) + 1
            y0, y1 = max(cy - r_px, 0), min(cy + r_px + 1, H)
            x0, x1 = max(cx - r_px, 0), min(cx + r_px + 1, W)
            if y0 >= y1 or x0 >= x1:
                continue
            spots = worley_eval(
                FeatureGrid(region_um * 0.38,
                            derive_seed(params.seed, 32, cy, cx)),
                X[y0:y1, x0:x1], Y[y0:y1, x0:x1])
            dy = (np.arange(y0, y1)[:, None] - cy) * u
            dx = (np.arange(x0, x1)[None, :] - cx) * u
            inside = np.clip(1.0 - np.sqrt(dy * dy + dx * dx) / region_um,
                             0.0, 1.0)
            hole = np.clip(
                (region_um * 0.16 - spots.f1) / (0.12 * region_um), 0.0, 1.0)
            alpha = 0.9 * hole * np.sqrt(inside)
            _blend(rgb, y0, y1, x0, x1, alpha, white)

    if rng.random() < art.fold_prob:
        theta = rng.uniform(0.0, math.pi)
        cx_um = rng.uniform(0.2, 0.8) * W * u
        cy_um = rng.uniform(0.2, 0.8) * H * u
        t = (X - cx_um) * math.cos(theta) + (Y - cy_um) * math.sin(theta)
        wav = value_noise(derive_seed(params.seed, 33), 1.0 / 300.0, 2, X, Y)
        halfw = rng.uniform(6.0, 18.0)
        dist = np.abs(t + 30.0 * wav)
        alpha = np.clip(1.0 - dist / halfw, 0.0, 1.0) * 0.65
        fold_color = np.array(hsv_to_rgb(
            np.asarray(0.94), np.asarray(0.55), np.asarray(0.42)))
        rgb *= (1.0 - alpha[..., None])
        rgb += alpha[..., None] * fold_color[None, None, :]

    if rng.random() < art.spill_prob:
        blob = value_noise(derive_seed(params.seed, 34), 1.0 / 180.0, 2, X, Y)
        alpha = np.clip((blob - 0.35) / 0.3, 0.0, 1.0) * 0.3
        spill_color = np.array(hsv_to_rgb(
            np.asarray(0.90), np.asarray(0.65), np.asarray(0.75)))
        rgb *= (1.0 - alpha[..., None])
        rgb += alpha[..., None] * spill_color[None, None, :]


def render_sample(params: SceneParams,
                  weight_params: WeightParams | None = None) -> RenderedSample:
    """Render one sample: RGB image, instance labels, 3-class map, weight
    map and metadata.  Bit-deterministic in params."""
    params.validate()
    if params.width < 64 or params.height < 64:
        raise GenerationError("width/height must be >= 64")
    instances, count, extras = _instance_geometry(params)
    if count > 65535:
        raise GenerationError(
            f"fiber_count {count} exceeds the 16-bit label format")
    classes = extract_class_map(instances, params.boundary_halfwidth)
    weights = compute_weight_map(instances, weight_params)

    rgb = _stain_image(params, instances, count, extras)
    _paint_nuclei(rgb, params, instances, count)
    _paint_artifacts(rgb, params, extras)
    rgb8 = np.clip(np.floor(rgb * 255.0 + 0.5), 0, 255).astype(np.uint8)

    meta = {
        "seed": params.seed,
        "um_per_px": params.um_per_px,
        "fiber_count": count,
        "params_digest": params.digest(),
    }
    return RenderedSample(rgb8, instances.astype(np.uint16), classes,
                          weights, meta)


def degrade_to_probability(sample: RenderedSample,
                           d: DegradeParams) -> np.ndarray:
    """Turn ground truth into a synthetic fiber-probability map.

    Start from the fiber-interior indicator (class 1), blur with a
    truncated Gaussian (radius int(4*sigma+0.5), reflect boundary), add
    value noise, drop whole instances with probability drop_prob, clamp to
    [0, 1].  Deterministic in (sample, d).
    """
    prob = (sample.classes == 1).astype(np.float64)
    if d.blur_sigma > 0:
        prob = ndimage.gaussian_filter(prob, d.blur_sigma, mode="reflect",
                                       truncate=4.0)
    if d.noise_amplitude != 0:
        H, W = prob.shape
        xs = np.broadcast_to(np.arange(W, dtype=np.float64) + 0.5, (H, W))
        ys = np.broadcast_to((np.arange(H, dtype=np.float64) + 0.5)[:, None],
                             (H, W))
        prob = prob + d.noise_amplitude * value_noise(
            derive_seed(d.seed, 1), d.noise_frequency, 2, xs, ys)
    if d.drop_prob > 0:
        count = int(sample.instances.max())
        dropped = np.zeros(count + 1, dtype=bool)
        for k in range(1, count + 1):
            dropped[k] = _hash01(d.seed, 2, k) < d.drop_prob
        prob = np.where(dropped[sample.instances], 0.0, prob)
    return np.clip(prob, 0.0, 1.0)
