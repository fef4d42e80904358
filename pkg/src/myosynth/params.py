"""Scene parameter model and seeded sampling from configured ranges.

A SceneParams value is a complete, explicit description of one synthetic
tissue image; rendering it twice gives bit-identical output.  Parameters
are drawn per image from a config of [min, max] ranges (or fixed scalars),
deterministically in (config, master seed, index).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .noise import derive_seed


class ConfigError(ValueError):
    """Invalid generator configuration; the message names the field."""


@dataclass
class WarpSpec:
    frequency: float    # 1/um
    amplitude_um: float
    octaves: int = 2
    seed: int = 0


@dataclass
class PerimysiumSpec:
    density_per_mm2: float          # coarse tessellation sites
    band_um: tuple = (5.0, 9.0)     # (min, max) band width
    waviness: float = 0.5
    shrink_um: float = 18.0         # fiber shrink ramp next to a band


@dataclass
class TissueSpec:
    """Extent of the tissue section within the frame (one smooth blob)."""

    fraction: float = 0.75
    edge_noise: float = 0.22
    feature_um: float = 420.0
    edge_shrink_um: float = 20.0    # fiber shrink ramp at the section edge


@dataclass
class StainSpec:
    cytoplasm_hsv: tuple = (0.96, 0.38, 0.84)
    cytoplasm_jitter: tuple = (0.015, 0.06, 0.05)
    endomysium_hsv: tuple = (0.95, 0.10, 0.93)
    perimysium_hsv: tuple = (0.93, 0.15, 0.90)
    nucleus_hsv: tuple = (0.72, 0.55, 0.38)
    background_hsv: tuple = (0.93, 0.03, 0.98)
    texture_amplitude: float = 0.07


@dataclass
class NucleiSpec:
    rim_density_per_um: float = 0.035   # linear density along the fiber rim
    central_prob: float = 0.05
    radius_um: tuple = (1.8, 3.0)
    eccentricity: tuple = (0.3, 0.8)


@dataclass
class ArtifactSpec:
    freeze_hole_prob: float = 0.3
    freeze_hole_size_um: float = 80.0
    fold_prob: float = 0.2
    spill_prob: float = 0.25


@dataclass
class SceneParams:
    seed: int
    width: int = 2048
    height: int = 2048
    um_per_px: float = 0.79
    fiber_density_per_mm2: float = 260.0
    fiber_jitter: float = 0.42
    warp: WarpSpec = field(default_factory=lambda: WarpSpec(1 / 140.0, 4.5))
    endomysium_gap_um: tuple = (2.0, 3.4)
    perimysium: PerimysiumSpec = field(
        default_factory=lambda: PerimysiumSpec(3.0))
    tissue: TissueSpec = field(default_factory=TissueSpec)
    stain: StainSpec = field(default_factory=StainSpec)
    nuclei: NucleiSpec = field(default_factory=NucleiSpec)
    artifacts: ArtifactSpec = field(default_factory=ArtifactSpec)
    boundary_halfwidth: int = 2
    min_fiber_area_um2: float = 250.0

    def validate(self):
        if self.um_per_px <= 0:
            raise ConfigError("um_per_px must be > 0")
        if self.width < 64 or self.height < 64:
            raise ConfigError("width/height must be >= 64")
        for name in ("endomysium_gap_um",):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: min > max")
        for name, value in (("fiber_jitter", self.fiber_jitter),
                            ("tissue.fraction", self.tissue.fraction)):
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        for name, value in (
                ("nuclei.central_prob", self.nuclei.central_prob),
                ("artifacts.freeze_hole_prob",
                 self.artifacts.freeze_hole_prob),
                ("artifacts.fold_prob", self.artifacts.fold_prob),
                ("artifacts.spill_prob", self.artifacts.spill_prob)):
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.nuclei.radius_um[0] > self.nuclei.radius_um[1]:
            raise ConfigError("nuclei.radius_um: min > max")
        if self.perimysium.band_um[0] > self.perimysium.band_um[1]:
            raise ConfigError("perimysium.band_um: min > max")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def params_from_dict(d: dict) -> SceneParams:
    def tup(v):
        return tuple(v) if isinstance(v, (list, tuple)) else v

    p = SceneParams(
        seed=d["seed"], width=d["width"], height=d["height"],
        um_per_px=d["um_per_px"],
        fiber_density_per_mm2=d["fiber_density_per_mm2"],
        fiber_jitter=d["fiber_jitter"],
        warp=WarpSpec(**d["warp"]),
        endomysium_gap_um=tup(d["endomysium_gap_um"]),
        perimysium=PerimysiumSpec(
            density_per_mm2=d["perimysium"]["density_per_mm2"],
            band_um=tup(d["perimysium"]["band_um"]),
            waviness=d["perimysium"]["waviness"],
            shrink_um=d["perimysium"]["shrink_um"]),
        tissue=TissueSpec(**d["tissue"]),
        stain=StainSpec(**{k: tup(v) for k, v in d["stain"].items()}),
        nuclei=NucleiSpec(
            rim_density_per_um=d["nuclei"]["rim_density_per_um"],
            central_prob=d["nuclei"]["central_prob"],
            radius_um=tup(d["nuclei"]["radius_um"]),
            eccentricity=tup(d["nuclei"]["eccentricity"])),
        artifacts=ArtifactSpec(**d["artifacts"]),
        boundary_halfwidth=d["boundary_halfwidth"],
        min_fiber_area_um2=d["min_fiber_area_um2"],
    )
    return p


# Default sampling ranges.  Fiber and perimysium spacing are configured in
# pixels: the tessellation is defined in scene micrometres but its pitch
# tracks the sampled resolution, keeping per-image fiber counts and
# pixel-space fiber sizes stable across the wide um/px distribution
# (matching a dataset whose resolution was calibrated after generation).
DEFAULT_CONFIG: dict = {
    "width": 2048,
    "height": 2048,
    "um_per_px": {"mean": 0.79, "std": 0.22, "clip": [0.3, 1.5]},
    "fiber_pitch_px": [56.0, 68.0],
    "fiber_jitter": [0.35, 0.5],
    "warp_amplitude_px": [3.0, 7.5],
    "warp_wavelength_px": [130.0, 230.0],
    "warp_octaves": 2,
    "endomysium_gap_um": {"min": [1.8, 2.8], "extra": [1.0, 2.2]},
    "perimysium_pitch_px": [520.0, 880.0],
    "perimysium_band_um": {"min": [5.0, 7.5], "extra": [1.5, 5.0]},
    "perimysium_waviness": [0.3, 0.7],
    "perimysium_shrink_um": [14.0, 22.0],
    "tissue_fraction": [0.68, 0.84],
    "tissue_edge_noise": [0.15, 0.3],
    "tissue_feature_px": [380.0, 650.0],
    "tissue_edge_shrink_um": [14.0, 24.0],
    "stain": {
        "cytoplasm_h": [0.93, 0.99],
        "cytoplasm_s": [0.30, 0.46],
        "cytoplasm_v": [0.78, 0.90],
        "cytoplasm_jitter_h": [0.008, 0.02],
        "cytoplasm_jitter_s": [0.03, 0.08],
        "cytoplasm_jitter_v": [0.03, 0.07],
        "endomysium_s": [0.06, 0.14],
        "endomysium_v": [0.90, 0.96],
        "perimysium_s": [0.10, 0.20],
        "perimysium_v": [0.86, 0.93],
        "nucleus_h": [0.68, 0.76],
        "nucleus_s": [0.45, 0.62],
        "nucleus_v": [0.30, 0.45],
        "background_s": [0.01, 0.05],
        "background_v": [0.96, 1.0],
        "texture_amplitude": [0.04, 0.10],
    },
    "nuclei_rim_density_per_um": [0.02, 0.05],
    "nuclei_central_prob": [0.02, 0.10],
    "nuclei_radius_um": [1.8, 3.0],
    "nuclei_eccentricity": [0.3, 0.8],
    "artifact_freeze_hole_prob": 0.3,
    "artifact_freeze_hole_size_um": [50.0, 110.0],
    "artifact_fold_prob": 0.2,
    "artifact_spill_prob": 0.25,
    "boundary_halfwidth": 2,
    "min_fiber_area_um2": 250.0,
}

_RANGE_KEYS = {
    "fiber_pitch_px", "fiber_jitter", "warp_amplitude_px",
    "warp_wavelength_px", "perimysium_pitch_px", "perimysium_waviness",
    "perimysium_shrink_um", "tissue_fraction", "tissue_edge_noise",
    "tissue_feature_px", "tissue_edge_shrink_um",
    "nuclei_rim_density_per_um", "nuclei_central_prob", "nuclei_radius_um",
    "nuclei_eccentricity", "artifact_freeze_hole_prob",
    "artifact_freeze_hole_size_um", "artifact_fold_prob",
    "artifact_spill_prob",
}


def merge_config(overrides: dict | None) -> dict:
    """Overlay user overrides on the defaults, rejecting unknown keys."""
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if not overrides:
        return cfg
    for key, value in overrides.items():
        if key not in cfg:
            raise ConfigError(f"unknown config field '{key}'")
        if isinstance(cfg[key], dict) and isinstance(value, dict):
            for sub, sval in value.items():
                if sub not in cfg[key]:
                    raise ConfigError(f"unknown config field '{key}.{sub}'")
                cfg[key][sub] = sval
        else:
            cfg[key] = value
    return cfg


def _draw(rng, cfg, key):
    """Uniform draw from a [min, max] range; scalars pass through."""
    value = cfg[key]
    if isinstance(value, (int, float)):
        return float(value)
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{key} must be a scalar or [min, max]")
    lo, hi = float(value[0]), float(value[1])
    if lo > hi:
        raise ConfigError(f"{key}: min > max")
    if lo == hi:
        return lo
    return float(rng.uniform(lo, hi))


def _draw_um_per_px(rng, spec) -> float:
    if isinstance(spec, (int, float)):
        if spec <= 0:
            raise ConfigError("um_per_px must be > 0")
        return float(spec)
    mean, std = float(spec["mean"]), float(spec["std"])
    lo, hi = (float(v) for v in spec.get("clip", [0.3, 1.5]))
    if lo > hi or lo <= 0:
        raise ConfigError("um_per_px.clip: invalid bounds")
    if std == 0:
        return min(max(mean, lo), hi)
    # rejection sampling keeps the truncated-normal shape exactly
    for _ in range(10_000):
        v = rng.normal(mean, std)
        if lo <= v <= hi:
            return float(v)
    raise ConfigError("um_per_px: clip window rejects the distribution")


def sample_params(config: dict | None, master_seed: int,
                  index: int) -> SceneParams:
    """Draw one SceneParams deterministically from (config, seed, index)."""
    cfg = merge_config(config)
    scene_seed = derive_seed(master_seed, index)
    rng = np.random.default_rng(derive_seed(master_seed, index, 0xA11CE))
    u = _draw_um_per_px(rng, cfg["um_per_px"])

    pitch_px = _draw(rng, cfg, "fiber_pitch_px")
    cell_um = pitch_px * u
    peri_pitch_px = _draw(rng, cfg, "perimysium_pitch_px")
    peri_cell_um = peri_pitch_px * u

    gmin = _draw(rng, cfg["endomysium_gap_um"], "min")
    gmax = gmin + _draw(rng, cfg["endomysium_gap_um"], "extra")
    bmin = _draw(rng, cfg["perimysium_band_um"], "min")
    bmax = bmin + _draw(rng, cfg["perimysium_band_um"], "extra")

    st = cfg["stain"]
    stain = StainSpec(
        cytoplasm_hsv=(_draw(rng, st, "cytoplasm_h"),
                       _draw(rng, st, "cytoplasm_s"),
                       _draw(rng, st, "cytoplasm_v")),
        cytoplasm_jitter=(_draw(rng, st, "cytoplasm_jitter_h"),
                          _draw(rng, st, "cytoplasm_jitter_s"),
                          _draw(rng, st, "cytoplasm_jitter_v")),
        endomysium_hsv=(0.95, _draw(rng, st, "endomysium_s"),
                        _draw(rng, st, "endomysium_v")),
        perimysium_hsv=(0.93, _draw(rng, st, "perimysium_s"),
                        _draw(rng, st, "perimysium_v")),
        nucleus_hsv=(_draw(rng, st, "nucleus_h"),
                     _draw(rng, st, "nucleus_s"),
                     _draw(rng, st, "nucleus_v")),
        background_hsv=(0.93, _draw(rng, st, "background_s"),
                        _draw(rng, st, "background_v")),
        texture_amplitude=_draw(rng, st, "texture_amplitude"),
    )

    wavelength_px = _draw(rng, cfg, "warp_wavelength_px")
    params = SceneParams(
        seed=scene_seed,
        width=int(cfg["width"]),
        height=int(cfg["height"]),
        um_per_px=u,
        fiber_density_per_mm2=1e6 / (cell_um * cell_um),
        fiber_jitter=_draw(rng, cfg, "fiber_jitter"),
        warp=WarpSpec(frequency=1.0 / (wavelength_px * u),
                      amplitude_um=_draw(rng, cfg, "warp_amplitude_px") * u,
                      octaves=int(cfg["warp_octaves"]),
                      seed=derive_seed(scene_seed, 1)),
        endomysium_gap_um=(gmin, gmax),
        perimysium=PerimysiumSpec(
            density_per_mm2=1e6 / (peri_cell_um * peri_cell_um),
            band_um=(bmin, bmax),
            waviness=_draw(rng, cfg, "perimysium_waviness"),
            shrink_um=_draw(rng, cfg, "perimysium_shrink_um")),
        tissue=TissueSpec(
            fraction=_draw(rng, cfg, "tissue_fraction"),
            edge_noise=_draw(rng, cfg, "tissue_edge_noise"),
            feature_um=_draw(rng, cfg, "tissue_feature_px") * u,
            edge_shrink_um=_draw(rng, cfg, "tissue_edge_shrink_um")),
        stain=stain,
        nuclei=NucleiSpec(
            rim_density_per_um=_draw(rng, cfg, "nuclei_rim_density_per_um"),
            central_prob=_draw(rng, cfg, "nuclei_central_prob"),
            radius_um=tuple(sorted((_draw(rng, cfg, "nuclei_radius_um"),
                                    _draw(rng, cfg, "nuclei_radius_um")))),
            eccentricity=tuple(sorted((_draw(rng, cfg, "nuclei_eccentricity"),
                                       _draw(rng, cfg,
                                             "nuclei_eccentricity"))))),
        artifacts=ArtifactSpec(
            freeze_hole_prob=_draw(rng, cfg, "artifact_freeze_hole_prob"),
            freeze_hole_size_um=_draw(rng, cfg,
                                      "artifact_freeze_hole_size_um"),
            fold_prob=_draw(rng, cfg, "artifact_fold_prob"),
            spill_prob=_draw(rng, cfg, "artifact_spill_prob")),
        boundary_halfwidth=int(cfg["boundary_halfwidth"]),
        min_fiber_area_um2=float(cfg["min_fiber_area_um2"]),
    )
    return params.validate()
