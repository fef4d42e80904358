"""Deterministic 2D procedural noise primitives.

All functions are pure: results depend only on (seed, inputs), never on
evaluation order, array layout or thread count.  The feature-point lattice
behind the cellular noise is counter-based, so any grid cell can be queried
independently and repeatably.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_INV53 = 2.0 ** -53


@numba.njit(cache=True, inline="always")
def _mix64(x):
    # splitmix64 finalizer
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@numba.njit(cache=True, inline="always")
def _cell_hash(seed, i, j):
    # counter-based mix of (seed, i, j); i/j may be negative
    h = _mix64(np.uint64(seed) ^ _GOLDEN)
    h = _mix64(h ^ np.uint64(np.int64(i)))
    return _mix64(h ^ np.uint64(np.int64(j)))


def mix64(x: int) -> int:
    """64-bit splitmix finalizer (python-int convenience wrapper)."""
    return int(_mix64(np.uint64(x & 0xFFFFFFFFFFFFFFFF)))


def derive_seed(*parts: int) -> int:
    """Derive an independent 64-bit stream seed from integer parts.

    Chained splitmix mixing: adding later parts never perturbs streams
    derived from earlier prefixes.
    """
    h = int(_GOLDEN)
    for p in parts:
        h = int(_mix64(np.uint64(h) ^ np.uint64(int(p) & 0xFFFFFFFFFFFFFFFF)))
    return h


@dataclass(frozen=True)
class FeatureGrid:
    """Jittered lattice of feature points, one per cell.

    The point of cell (i, j) is a pure function of (seed, i, j): cell center
    displaced by at most ``jitter * cell_size`` in each axis.  Metric is
    Euclidean.
    """

    cell_size: float
    seed: int
    jitter: float = 0.45

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be > 0")
        if not 0.0 <= self.jitter <= 1.0:
            raise ValueError("jitter must be in [0, 1]")

    def feature_point(self, i: int, j: int) -> tuple[float, float]:
        """Feature point of cell (i, j) in scene units."""
        h = _cell_hash(np.uint64(self.seed), np.int64(i), np.int64(j))
        ox = float(h >> np.uint64(11)) * _INV53
        h2 = _mix64(h ^ _GOLDEN)
        oy = float(h2 >> np.uint64(11)) * _INV53
        fx = (i + 0.5 + (2.0 * ox - 1.0) * self.jitter) * self.cell_size
        fy = (j + 0.5 + (2.0 * oy - 1.0) * self.jitter) * self.cell_size
        return fx, fy

    def cell_id(self, i: int, j: int) -> int:
        """Stable 32-bit id of the feature point of cell (i, j)."""
        h = _cell_hash(np.uint64(self.seed), np.int64(i), np.int64(j))
        return int(h & np.uint64(0xFFFFFFFF))


@dataclass
class WorleySample:
    """Nearest/second-nearest feature distances (f1 <= f2) plus the stable
    id and position of the nearest point.  Fields are arrays broadcast to
    the query shape."""

    f1: np.ndarray
    f2: np.ndarray
    cell_id: np.ndarray
    nearest_x: np.ndarray
    nearest_y: np.ndarray


@numba.njit(cache=True)
def _worley_kernel(xs, ys, cell_size, seed, jitter, f1, f2, cid, nx, ny):
    inv = 1.0 / cell_size
    for k in range(xs.size):
        px = xs[k]
        py = ys[k]
        ci = int(math.floor(px * inv))
        cj = int(math.floor(py * inv))
        b1 = np.inf
        b2 = np.inf
        bid = np.uint32(0)
        bx = 0.0
        by = 0.0
        # 5x5 window: exact F1/F2 for jitter <= 1 under the Euclidean metric
        for dj in range(-2, 3):
            for di in range(-2, 3):
                i = ci + di
                j = cj + dj
                h = _cell_hash(seed, np.int64(i), np.int64(j))
                ox = float(h >> np.uint64(11)) * _INV53
                h2 = _mix64(h ^ _GOLDEN)
                oy = float(h2 >> np.uint64(11)) * _INV53
                fx = (i + 0.5 + (2.0 * ox - 1.0) * jitter) * cell_size
                fy = (j + 0.5 + (2.0 * oy - 1.0) * jitter) * cell_size
                dx = px - fx
                dy = py - fy
                d2 = dx * dx + dy * dy
                if d2 < b1:
                    b2 = b1
                    b1 = d2
                    bid = np.uint32(h & np.uint64(0xFFFFFFFF))
                    bx = fx
                    by = fy
                elif d2 < b2:
                    b2 = d2
        f1[k] = math.sqrt(b1)
        f2[k] = math.sqrt(b2)
        cid[k] = bid
        nx[k] = bx
        ny[k] = by


def worley_eval(grid: FeatureGrid, x, y) -> WorleySample:
    """Evaluate cellular noise at points (x, y) given in scene units.

    f1/f2 are the exact nearest/second-nearest Euclidean distances over the
    5x5 cell neighborhood around each query (exhaustive within the window),
    which is globally exact for jitter <= 1.
    """
    xs = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    ys = np.ascontiguousarray(np.asarray(y, dtype=np.float64))
    xs, ys = np.broadcast_arrays(xs, ys)
    shape = xs.shape
    xs = np.ascontiguousarray(xs).ravel()
    ys = np.ascontiguousarray(ys).ravel()
    f1 = np.empty(xs.size)
    f2 = np.empty(xs.size)
    cid = np.empty(xs.size, dtype=np.uint32)
    nx = np.empty(xs.size)
    ny = np.empty(xs.size)
    _worley_kernel(xs, ys, float(grid.cell_size), np.uint64(grid.seed),
                   float(grid.jitter), f1, f2, cid, nx, ny)
    return WorleySample(f1.reshape(shape), f2.reshape(shape),
                        cid.reshape(shape), nx.reshape(shape),
                        ny.reshape(shape))


@numba.njit(cache=True, inline="always")
def _lattice_value(seed, i, j):
    # lattice corner value in [-1, 1)
    h = _cell_hash(seed, i, j)
    return 2.0 * (float(h >> np.uint64(11)) * _INV53) - 1.0


@numba.njit(cache=True)
def _value_noise_kernel(xs, ys, seed, frequency, octaves, out):
    norm = 0.0
    amp = 1.0
    for _ in range(octaves):
        norm += amp
        amp *= 0.5
    for k in range(xs.size):
        total = 0.0
        amp = 1.0
        freq = frequency
        for o in range(octaves):
            oseed = _mix64(seed ^ np.uint64(o + 1))
            px = xs[k] * freq
            py = ys[k] * freq
            i = np.int64(math.floor(px))
            j = np.int64(math.floor(py))
            tx = px - i
            ty = py - j
            # smoothstep weights give C1 continuity across cell edges
            sx = tx * tx * (3.0 - 2.0 * tx)
            sy = ty * ty * (3.0 - 2.0 * ty)
            v00 = _lattice_value(oseed, i, j)
            v10 = _lattice_value(oseed, i + 1, j)
            v01 = _lattice_value(oseed, i, j + 1)
            v11 = _lattice_value(oseed, i + 1, j + 1)
            vx0 = v00 + (v10 - v00) * sx
            vx1 = v01 + (v11 - v01) * sx
            total += amp * (vx0 + (vx1 - vx0) * sy)
            amp *= 0.5
            freq *= 2.0
        out[k] = total / norm


def value_noise(seed: int, frequency: float, octaves: int, x, y) -> np.ndarray:
    """Smooth (C1) lattice value noise in [-1, 1], deterministic in (seed, p).

    With octaves=1 the value at integer lattice points (x*frequency integer)
    equals the lattice hash value directly.
    """
    if octaves < 1:
        raise ValueError("octaves must be >= 1")
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    xs, ys = np.broadcast_arrays(xs, ys)
    shape = xs.shape
    xs = np.ascontiguousarray(xs).ravel()
    ys = np.ascontiguousarray(ys).ravel()
    out = np.empty(xs.size)
    _value_noise_kernel(xs, ys, np.uint64(seed), float(frequency),
                        int(octaves), out)
    return out.reshape(shape)


@dataclass(frozen=True)
class WarpField:
    """Smooth displacement field; |warp| <= amplitude everywhere."""

    frequency: float
    amplitude: float
    octaves: int = 2
    seed: int = 0


_SQRT2 = math.sqrt(2.0)


def warp_point(w: WarpField, x, y):
    """Displace points by two decorrelated value noises.

    Component noises are scaled by 1/sqrt(2) so the Euclidean displacement
    magnitude never exceeds ``amplitude`` (the per-octave gain sum of the
    normalized noise is 1).
    """
    if w.amplitude == 0.0:
        xs = np.asarray(x, dtype=np.float64)
        ys = np.asarray(y, dtype=np.float64)
        xs, ys = np.broadcast_arrays(xs, ys)
        return xs.copy(), ys.copy()
    nx = value_noise(derive_seed(w.seed, 0x57), w.frequency, w.octaves, x, y)
    ny = value_noise(derive_seed(w.seed, 0x58), w.frequency, w.octaves, x, y)
    s = w.amplitude / _SQRT2
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    return xs + nx * s, ys + ny * s


@dataclass(frozen=True)
class ColorRamp:
    """Piecewise-linear sRGB ramp over strictly increasing stop positions."""

    stops: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.stops) < 1:
            raise ValueError("ColorRamp needs at least one stop")
        pos = [s[0] for s in self.stops]
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("stop positions must be strictly increasing")


def ramp_map(r: ColorRamp, t) -> np.ndarray:
    """Map t (clamped to [0,1]) through the ramp; rounds half up to uint8."""
    ts = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    pos = np.array([s[0] for s in r.stops])
    cols = np.array([s[1] for s in r.stops], dtype=np.float64)
    out = np.empty(ts.shape + (3,))
    idx = np.clip(np.searchsorted(pos, ts, side="right") - 1, 0,
                  len(pos) - 2 if len(pos) > 1 else 0)
    if len(pos) == 1:
        out[...] = cols[0]
    else:
        p0 = pos[idx]
        p1 = pos[idx + 1]
        span = np.where(p1 > p0, p1 - p0, 1.0)
        frac = np.clip((ts - p0) / span, 0.0, 1.0)
        # below the first / above the last stop: hold the end color
        frac = np.where(ts <= pos[0], 0.0, frac)
        frac = np.where(ts >= pos[-1], 1.0, frac)
        idx = np.where(ts >= pos[-1], len(pos) - 2, idx)
        out = cols[idx] + (cols[idx + 1] - cols[idx]) * frac[..., None]
    return np.floor(out + 0.5).astype(np.uint8)
