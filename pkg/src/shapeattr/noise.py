"""Seeded lattice value noise and its fractal Brownian sum.

The basis is value noise: a pseudo-random value in [-1, 1] at every point of
the integer lattice (a 32-bit integer hash of the lattice coordinates and the
seed), blended with smoothstep-weighted trilinear interpolation.  Because the
blend is convex, every octave and hence the normalized fBm sum lie in [-1, 1].
"""

from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit
from .errors import InvalidArgument

_MASK = 0xFFFFFFFF
# every multiplier is < 2**31 so products of 32-bit values fit in int64
_K1, _K2, _K3 = 0x27D4EB2D, 0x165667B1, 0x3C6EF372
_F1, _F2 = 0x2C1B3C6D, 0x297A2D39


@dataclass(frozen=True)
class NoiseField:
    """Parameters of a fractal Brownian field.

    ``frequency`` scales the input point before the first octave; the
    remaining fields are the usual octave count, per-octave frequency
    multiplier and per-octave amplitude multiplier.
    """

    octaves: int = 5
    lacunarity: float = 2.0
    gain: float = 0.5
    seed: int = 0
    frequency: float = 2.0

    def __post_init__(self):
        if int(self.octaves) != self.octaves or self.octaves < 1:
            raise InvalidArgument(f"octaves must be an integer >= 1, got {self.octaves}")
        if not self.lacunarity > 1:
            raise InvalidArgument(f"lacunarity must be > 1, got {self.lacunarity}")
        if not 0 < self.gain < 1:
            raise InvalidArgument(f"gain must be in (0, 1), got {self.gain}")
        if not self.frequency > 0:
            raise InvalidArgument(f"frequency must be > 0, got {self.frequency}")


# ---------------------------------------------------------------- numpy path


def _hash_np(ix, iy, iz, seed):
    h = np.full(ix.shape, seed & _MASK, dtype=np.int64)
    h = ((h ^ (ix & _MASK)) * _K1) & _MASK
    h = ((h ^ (iy & _MASK)) * _K2) & _MASK
    h = ((h ^ (iz & _MASK)) * _K3) & _MASK
    h ^= h >> 15
    h = (h * _F1) & _MASK
    h ^= h >> 12
    h = (h * _F2) & _MASK
    h ^= h >> 15
    return h.astype(np.float64) / 4294967295.0 * 2.0 - 1.0


def _value_noise_np(pts, seed):
    fl = np.floor(pts)
    i = fl.astype(np.int64)
    f = pts - fl
    u = f * f * (3.0 - 2.0 * f)
    ix, iy, iz = i[:, 0], i[:, 1], i[:, 2]
    ux, uy, uz = u[:, 0], u[:, 1], u[:, 2]
    c000 = _hash_np(ix, iy, iz, seed)
    c100 = _hash_np(ix + 1, iy, iz, seed)
    c010 = _hash_np(ix, iy + 1, iz, seed)
    c110 = _hash_np(ix + 1, iy + 1, iz, seed)
    c001 = _hash_np(ix, iy, iz + 1, seed)
    c101 = _hash_np(ix + 1, iy, iz + 1, seed)
    c011 = _hash_np(ix, iy + 1, iz + 1, seed)
    c111 = _hash_np(ix + 1, iy + 1, iz + 1, seed)
    x00 = c000 + ux * (c100 - c000)
    x10 = c010 + ux * (c110 - c010)
    x01 = c001 + ux * (c101 - c001)
    x11 = c011 + ux * (c111 - c011)
    y0 = x00 + uy * (x10 - x00)
    y1 = x01 + uy * (x11 - x01)
    return y0 + uz * (y1 - y0)


def _fbm_np(points, octaves, lacunarity, gain, seed, frequency):
    total = np.zeros(points.shape[0])
    amp = 1.0
    freq = frequency
    norm = 0.0
    for _ in range(octaves):
        total += amp * _value_noise_np(points * freq, seed)
        norm += amp
        amp *= gain
        freq *= lacunarity
    return total / norm


# ---------------------------------------------------------------- numba path


@njit(cache=True)
def _hash_nb(ix, iy, iz, seed):
    h = seed & _MASK
    h = ((h ^ (ix & _MASK)) * _K1) & _MASK
    h = ((h ^ (iy & _MASK)) * _K2) & _MASK
    h = ((h ^ (iz & _MASK)) * _K3) & _MASK
    h ^= h >> 15
    h = (h * _F1) & _MASK
    h ^= h >> 12
    h = (h * _F2) & _MASK
    h ^= h >> 15
    return h / 4294967295.0 * 2.0 - 1.0


@njit(cache=True)
def _value_noise_nb(x, y, z, seed):
    fx = np.floor(x)
    fy = np.floor(y)
    fz = np.floor(z)
    ix = np.int64(fx)
    iy = np.int64(fy)
    iz = np.int64(fz)
    tx = x - fx
    ty = y - fy
    tz = z - fz
    ux = tx * tx * (3.0 - 2.0 * tx)
    uy = ty * ty * (3.0 - 2.0 * ty)
    uz = tz * tz * (3.0 - 2.0 * tz)
    c000 = _hash_nb(ix, iy, iz, seed)
    c100 = _hash_nb(ix + 1, iy, iz, seed)
    c010 = _hash_nb(ix, iy + 1, iz, seed)
    c110 = _hash_nb(ix + 1, iy + 1, iz, seed)
    c001 = _hash_nb(ix, iy, iz + 1, seed)
    c101 = _hash_nb(ix + 1, iy, iz + 1, seed)
    c011 = _hash_nb(ix, iy + 1, iz + 1, seed)
    c111 = _hash_nb(ix + 1, iy + 1, iz + 1, seed)
    x00 = c000 + ux * (c100 - c000)
    x10 = c010 + ux * (c110 - c010)
    x01 = c001 + ux * (c101 - c001)
    x11 = c011 + ux * (c111 - c011)
    y0 = x00 + uy * (x10 - x00)
    y1 = x01 + uy * (x11 - x01)
    return y0 + uz * (y1 - y0)


@njit(cache=True, nogil=True)
def _fbm_nb(points, octaves, lacunarity, gain, seed, frequency):
    n = points.shape[0]
    out = np.zeros(n)
    norm = 0.0
    amp = 1.0
    for _ in range(octaves):
        norm += amp
        amp *= gain
    for i in range(n):
        total = 0.0
        amp = 1.0
        freq = frequency
        for _ in range(octaves):
            total += amp * _value_noise_nb(
                points[i, 0] * freq, points[i, 1] * freq, points[i, 2] * freq, seed
            )
            amp *= gain
            freq *= lacunarity
        out[i] = total / norm
    return out


# ---------------------------------------------------------------- public API


def fbm_many(points, field, backend=None):
    """Evaluate the fBm field at an ``(N, 3)`` array of points."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    use_numba = _accel.USE_NUMBA if backend is None else backend == "numba"
    args = (int(field.octaves), float(field.lacunarity), float(field.gain), int(field.seed), float(field.frequency))
    if use_numba:
        return _fbm_nb(pts, *args)
    return _fbm_np(pts, *args)


def fbm(point, field):
    """fBm value in [-1, 1] at a single 3D point."""
    return float(fbm_many(np.asarray(point, dtype=np.float64)[None, :], field)[0])


def value_noise(points, seed):
    """Single-octave basis noise at an ``(N, 3)`` array of points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return _value_noise_np(pts, int(seed))
