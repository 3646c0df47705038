"""Procedural solid textures, looked up by surface direction.

Every texture is a pure function of ``(TextureSpec, point)``.  Points are
projected to the unit sphere first, so the same pattern wraps any
star-shaped stimulus, including the thin Oval rods.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidArgument
from .noise import NoiseField, fbm_many

TEXTURE_KINDS = ("None", "Dots", "Brownian", "Marble", "Wood", "Leopard")


@dataclass(frozen=True)
class TextureSpec:
    kind: str = "None"
    seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in TEXTURE_KINDS:
            raise InvalidArgument(f"unknown texture kind {self.kind!r}; expected one of {TEXTURE_KINDS}")
        if not self.scale > 0:
            raise InvalidArgument("texture scale must be > 0")


def histogram_equalize(values):
    """Map values to ``rank / (n - 1)`` in [0, 1] using average ranks for ties."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise InvalidArgument("histogram_equalize needs at least one value")
    if v.size == 1:
        return np.array([0.5])
    return (rankdata(v, method="average") - 1.0) / (v.size - 1)


def _fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + 5.0**0.5) * i
    return np.stack([np.cos(theta) * np.sin(phi), np.cos(phi), np.sin(theta) * np.sin(phi)], axis=1)


_REFERENCE_DIRS = _fibonacci_sphere(4096)


def _directions(points):
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    r = np.linalg.norm(p, axis=1, keepdims=True)
    return p / np.where(r > 0, r, 1.0)


def _brownian_field(spec):
    return NoiseField(octaves=5, lacunarity=2.0, gain=0.5, seed=spec.seed, frequency=2.0 * spec.scale)


def brownian_values(spec, points):
    """Raw fBm in [-1, 1] used by the Brownian and Marble textures."""
    return fbm_many(_directions(points), _brownian_field(spec))


_EQ_CACHE = {}


def _equalization_table(spec):
    key = (spec.seed, spec.scale)
    if key not in _EQ_CACHE:
        ref = brownian_values(spec, _REFERENCE_DIRS)
        order = np.argsort(ref, kind="stable")
        _EQ_CACHE[key] = (ref[order], histogram_equalize(ref)[order])
    return _EQ_CACHE[key]


def _rng_for(spec, salt):
    return np.random.default_rng([spec.seed & 0xFFFFFFFF, salt])


def _gray(g):
    return np.repeat(np.clip(g, 0.0, 1.0)[:, None], 3, axis=1)


def _dots(spec, u, base):
    rng = _rng_for(spec, 1)
    k = 48
    centers = _directions(rng.normal(size=(k, 3)))
    radii = rng.uniform(0.08, 0.22, size=(k, 3)) / spec.scale
    rot = np.linalg.qr(rng.normal(size=(k, 3, 3)))[0]
    color = rng.uniform(0.05, 0.35, size=3)
    local = np.einsum("kij,nkj->nki", rot, u[:, None, :] - centers[None, :, :])
    inside = ((local / radii[None]) ** 2).sum(axis=2).min(axis=1) <= 1.0
    out = np.broadcast_to(base, u.shape).copy()
    out[inside] = color
    return out


def _wood(spec, u):
    n = fbm_many(u, NoiseField(4, 2.0, 0.5, spec.seed, 1.5 * spec.scale))
    r = np.sqrt(u[:, 0] ** 2 + u[:, 2] ** 2) * 6.0 * spec.scale + 0.6 * n
    ring = 0.5 + 0.5 * np.cos(2.0 * np.pi * r)
    light = np.array([0.78, 0.58, 0.36])
    dark = np.array([0.45, 0.28, 0.14])
    return dark + ring[:, None] ** 3 * (light - dark)


def _leopard(spec, u):
    rng = _rng_for(spec, 2)
    centers = _directions(rng.normal(size=(90, 3)))
    d = np.sqrt(((u[:, None, :] - centers[None]) ** 2).sum(axis=2)).min(axis=1) * spec.scale
    d = d + 0.04 * fbm_many(u, NoiseField(3, 2.0, 0.5, spec.seed + 7, 6.0 * spec.scale))
    out = np.tile(np.array([0.86, 0.62, 0.28]), (len(u), 1))
    out[d < 0.16] = np.array([0.1, 0.07, 0.04])
    out[d < 0.09] = np.array([0.62, 0.4, 0.16])
    return out


def procedural_texture(spec, points, base_color=(0.6, 0.6, 0.6)):
    """RGB albedo in [0, 1] at each of ``points`` (``(N, 3)`` or a single point)."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    u = _directions(pts)
    base = np.asarray(base_color, dtype=np.float64)
    if spec.kind == "None":
        out = np.broadcast_to(base, u.shape).copy()
    elif spec.kind == "Dots":
        out = _dots(spec, u, base)
    elif spec.kind == "Brownian":
        out = _gray(0.5 + 0.5 * brownian_values(spec, u))
    elif spec.kind == "Marble":
        xs, ys = _equalization_table(spec)
        out = _gray(np.interp(brownian_values(spec, u), xs, ys))
    elif spec.kind == "Wood":
        out = _wood(spec, u)
    else:
        out = _leopard(spec, u)
    return out[0] if single else out
