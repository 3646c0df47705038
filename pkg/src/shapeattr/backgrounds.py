"""Procedural open-space backgrounds (skies over ground, rooms, soft gradients).

The ten standard backgrounds ship as PNG files generated by
:func:`generate_background` with seeds 0-9.  Training uses other seeds so the
standard set stays held out.
"""

from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from .noise import NoiseField, fbm_many

N_STANDARD = 10
STANDARD_SIZE = (144, 144)
TRAIN_SEED_OFFSET = 1000


def _lowfreq(h, w, seed, freq=3.0, octaves=3):
    yy, xx = np.mgrid[0:h, 0:w]
    pts = np.stack([xx.ravel() / w, yy.ravel() / h, np.full(h * w, 0.37 * (seed % 97))], axis=1)
    return fbm_many(pts, NoiseField(octaves, 2.0, 0.5, seed, freq)).reshape(h, w)


def generate_background(seed, size=STANDARD_SIZE):
    """Deterministic ``(H, W, 3)`` background image in [0, 1]."""
    w, h = size
    rng = np.random.default_rng([0xB6, int(seed) & 0xFFFFFFFF])
    kind = int(seed) % 5
    y = (np.arange(h)[:, None] + 0.5) / h * np.ones((1, w))
    x = np.ones((h, 1)) * (np.arange(w)[None, :] + 0.5) / w
    n = _lowfreq(h, w, int(seed))
    if kind == 0:  # outdoor: sky over fields
        horizon = rng.uniform(0.45, 0.7) + 0.04 * np.sin(6 * x + rng.uniform(0, 6))
        sky_top = rng.uniform([0.35, 0.5, 0.75], [0.55, 0.7, 0.95])
        sky_bot = rng.uniform([0.7, 0.78, 0.85], [0.9, 0.9, 0.97])
        ground = rng.uniform([0.25, 0.4, 0.15], [0.45, 0.6, 0.3])
        t = np.clip(y / horizon, 0, 1)[..., None]
        sky = sky_top + t * (sky_bot - sky_top)
        gnd = ground * (1.0 + 0.35 * n[..., None])
        img = np.where((y < horizon)[..., None], sky, gnd)
    elif kind == 1:  # indoor: wall and floor
        floor_line = rng.uniform(0.55, 0.75)
        wall = rng.uniform(0.55, 0.9, size=3)
        floor = rng.uniform(0.25, 0.55, size=3)
        img = np.where((y < floor_line)[..., None], wall * (1.0 + 0.08 * n[..., None]), floor * (1.0 + 0.25 * n[..., None]))
        edge = np.abs(y - floor_line) < 0.015
        img[edge] = img[edge] * 0.6
    elif kind == 2:  # vertical gradient
        a, b = rng.uniform(0.2, 0.9, size=(2, 3))
        img = a + y[..., None] * (b - a) + 0.05 * n[..., None]
    elif kind == 3:  # soft coloured clouds
        a, b = rng.uniform(0.2, 0.9, size=(2, 3))
        t = (0.5 + 0.9 * n)[..., None]
        img = a + np.clip(t, 0, 1) * (b - a)
    else:  # diagonal dusk gradient over a dark ground strip
        a, b = rng.uniform(0.15, 0.95, size=(2, 3))
        t = np.clip(0.6 * y + 0.4 * x, 0, 1)[..., None]
        img = a + t * (b - a)
        img[y > 0.85] *= 0.55
    return np.clip(img, 0.0, 1.0)


def _data_dir():
    return resources.files("shapeattr") / "data" / "backgrounds"


def standard_background_paths():
    return [_data_dir() / f"bg_{i:02d}.png" for i in range(N_STANDARD)]


def _resize(arr, size):
    if arr.shape[1] == size[0] and arr.shape[0] == size[1]:
        return arr
    im = Image.fromarray(np.round(arr * 255).astype(np.uint8))
    return np.asarray(im.resize(tuple(size), Image.BILINEAR), dtype=np.float64) / 255.0


def load_backgrounds(size, directory=None):
    """The standard backgrounds (or every PNG in ``directory``) resized to ``size``."""
    if directory is None:
        paths = standard_background_paths()
    else:
        paths = sorted(Path(directory).glob("*.png"))
        if not paths:
            raise FileNotFoundError(f"no PNG backgrounds in {directory}")
    out = []
    for p in paths:
        with resources.as_file(p) as fp:
            arr = np.asarray(Image.open(fp).convert("RGB"), dtype=np.float64) / 255.0
        out.append(_resize(arr, size))
    return out


def training_backgrounds(count, size):
    """Backgrounds disjoint from the standard set, generated directly at ``size``."""
    return [generate_background(TRAIN_SEED_OFFSET + i, size) for i in range(count)]


def write_standard_backgrounds(directory):
    """Regenerate the shipped PNGs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(N_STANDARD):
        arr = np.round(generate_background(i, STANDARD_SIZE) * 255).astype(np.uint8)
        Image.fromarray(arr, "RGB").save(directory / f"bg_{i:02d}.png")
