"""Class activation maps and their per-pixel localization AUROC."""

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import InvalidArgument, UndefinedMetric
from .metrics import auroc
from .model import UNLABELED, TrainConfig, feature_maps, init_cam_model, train


@dataclass
class CamMap:
    values: np.ndarray  # (H, W)
    attribute: int = 0


def cam(features, weights, attribute=0):
    """``map[h, w] = sum_c weights[c] * features[c, h, w]`` for a ``(C, H, W)`` stack."""
    F = np.asarray(features, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if F.ndim != 3:
        raise InvalidArgument("features must be (C, H, W)")
    if w.size != F.shape[0]:
        raise InvalidArgument(f"{w.size} weights for {F.shape[0]} channels")
    return CamMap(np.tensordot(w, F, axes=1), attribute)


def model_cam(params, image, attribute):
    """CAM of one image under a ``cam``-kind model for ``attribute``."""
    fmap = feature_maps(params, image[None])[0]  # (H, W, C)
    return cam(np.moveaxis(fmap, 2, 0), params.arrays["attr_W"][:, attribute], attribute)


def cam_localization_auroc(cam_map, mask):
    """AUROC of map values as a per-pixel score for ``mask == 1``."""
    m = cam_map.values if isinstance(cam_map, CamMap) else np.asarray(cam_map, dtype=np.float64)
    mask = np.asarray(mask)
    if m.shape != mask.shape:
        raise InvalidArgument(f"map {m.shape} and mask {mask.shape} differ in shape")
    on = mask.astype(bool)
    if on.all() or not on.any():
        raise UndefinedMetric("mask must contain both classes")
    return auroc(m[on], m[~on])


def min_max_normalize(values):
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        raise UndefinedMetric("cannot normalize a constant map")
    return (v - lo) / (hi - lo)


def normalize_and_average(maps):
    """Min-max normalize each map to [0, 1], then average pointwise."""
    if not maps:
        raise InvalidArgument("no maps")
    vals = [m.values if isinstance(m, CamMap) else np.asarray(m, dtype=np.float64) for m in maps]
    if any(v.shape != vals[0].shape for v in vals):
        raise InvalidArgument("maps differ in shape")
    return CamMap(np.mean([min_max_normalize(v) for v in vals], axis=0), -1)


def upsample(values, shape):
    """Nearest-neighbour resize of a map to ``shape`` (H, W)."""
    v = np.asarray(values)
    ys = (np.arange(shape[0]) * v.shape[0]) // shape[0]
    xs = (np.arange(shape[1]) * v.shape[1]) // shape[1]
    return v[ys][:, xs]


def save_cam(path_prefix, cam_map):
    """Write ``<prefix>.png`` (normalized grayscale) and ``<prefix>.csv`` (raw values)."""
    v = cam_map.values
    lo, hi = v.min(), v.max()
    g = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    Image.fromarray(np.round(g * 255).astype(np.uint8), "L").save(f"{path_prefix}.png")
    np.savetxt(f"{path_prefix}.csv", v, delimiter=",", fmt="%.17g")


# ---------------------------------------------------------- quadrant toy


def bright_quadrant_set(n, size=16, n_attributes=1, seed=0):
    """Gray noise images; positives get one quadrant brightened.

    Returns ``(images, labels, quadrant_masks)``; negatives have an empty mask.
    """
    rng = np.random.default_rng([0x0AD, int(seed)])
    imgs = rng.uniform(0.2, 0.5, size=(n, size, size, 1)).repeat(3, axis=3)
    labels = np.full((n, n_attributes), UNLABELED, dtype=np.int64)
    masks = np.zeros((n, size, size), dtype=np.uint8)
    half = size // 2
    for i in range(n):
        pos = i % 2 == 0
        labels[i, 0] = int(pos)
        if pos:
            q = rng.integers(0, 4)
            y0, x0 = (q // 2) * half, (q % 2) * half
            masks[i, y0 : y0 + half, x0 : x0 + half] = 1
            imgs[i, y0 : y0 + half, x0 : x0 + half] += 0.4
    return np.clip(imgs, 0, 1), labels, masks


def train_quadrant_detector(n_train=256, size=16, steps=300, seed=0):
    """Train a small conv + GAP model to flag a bright quadrant."""
    imgs, labels, _ = bright_quadrant_set(n_train, size, 1, seed)
    params = init_cam_model((size, size, 3), (8, 8), n_attributes=1, embed_dim=4, seed=seed)
    cfg = TrainConfig(
        steps=steps,
        batch_size=32,
        views_per_object=1,
        crop_size=size,
        jitter=(1.0, 1.0),
        lr_trunk=0.1,
        lr_attribute=0.1,
        lr_embedding=0.01,
        seed=seed,
    )
    ids = np.arange(n_train)
    params, curve = train(params, imgs, labels, ids, cfg)
    return params, curve
