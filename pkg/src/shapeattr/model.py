"""Two-headed attribute + embedding model with hand-written backprop.

The trunk is either an MLP over the flattened image (``kind="mlp"``) or a
small conv stack followed by global average pooling (``kind="cam"``, used for
class activation maps).  Both feed the same heads: an affine map to ``L``
independent sigmoids and an affine map to ``D`` followed by L2 normalization.
"""

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import InvalidArgument, NumericFailure

ATTRIBUTES = (
    "has_planarity",
    "has_no_planarity",
    "has_cylindrical",
    "has_roughness",
    "point_line_contact",
    "multiple_contacts",
    "mainly_empty",
    "multiple_pieces",
    "has_hole",
    "has_thin_structures",
    "mirror_symmetry",
    "cubic_aspect_ratio",
)
PLANARITY, ROUGHNESS, THIN, CUBIC = 0, 3, 9, 11
UNLABELED = -1
P_CLAMP = 1e-7


class EmptyTripletWarning(UserWarning):
    pass


@dataclass
class TrainConfig:
    margin: float = 0.1
    triplet_weight: float = 3.0
    lr_trunk: float = 0.02
    lr_attribute: float = 0.02
    lr_embedding: float = 0.2
    momentum: float = 0.9
    batch_size: int = 128
    views_per_object: int = 4
    steps: int = 600
    seed: int = 0
    normalize_attribute_loss: bool = True
    mining: str = "semi-hard"
    crop_size: int = 32
    jitter: tuple = (0.9, 1.1)
    log_every: int = 10
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.margin > 0:
            raise InvalidArgument("margin must be > 0")
        if not self.triplet_weight > 0:
            raise InvalidArgument("triplet_weight must be > 0")
        if not 0 <= self.momentum < 1:
            raise InvalidArgument("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise InvalidArgument("weight_decay must be >= 0")
        if self.mining not in ("semi-hard", "hardest"):
            raise InvalidArgument("mining must be 'semi-hard' or 'hardest'")

    def lr(self, group):
        return {"trunk": self.lr_trunk, "attribute": self.lr_attribute, "embedding": self.lr_embedding}[group]


@dataclass
class ModelParams:
    kind: str
    arrays: dict
    input_shape: tuple  # (H, W, C)

    def copy(self):
        return ModelParams(self.kind, {k: v.copy() for k, v in self.arrays.items()}, tuple(self.input_shape))

    @property
    def n_attributes(self):
        return self.arrays["attr_W"].shape[1]

    @property
    def embed_dim(self):
        return self.arrays["emb_W"].shape[1]

    @property
    def n_parameters(self):
        return int(sum(v.size for v in self.arrays.values()))


def param_group(name):
    if name.startswith("attr_"):
        return "attribute"
    if name.startswith("emb_"):
        return "embedding"
    return "trunk"


@dataclass
class PredictionBatch:
    probs: np.ndarray  # (N, L)
    embeddings: np.ndarray  # (N, D), unit rows


def init_mlp(input_shape=(32, 32, 3), hidden=(256, 128), n_attributes=12, embed_dim=32, seed=0):
    rng = np.random.default_rng([0x5EED, int(seed)])
    sizes = [int(np.prod(input_shape))] + list(hidden)
    arrays = {}
    for i in range(len(hidden)):
        arrays[f"trunk_W{i}"] = rng.normal(0.0, 1.0 / np.sqrt(sizes[i]), size=(sizes[i], sizes[i + 1]))
        arrays[f"trunk_b{i}"] = np.zeros(sizes[i + 1])
    _init_heads(arrays, rng, sizes[-1], n_attributes, embed_dim)
    return ModelParams("mlp", arrays, tuple(input_shape))


def init_cam_model(input_shape=(32, 32, 3), channels=(8, 16), n_attributes=12, embed_dim=32, seed=0):
    rng = np.random.default_rng([0xCA4, int(seed)])
    arrays = {}
    cin = input_shape[2]
    for i, c in enumerate(channels):
        arrays[f"conv_W{i}"] = rng.normal(0.0, 1.0 / np.sqrt(9 * cin), size=(3, 3, cin, c))
        arrays[f"conv_b{i}"] = np.zeros(c)
        cin = c
    _init_heads(arrays, rng, cin, n_attributes, embed_dim)
    return ModelParams("cam", arrays, tuple(input_shape))


def _init_heads(arrays, rng, width, n_attributes, embed_dim):
    arrays["attr_W"] = rng.normal(0.0, 1.0 / np.sqrt(width), size=(width, n_attributes))
    arrays["attr_b"] = np.zeros(n_attributes)
    arrays["emb_W"] = rng.normal(0.0, 1.0 / np.sqrt(width), size=(width, embed_dim))
    arrays["emb_b"] = np.zeros(embed_dim)


def _n_layers(params, prefix):
    return sum(1 for k in params.arrays if k.startswith(prefix + "W"))


# ------------------------------------------------------------------- trunks


def _mlp_forward(params, x):
    h = x.reshape(len(x), -1) * 2.0 - 1.0
    acts = [h]
    for i in range(_n_layers(params, "trunk_")):
        h = np.tanh(h @ params.arrays[f"trunk_W{i}"] + params.arrays[f"trunk_b{i}"])
        acts.append(h)
    return h, acts


def _mlp_backward(params, acts, dh, grads):
    for i in reversed(range(_n_layers(params, "trunk_"))):
        dz = dh * (1.0 - acts[i + 1] ** 2)
        grads[f"trunk_W{i}"] = acts[i].T @ dz
        grads[f"trunk_b{i}"] = dz.sum(axis=0)
        dh = dz @ params.arrays[f"trunk_W{i}"].T


def _conv3x3(x, w, b):
    n, h, wd, _ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.broadcast_to(b, (n, h, wd, w.shape[3])).copy()
    for dy in range(3):
        for dx in range(3):
            out += xp[:, dy : dy + h, dx : dx + wd, :] @ w[dy, dx]
    return out


def _conv3x3_backward(x, w, dout):
    n, h, wd, _ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for dy in range(3):
        for dx in range(3):
            patch = xp[:, dy : dy + h, dx : dx + wd, :]
            dw[dy, dx] = np.einsum("nhwc,nhwd->cd", patch, dout)
            dxp[:, dy : dy + h, dx : dx + wd, :] += dout @ w[dy, dx].T
    return dxp[:, 1:-1, 1:-1, :], dw, dout.sum(axis=(0, 1, 2))


def _cam_forward(params, x):
    h = x * 2.0 - 1.0
    acts = [h]
    for i in range(_n_layers(params, "conv_")):
        h = np.tanh(_conv3x3(h, params.arrays[f"conv_W{i}"], params.arrays[f"conv_b{i}"]))
        acts.append(h)
    return h.mean(axis=(1, 2)), acts


def _cam_backward(params, acts, dh, grads):
    fmap = acts[-1]
    d = np.broadcast_to(dh[:, None, None, :] / (fmap.shape[1] * fmap.shape[2]), fmap.shape)
    for i in reversed(range(_n_layers(params, "conv_"))):
        dz = d * (1.0 - acts[i + 1] ** 2)
        d, grads[f"conv_W{i}"], grads[f"conv_b{i}"] = _conv3x3_backward(acts[i], params.arrays[f"conv_W{i}"], dz)


def feature_maps(params, images):
    """Final spatial activations ``(N, H, W, C)`` of a ``cam`` model."""
    if params.kind != "cam":
        raise InvalidArgument("feature maps exist only for the conv (cam) model")
    _, acts = _cam_forward(params, _check_images(params, images))
    return acts[-1]


# ------------------------------------------------------------------ forward


def _check_images(params, images):
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != tuple(params.input_shape):
        raise InvalidArgument(f"expected images of shape {params.input_shape}, got {x.shape[1:]}")
    return x


def _forward(params, x):
    if params.kind == "mlp":
        h, acts = _mlp_forward(params, x)
    else:
        h, acts = _cam_forward(params, x)
    a = params.arrays
    logits = h @ a["attr_W"] + a["attr_b"]
    e = h @ a["emb_W"] + a["emb_b"]
    norm = np.linalg.norm(e, axis=1, keepdims=True)
    if not (np.isfinite(logits).all() and np.isfinite(e).all()) or (norm == 0).any():
        raise NumericFailure("non-finite or zero activation in forward pass")
    sig = expit(logits)
    probs = np.clip(sig, P_CLAMP, 1.0 - P_CLAMP)
    cache = {"h": h, "acts": acts, "sig": sig, "e": e, "norm": norm}
    return PredictionBatch(probs, e / norm), cache


def forward(params, images):
    """Attribute probabilities and unit-norm embeddings for a batch of images."""
    pred, _ = _forward(params, _check_images(params, images))
    return pred


# ------------------------------------------------------------------- losses


def _valid(Y):
    return np.asarray(Y) != UNLABELED


def attribute_loss(Y, P, normalize=True):
    """Masked binary cross-entropy; entries equal to ``UNLABELED`` are skipped."""
    Y = np.asarray(Y)
    P = np.asarray(P, dtype=np.float64)
    if Y.shape != P.shape:
        raise InvalidArgument(f"label shape {Y.shape} != probability shape {P.shape}")
    if (P <= 0).any() or (P >= 1).any():
        raise NumericFailure("probabilities must lie strictly inside (0, 1)")
    m = _valid(Y)
    n = int(m.sum())
    if n == 0:
        return 0.0
    y = Y[m].astype(np.float64)
    p = P[m]
    total = -np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(total / n) if normalize else float(total)


def pair_sq_distances(E):
    sq = np.sum(E * E, axis=1)
    return np.maximum(sq[:, None] + sq[None, :] - 2.0 * E @ E.T, 0.0)


def _triplet_terms(E, triplets, alpha):
    t = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    a, p, n = E[t[:, 0]], E[t[:, 1]], E[t[:, 2]]
    dap = np.sum((a - p) ** 2, axis=1)
    dan = np.sum((a - n) ** 2, axis=1)
    return t, dap - dan + alpha


def triplet_loss(embeddings, triplets, alpha):
    """Mean hinge ``max(D(a,p) - D(a,n) + alpha, 0)`` with squared Euclidean D."""
    E = np.asarray(embeddings, dtype=np.float64)
    t, z = _triplet_terms(E, triplets, alpha)
    if len(t) == 0:
        warnings.warn("no triplets; triplet loss is 0", EmptyTripletWarning, stacklevel=2)
        return 0.0
    return float(np.mean(np.maximum(z, 0.0)))


def mine_triplets(embeddings, object_ids, alpha, strategy="semi-hard", return_counts=False):
    """One negative per ordered (anchor, positive) pair of the same object.

    Semi-hard picks the closest negative with ``D(a,p) < D(a,n) < D(a,p) + alpha``
    and falls back to the closest negative overall when the band is empty;
    ``strategy="hardest"`` always takes the closest negative.
    """
    E = np.asarray(embeddings, dtype=np.float64)
    ids = np.asarray(object_ids)
    D = pair_sq_distances(E)
    out = []
    n_semi = n_fallback = 0
    for a in range(len(E)):
        neg = np.flatnonzero(ids != ids[a])
        if len(neg) == 0:
            continue
        dn = D[a, neg]
        hardest = neg[np.argmin(dn)]
        for p in np.flatnonzero(ids == ids[a]):
            if p == a:
                continue
            if strategy == "semi-hard":
                band = (dn > D[a, p]) & (dn < D[a, p] + alpha)
                if band.any():
                    cand = np.flatnonzero(band)
                    out.append((a, p, neg[cand[np.argmin(dn[cand])]]))
                    n_semi += 1
                    continue
                n_fallback += 1
            out.append((a, p, hardest))
    trip = np.array(out, dtype=np.int64).reshape(-1, 3)
    if return_counts:
        return trip, n_semi, n_fallback
    return trip


def combined_loss(Y, P, embeddings, triplets, config):
    attr = attribute_loss(Y, P, config.normalize_attribute_loss)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyTripletWarning)
        trip = triplet_loss(embeddings, triplets, config.margin)
    return attr + config.triplet_weight * trip


# ---------------------------------------------------------------- gradients


@dataclass
class Batch:
    images: np.ndarray
    labels: np.ndarray
    triplets: np.ndarray = None
    object_ids: np.ndarray = None


def loss_and_gradients(params, batch, config):
    """Combined loss, its parts and exact gradients for every parameter array.

    Triplets are taken from ``batch.triplets`` or, when absent, mined from
    the current embeddings (mining itself is not differentiated).
    """
    x = _check_images(params, batch.images)
    pred, cache = _forward(params, x)
    Y = np.asarray(batch.labels)
    triplets = batch.triplets
    if triplets is None:
        triplets = (
            mine_triplets(pred.embeddings, batch.object_ids, config.margin, config.mining)
            if batch.object_ids is not None
            else np.zeros((0, 3), dtype=np.int64)
        )
    triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)

    attr = attribute_loss(Y, pred.probs, config.normalize_attribute_loss)
    m = _valid(Y)
    denom = max(int(m.sum()), 1) if config.normalize_attribute_loss else 1
    sig = cache["sig"]
    active = (sig > P_CLAMP) & (sig < 1.0 - P_CLAMP)
    dlogits = np.where(m & active, (sig - np.where(m, Y, 0)) / denom, 0.0)

    xh = pred.embeddings
    t, z = _triplet_terms(xh, triplets, config.margin)
    dxh = np.zeros_like(xh)
    trip = 0.0
    if len(t):
        trip = float(np.mean(np.maximum(z, 0.0)))
        on = z > 0
        ta, tp, tn = t[on, 0], t[on, 1], t[on, 2]
        s = config.triplet_weight / len(t)
        np.add.at(dxh, ta, 2.0 * s * (xh[tn] - xh[tp]))
        np.add.at(dxh, tp, 2.0 * s * (xh[tp] - xh[ta]))
        np.add.at(dxh, tn, 2.0 * s * (xh[ta] - xh[tn]))
    # d(e/|e|)/de projects out the radial component
    de = (dxh - xh * np.sum(xh * dxh, axis=1, keepdims=True)) / cache["norm"]

    a = params.arrays
    h = cache["h"]
    grads = {
        "attr_W": h.T @ dlogits,
        "attr_b": dlogits.sum(axis=0),
        "emb_W": h.T @ de,
        "emb_b": de.sum(axis=0),
    }
    dh = dlogits @ a["attr_W"].T + de @ a["emb_W"].T
    if params.kind == "mlp":
        _mlp_backward(params, cache["acts"], dh, grads)
    else:
        _cam_backward(params, cache["acts"], dh, grads)
    for k, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericFailure(f"non-finite gradient for {k}")
    info = {
        "attribute_loss": attr,
        "triplet_loss": trip,
        "combined": attr + config.triplet_weight * trip,
        "n_triplets": len(t),
        "embedding_grad": de,
    }
    return info, grads


def gradients(params, batch, config):
    """Gradient of :func:`combined_loss` with respect to every parameter array."""
    return loss_and_gradients(params, batch, config)[1]


def sgd_momentum_step(params, grads, velocity, config):
    """``v = momentum * v + g + wd * w`` (decay on weight matrices only); ``w -= lr[group] * v``.

    Returns new (params, velocity).
    """
    new = {}
    vel = {}
    for k, w in params.arrays.items():
        g = grads[k]
        if config.weight_decay and "_W" in k:
            g = g + config.weight_decay * w
        v = config.momentum * velocity.get(k, 0.0) + g
        upd = w - config.lr(param_group(k)) * v
        if not np.isfinite(upd).all():
            raise NumericFailure(f"non-finite parameter update for {k}")
        new[k] = upd
        vel[k] = v
    return ModelParams(params.kind, new, params.input_shape), vel


# ------------------------------------------------------------- augmentation


def augment(image, seed, crop_size, jitter=(0.9, 1.1), flip=None):
    """Random crop, horizontal flip (p = 1/2) and per-channel gain jitter."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    if crop_size > h or crop_size > w:
        raise InvalidArgument(f"crop {crop_size} larger than image {h}x{w}")
    rng = np.random.default_rng([0xA06, int(seed) & 0xFFFFFFFFFFFF])
    do_flip = rng.random() < 0.5
    if flip is not None:
        do_flip = bool(flip)
    y0 = int(rng.integers(0, h - crop_size + 1))
    x0 = int(rng.integers(0, w - crop_size + 1))
    gain = rng.uniform(jitter[0], jitter[1], size=3)
    out = img[y0 : y0 + crop_size, x0 : x0 + crop_size]
    if do_flip:
        out = out[:, ::-1]
    return np.clip(out * gain, 0.0, 1.0)


def pooling_views(image, crop_size, flips=True):
    """Centre and four corner crops, each also mirrored when ``flips``."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    if crop_size > h or crop_size > w:
        raise InvalidArgument(f"crop {crop_size} larger than image {h}x{w}")
    c = crop_size
    cy, cx = (h - c) // 2, (w - c) // 2
    origins = [(cy, cx), (0, 0), (0, w - c), (h - c, 0), (h - c, w - c)]
    views = []
    for y0, x0 in origins:
        v = img[y0 : y0 + c, x0 : x0 + c]
        views.append(v)
        if flips:
            views.append(v[:, ::-1])
    return np.stack(views)


def test_time_pool(params, image, flips=True):
    """Average probabilities and renormalized mean embedding over the pooling views."""
    views = pooling_views(image, params.input_shape[0], flips)
    pred = forward(params, views)
    emb = pred.embeddings.mean(axis=0)
    return pred.probs.mean(axis=0), emb / np.linalg.norm(emb)


# keep pytest from collecting this when imported into a test module
test_time_pool.__test__ = False


# ----------------------------------------------------------------- training


def sample_batch_indices(rng, object_ids, batch_size, views_per_object):
    """P x K sampling: random objects, ``views_per_object`` views each."""
    ids = np.asarray(object_ids)
    uniq = np.unique(ids)
    n_obj = max(1, batch_size // views_per_object)
    chosen = rng.choice(uniq, size=min(n_obj, len(uniq)), replace=False)
    idx = []
    for o in chosen:
        members = np.flatnonzero(ids == o)
        k = min(views_per_object, len(members))
        idx.extend(rng.choice(members, size=k, replace=False))
    return np.array(idx, dtype=np.int64)


def train(params, images, labels, object_ids, config, callback=None):
    """SGD with momentum on the combined loss.

    ``images`` are ``(N, H, W, 3)`` inputs at least ``crop_size`` large.
    Returns the trained parameters and the loss curve as a list of
    ``(step, attribute_loss, triplet_loss, combined)`` rows.
    """
    rng = np.random.default_rng([0x7A1, int(config.seed)])
    velocity = {}
    curve = []
    images = np.asarray(images)
    labels = np.asarray(labels)
    object_ids = np.asarray(object_ids)
    for step in range(int(config.steps)):
        idx = sample_batch_indices(rng, object_ids, config.batch_size, config.views_per_object)
        seeds = rng.integers(0, 2**31, size=len(idx))
        x = np.stack([augment(images[i], s, config.crop_size, config.jitter) for i, s in zip(idx, seeds)])
        batch = Batch(x, labels[idx], None, object_ids[idx])
        info, grads = loss_and_gradients(params, batch, config)
        if not np.isfinite(info["combined"]):
            raise NumericFailure(f"loss diverged at step {step}")
        params, velocity = sgd_momentum_step(params, grads, velocity, config)
        if step % config.log_every == 0 or step == config.steps - 1:
            curve.append((step, info["attribute_loss"], info["triplet_loss"], info["combined"]))
            if callback is not None:
                callback(step, info)
    return params, curve


# -------------------------------------------------------------- checkpoints


def save_checkpoint(params, prefix):
    """Write ``<prefix>.bin`` (little-endian float64 tensors) and ``<prefix>.manifest.txt``."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"kind {params.kind}", "input_shape " + ",".join(str(int(s)) for s in params.input_shape)]
    offset = 0
    with open(prefix.with_suffix(".bin"), "wb") as fh:
        for name in sorted(params.arrays):
            arr = np.ascontiguousarray(params.arrays[name], dtype="<f8")
            fh.write(arr.tobytes())
            shape = ",".join(str(s) for s in arr.shape)
            lines.append(f"tensor {name} float64 {shape} {offset}")
            offset += arr.size
    prefix.with_suffix(".manifest.txt").write_text("\n".join(lines) + "\n")


def load_checkpoint(prefix):
    prefix = Path(prefix)
    manifest = prefix.with_suffix(".manifest.txt")
    binfile = prefix.with_suffix(".bin")
    if not manifest.exists() or not binfile.exists():
        raise FileNotFoundError(f"checkpoint {prefix} not found (expected {manifest} and {binfile})")
    data = np.fromfile(binfile, dtype="<f8")
    kind, shape, arrays = None, None, {}
    for line in manifest.read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "kind":
            kind = parts[1]
        elif parts[0] == "input_shape":
            shape = tuple(int(s) for s in parts[1].split(","))
        elif parts[0] == "tensor":
            name, dims, off = parts[1], parts[3], int(parts[4])
            dims = tuple(int(s) for s in dims.split(",")) if dims else ()
            n = int(np.prod(dims)) if dims else 1
            arrays[name] = data[off : off + n].reshape(dims).astype(np.float64)
    return ModelParams(kind, arrays, shape)
