"""Probing protocols: parameter sweeps, conflicting cues, lighting and texture
sensitivity, and pair verification (mental rotation)."""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import UndefinedMetric
from .geometry import StimulusSpec, build_stimulus, parameter_sweep
from .metrics import (
    ResponseCurve,
    auroc,
    centered_deviation,
    response_range,
    roc_curve,
    spearman_or_nan,
)
from .model import (
    ATTRIBUTES,
    CUBIC,
    PLANARITY,
    ROUGHNESS,
    THIN,
    UNLABELED,
    forward,
    pooling_views,
)
from .render import Camera, Material, composite, default_lighting, hybrid_render, random_lighting, render, rotate_lighting
from .textures import TEXTURE_KINDS, TextureSpec

FAMILY_ATTRIBUTE = {"LpLow": PLANARITY, "LpHigh": PLANARITY, "Noise": ROUGHNESS, "Oval": CUBIC}


# ------------------------------------------------------------------ labels


@dataclass(frozen=True)
class LabelRule:
    planarity_min_p: float = 20.0
    roughness_min_p: float = 0.25
    cubic_min_p: float = 0.7
    thin_max_p: float = 0.25


def labels_for_spec(spec, rule=LabelRule(), n_attributes=len(ATTRIBUTES)):
    """Synthetic ground truth; attributes the stimuli say nothing about stay unlabeled."""
    fam, p = spec.canonical()
    y = np.full(n_attributes, UNLABELED, dtype=np.int64)
    if fam == "LpHigh":
        y[PLANARITY] = int(p >= rule.planarity_min_p)
    elif fam == "LpLow":
        if p == 1.0:
            y[PLANARITY] = 1
    else:
        y[PLANARITY] = 0
    y[ROUGHNESS] = int(fam == "Noise" and p >= rule.roughness_min_p)
    y[CUBIC] = int(p >= rule.cubic_min_p) if fam == "Oval" else 1
    y[THIN] = int(fam == "Oval" and p <= rule.thin_max_p)
    return y


# --------------------------------------------------------------- rendering


@lru_cache(maxsize=512)
def _cached_mesh(spec, subdivision):
    return build_stimulus(spec, subdivision)


@dataclass
class StimulusRenderer:
    subdivision: int = 5
    image_size: int = 72
    azimuth: float = 20.0
    elevation: float = 15.0
    distance: float = 4.0
    fov: float = 40.0
    material: Material = field(default_factory=Material)

    def camera(self, azimuth=None, elevation=None):
        return Camera.orbit(
            self.azimuth if azimuth is None else azimuth,
            self.elevation if elevation is None else elevation,
            self.distance,
            self.fov,
            (self.image_size, self.image_size),
        )

    def mesh(self, spec):
        return _cached_mesh(spec, self.subdivision)

    def _material(self, texture, base_color):
        if texture is None and base_color is None:
            return self.material
        m = self.material
        return Material(base_color if base_color is not None else m.base_color, m.specular_strength, m.shininess, texture)

    def foreground(self, spec, lighting=None, texture=None, azimuth=None, elevation=None, debug=False, base_color=None):
        return render(
            self.mesh(spec),
            self.camera(azimuth, elevation),
            lighting or default_lighting(),
            self._material(texture, base_color),
            debug=debug,
        )

    def hybrid(self, contour_spec, shading_spec, lighting=None):
        return hybrid_render(
            self.mesh(contour_spec), self.mesh(shading_spec), self.camera(), lighting or default_lighting(), self.material
        )


@dataclass
class RenderedStimulus:
    """A composited stimulus plus the metadata oracle predictors may read."""

    image: object  # RasterImage
    spec: StimulusSpec = None
    background_id: int = -1
    lighting_id: int = -1


def downsample(rgb, factor):
    if factor == 1:
        return np.asarray(rgb, dtype=np.float64)
    h, w = rgb.shape[:2]
    return rgb[: h - h % factor, : w - w % factor].reshape(h // factor, factor, w // factor, factor, 3).mean(axis=(1, 3))


# -------------------------------------------------------------- predictors


class ModelPredictor:
    """Trained model with test-time pooling over crops and flips."""

    def __init__(self, params, downsample_factor=2, flips=True, chunk=1024):
        self.params = params
        self.factor = downsample_factor
        self.flips = flips
        self.chunk = chunk

    def model_input(self, rgb):
        return downsample(rgb, self.factor)

    def _pooled(self, images):
        crop = self.params.input_shape[0]
        views = np.concatenate([pooling_views(self.model_input(im), crop, self.flips) for im in images])
        per = len(views) // len(images)
        probs, embs = [], []
        for s in range(0, len(views), self.chunk):
            pred = forward(self.params, views[s : s + self.chunk])
            probs.append(pred.probs)
            embs.append(pred.embeddings)
        P = np.concatenate(probs).reshape(len(images), per, -1).mean(axis=1)
        E = np.concatenate(embs).reshape(len(images), per, -1).mean(axis=1)
        return P, E / np.linalg.norm(E, axis=1, keepdims=True)

    def predict(self, stimuli):
        return self._pooled([s.image.rgb for s in stimuli])[0]

    def embed(self, images):
        return self._pooled(list(images))[1]


class _ColumnOracle:
    """Writes one scalar per stimulus into ``attribute``; other columns are 0.5."""

    needs_geometry = False

    def __init__(self, attribute=PLANARITY, n_attributes=len(ATTRIBUTES)):
        self.attribute = attribute
        self.n_attributes = n_attributes

    def score(self, stimulus):
        raise NotImplementedError

    def predict(self, stimuli):
        out = np.full((len(stimuli), self.n_attributes), 0.5)
        out[:, self.attribute] = [self.score(s) for s in stimuli]
        return out


class ParameterOracle(_ColumnOracle):
    """Reads the stimulus parameter, bypassing pixels; monotone in p."""

    def score(self, stimulus):
        return float(np.arctan(stimulus.spec.canonical()[1]) / (np.pi / 2))


class ConstantPredictor(_ColumnOracle):
    def __init__(self, value=0.5, **kw):
        super().__init__(**kw)
        self.value = value

    def score(self, stimulus):
        return self.value


class ShadingOracle(_ColumnOracle):
    """Mean luminance over covered pixels (reads shading only)."""

    def score(self, stimulus):
        img = stimulus.image
        m = img.mask.astype(bool)
        return float(img.rgb[m].mean()) if m.any() else 0.0


class ContourOracle(_ColumnOracle):
    """Fraction of the frame covered by the silhouette (reads contour only)."""

    def score(self, stimulus):
        return float(stimulus.image.mask.mean())


class GeometryOracle(_ColumnOracle):
    """Planarity from the debug face-normal channel: share of neighbouring
    covered pixels lying on faces with (numerically) equal normals."""

    needs_geometry = True

    def __init__(self, tol=1e-4, **kw):
        super().__init__(**kw)
        self.tol = tol

    def score(self, stimulus):
        n = stimulus.image.normals
        m = stimulus.image.mask.astype(bool)
        flat = total = 0
        for a, b, ma, mb in (
            (n[:, 1:], n[:, :-1], m[:, 1:], m[:, :-1]),
            (n[1:], n[:-1], m[1:], m[:-1]),
        ):
            both = ma & mb
            d = np.einsum("ijk,ijk->ij", a, b)[both]
            flat += int(np.sum(1.0 - d < self.tol))
            total += int(both.sum())
        return flat / total if total else 0.0


# -------------------------------------------------------------------- sweeps


@dataclass
class SweepReport:
    family: str
    attribute: int
    params: np.ndarray
    curves: list  # ResponseCurve per background
    mean_curve: np.ndarray
    centered_std: np.ndarray
    r_s: np.ndarray  # per background, NaN where undefined
    mean_r_s: float
    pooled_r_s: float
    flagged: bool  # some per-background r_s was undefined

    @property
    def pooled_minus_mean(self):
        return self.pooled_r_s - self.mean_r_s


def _nanmean(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x[~np.isnan(x)])) if (~np.isnan(x)).any() else float("nan")


def render_composites(renderer, foregrounds, backgrounds, specs, lighting_id=-1):
    """Composite every foreground on every background; order is (stimulus, background)."""
    out = []
    for fg, spec in zip(foregrounds, specs):
        for b, bg in enumerate(backgrounds):
            out.append(RenderedStimulus(composite(fg, bg), spec, b, lighting_id))
    return out


def curves_report(family, attribute, params, preds):
    """Assemble a SweepReport from a (stimulus x background) response matrix."""
    params = np.asarray(params, dtype=np.float64)
    curves = [ResponseCurve(b, params, preds[:, b]) for b in range(preds.shape[1])]
    std, mean = centered_deviation(curves)
    rs = np.array([spearman_or_nan(c.params, c.responses) for c in curves])
    pooled = spearman_or_nan(np.repeat(params, preds.shape[1]), preds.reshape(-1))
    return SweepReport(
        family, attribute, curves[0].params, curves, mean, std, rs, _nanmean(rs), pooled, bool(np.isnan(rs).any())
    )


def run_sweep(predictor, family, sweep_size, backgrounds, attribute_index=None, renderer=None, seed=0, texture=None, lighting=None):
    """Predicted attribute vs stimulus parameter on every background."""
    renderer = renderer or StimulusRenderer()
    attribute = FAMILY_ATTRIBUTE[family] if attribute_index is None else attribute_index
    specs = parameter_sweep(family, sweep_size, seed)
    debug = getattr(predictor, "needs_geometry", False)
    fgs = [renderer.foreground(s, lighting, texture, debug=debug) for s in specs]
    stimuli = render_composites(renderer, fgs, backgrounds, specs)
    preds = predictor.predict(stimuli)[:, attribute].reshape(len(specs), len(backgrounds))
    return curves_report(family, attribute, [s.p for s in specs], preds)


# ---------------------------------------------------------- conflicting cues

CUE_CONDITIONS = (
    ("varying", "varying"),
    ("varying", "sphere"),
    ("varying", "cube"),
    ("sphere", "varying"),
    ("cube", "varying"),
)  # (shading, contour)


@dataclass
class CueTable:
    conditions: tuple
    r_s: np.ndarray  # (5,)
    ranges: np.ndarray  # (5,)
    mean_curves: np.ndarray  # (5, sweep)
    params: np.ndarray

    def rows(self):
        header = ["metric"] + [f"shading={s}|contour={c}" for s, c in self.conditions]
        return header, [["r_s", *self.r_s.tolist()], ["Range", *self.ranges.tolist()]]


def conflicting_cues_table(predictor, backgrounds, renderer=None, sweep_size=10, attribute=PLANARITY, lighting=None):
    """Table of (r_s, Range) as contour and shading move from sphere to cube jointly or separately."""
    renderer = renderer or StimulusRenderer()
    specs = parameter_sweep("LpHigh", sweep_size)
    sphere, cube = specs[0], specs[-1]
    fixed = {"sphere": sphere, "cube": cube}
    r_s, ranges, means = [], [], []
    for shading, contour in CUE_CONDITIONS:
        fgs = []
        for s in specs:
            sh = s if shading == "varying" else fixed[shading]
            co = s if contour == "varying" else fixed[contour]
            fgs.append(renderer.hybrid(co, sh, lighting))
        stimuli = render_composites(renderer, fgs, backgrounds, specs)
        preds = predictor.predict(stimuli)[:, attribute].reshape(len(specs), len(backgrounds))
        rep = curves_report("LpHigh", attribute, [s.p for s in specs], preds)
        r_s.append(rep.mean_r_s)
        ranges.append(response_range(rep.mean_curve))
        means.append(rep.mean_curve)
    return CueTable(CUE_CONDITIONS, np.array(r_s), np.array(ranges), np.array(means), np.array([s.p for s in specs]))


# ------------------------------------------------------------------ lighting


def catastrophic_counts(shape_preds, sphere_preds):
    """Count cases where a planar shape scores below the sphere.

    Inputs are ``(n_lightings, n_backgrounds)``.  Returns
    ``(identical, independent)``: the first compares equal lighting indices,
    the second all lighting pairs ``(i, j)`` within each background.
    """
    a = np.asarray(shape_preds, dtype=np.float64)
    s = np.asarray(sphere_preds, dtype=np.float64)
    identical = int(np.sum(a < s))
    independent = 0
    for b in range(a.shape[1]):
        ss = np.sort(s[:, b])
        independent += int(np.sum(len(ss) - np.searchsorted(ss, a[:, b], side="right")))
    return identical, independent


@dataclass
class LightingReport:
    sweep_family: str
    params: np.ndarray
    r_s: np.ndarray  # (n_lightings, n_backgrounds)
    mean_r_s: float
    std_per_stimulus: np.ndarray  # (n_stimuli,) std across lightings, averaged over backgrounds
    anchor_std: dict  # Octahedron/Sphere/Cube -> std across lightings
    identical_errors: int
    independent_errors: int
    identical_total: int
    independent_total: int


def lighting_setups(n_setups, seed=0, grayscale=False):
    return [random_lighting(seed * 100003 + i, grayscale) for i in range(n_setups)]


def lighting_sensitivity(predictor, backgrounds, n_setups=100, renderer=None, sweep_family="LpHigh", sweep_size=8, attribute=PLANARITY, seed=0, grayscale=False):
    """Prediction stability across random lighting setups."""
    renderer = renderer or StimulusRenderer()
    setups = lighting_setups(n_setups, seed, grayscale)
    debug = getattr(predictor, "needs_geometry", False)
    specs = parameter_sweep(sweep_family, sweep_size)
    anchors = [StimulusSpec("Octahedron", 1.0), StimulusSpec("Sphere", 2.0), StimulusSpec("Cube", 100.0)]
    nb = len(backgrounds)
    sweep_preds = np.zeros((n_setups, len(specs), nb))
    anchor_preds = np.zeros((3, n_setups, nb))
    for li, light in enumerate(setups):
        allspecs = specs + anchors
        fgs = [renderer.foreground(s, light, debug=debug) for s in allspecs]
        stim = render_composites(renderer, fgs, backgrounds, allspecs, li)
        p = predictor.predict(stim)[:, attribute].reshape(len(allspecs), nb)
        sweep_preds[li] = p[: len(specs)]
        anchor_preds[:, li] = p[len(specs) :]
    ps = np.array([s.p for s in specs])
    rs = np.array([[spearman_or_nan(ps, sweep_preds[l, :, b]) for b in range(nb)] for l in range(n_setups)])
    std_stim = sweep_preds.std(axis=0).mean(axis=1)
    anchor_std = {a.family: float(anchor_preds[i].std(axis=0).mean()) for i, a in enumerate(anchors)}
    ident = indep = 0
    for shape in (0, 2):
        i1, i2 = catastrophic_counts(anchor_preds[shape], anchor_preds[1])
        ident += i1
        indep += i2
    return LightingReport(
        sweep_family, ps, rs, _nanmean(rs), std_stim, anchor_std, ident, indep, 2 * n_setups * nb, 2 * n_setups * n_setups * nb
    )


# ------------------------------------------------------------------- texture


@dataclass
class TextureReport:
    kinds: tuple
    reports: dict  # kind -> SweepReport

    @property
    def mean_r_s(self):
        return _nanmean([r.mean_r_s for r in self.reports.values()])


def texture_sensitivity(predictor, backgrounds, renderer=None, sweep_size=10, attribute=PLANARITY, texture_seed=0, family="LpLow"):
    """One background-averaged response curve per texture on the LpLow sweep."""
    renderer = renderer or StimulusRenderer()
    reports = {}
    for kind in TEXTURE_KINDS:
        tex = None if kind == "None" else TextureSpec(kind, texture_seed)
        reports[kind] = run_sweep(predictor, family, sweep_size, backgrounds, attribute, renderer, texture=tex)
    return TextureReport(TEXTURE_KINDS, reports)


# ------------------------------------------------------------ mental rotation


@dataclass
class PairVerificationReport:
    setting: str
    auroc: float
    eer: float
    positive_fraction: float
    n_positives: int
    n_negatives: int


def _unit_rows(X):
    X = np.asarray(X, dtype=np.float64)
    n = np.linalg.norm(X, axis=1, keepdims=True)
    return X / np.where(n > 0, n, 1.0)


def cosine_distances(X):
    U = _unit_rows(X)
    return 1.0 - U @ U.T


def verification_pairs(object_ids, view_cluster_ids):
    """Upper-triangle pair indices split into positives and negatives.

    Same-object pairs within one viewpoint cluster are dropped.
    """
    ids = np.asarray(object_ids)
    vc = np.asarray(view_cluster_ids)
    i, j = np.triu_indices(len(ids), 1)
    same = ids[i] == ids[j]
    pos = same & (vc[i] != vc[j])
    neg = ~same
    return (i[pos], j[pos]), (i[neg], j[neg])


def mental_rotation_eval(embeddings, object_ids, view_cluster_ids, setting="Easy", baseline=None):
    """Same-object verification scored by negated cosine distance.

    ``Hard`` keeps only positives at or above the median ``baseline``
    cosine distance (the easy half under the baseline representation goes).
    """
    D = cosine_distances(embeddings)
    (pi, pj), (ni, nj) = verification_pairs(object_ids, view_cluster_ids)
    if len(pi) == 0:
        raise UndefinedMetric("no positive pairs across viewpoint clusters")
    if setting == "Hard":
        if baseline is None:
            raise ValueError("Hard setting needs a baseline representation")
        bd = cosine_distances(baseline)[pi, pj]
        keep = bd >= np.median(bd)
        pi, pj = pi[keep], pj[keep]
    elif setting != "Easy":
        raise ValueError(f"unknown setting {setting!r}")
    pos = -D[pi, pj]
    neg = -D[ni, nj]
    _, e = roc_curve(pos, neg)
    return PairVerificationReport(setting, auroc(pos, neg), e, len(pos) / (len(pos) + len(neg)), len(pos), len(neg))


# ------------------------------------------------------------ training data


@dataclass
class ObjectDataset:
    images: np.ndarray  # (N, H, W, 3) model-resolution images
    labels: np.ndarray  # (N, L)
    object_ids: np.ndarray
    view_cluster_ids: np.ndarray
    specs: list
    azimuths: np.ndarray


def _random_spec(rng, families):
    fam = families[int(rng.integers(len(families)))]
    seed = int(rng.integers(1000, 2**31 - 1))
    if fam == "LpLow":
        p = 1.0 if rng.random() < 0.25 else float(rng.uniform(1.0, 2.0))
    elif fam == "LpHigh":
        p = float(np.exp(rng.uniform(np.log(2.0), np.log(100.0))))
    elif fam == "Noise":
        p = float(rng.uniform(0.0, 0.5))
    else:
        p = float(np.exp(rng.uniform(np.log(0.1), 0.0)))
    return StimulusSpec(fam, p, seed)


def make_object_dataset(
    n_objects,
    views,
    backgrounds,
    renderer=None,
    seed=0,
    families=("LpLow", "LpHigh", "Noise", "Oval"),
    appearance="plain",
    random_light_fraction=0.3,
    downsample_factor=2,
    rule=LabelRule(),
    object_id_offset=0,
):
    """Multi-view renders of random stimuli for training or held-out evaluation.

    Views sit at evenly spaced azimuths with small jitter; the viewpoint
    cluster is the azimuth quadrant.  Lights turn with the camera, as if the
    object sat on a turntable in a fixed studio.  ``appearance="varied"`` gives every
    object its own texture and base colour.
    """
    renderer = renderer or StimulusRenderer()
    rng = np.random.default_rng([0xDA7A, int(seed)])
    images, labels, oids, vcs, specs, azs = [], [], [], [], [], []
    for o in range(n_objects):
        spec = _random_spec(rng, families)
        texture = None
        base = None
        if appearance == "varied":
            kind = TEXTURE_KINDS[int(rng.integers(len(TEXTURE_KINDS)))]
            texture = None if kind == "None" else TextureSpec(kind, int(rng.integers(0, 2**31 - 1)))
            base = tuple(float(c) for c in rng.uniform(0.25, 0.95, size=3))
        y = labels_for_spec(spec, rule)
        offset = rng.uniform(0, 360)
        for v in range(views):
            az = (offset + v * 360.0 / views + rng.uniform(-10, 10)) % 360.0
            el = rng.uniform(5.0, 25.0)
            light = default_lighting()
            if rng.random() < random_light_fraction:
                light = random_lighting(int(rng.integers(0, 2**31 - 1)), grayscale=bool(rng.random() < 0.5))
            # turntable: lights keep their place relative to the viewer
            light = rotate_lighting(light, az - renderer.azimuth)
            fg = renderer.foreground(spec, light, texture, az, el, base_color=base)
            bg = backgrounds[int(rng.integers(len(backgrounds)))]
            img = composite(fg, bg)
            images.append(downsample(img.rgb, downsample_factor))
            labels.append(y)
            oids.append(o + object_id_offset)
            vcs.append(int(az // 90.0))
            specs.append(spec)
            azs.append(az)
    return ObjectDataset(np.stack(images), np.stack(labels), np.array(oids), np.array(vcs), specs, np.array(azs))
