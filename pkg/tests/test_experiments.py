import numpy as np
import pytest

from shapeattr.backgrounds import load_backgrounds
from shapeattr.errors import UndefinedMetric
from shapeattr.experiments import (
    CUE_CONDITIONS,
    ConstantPredictor,
    FAMILY_ATTRIBUTE,
    ContourOracle,
    GeometryOracle,
    LabelRule,
    ParameterOracle,
    ShadingOracle,
    StimulusRenderer,
    catastrophic_counts,
    conflicting_cues_table,
    labels_for_spec,
    lighting_sensitivity,
    make_object_dataset,
    mental_rotation_eval,
    run_sweep,
    texture_sensitivity,
    verification_pairs,
)
from shapeattr.geometry import StimulusSpec
from shapeattr.model import CUBIC, PLANARITY, ROUGHNESS, THIN, UNLABELED
from shapeattr.textures import TEXTURE_KINDS

SMALL = StimulusRenderer(subdivision=3, image_size=48)


@pytest.fixture(scope="module")
def bgs():
    return load_backgrounds((48, 48))[:3]


def test_labels_for_spec():
    y = labels_for_spec(StimulusSpec("LpHigh", 50.0))
    assert y[PLANARITY] == 1 and y[ROUGHNESS] == 0 and y[CUBIC] == 1 and y[THIN] == 0
    assert labels_for_spec(StimulusSpec("LpHigh", 3.0))[PLANARITY] == 0
    assert labels_for_spec(StimulusSpec("LpLow", 1.0))[PLANARITY] == 1
    assert labels_for_spec(StimulusSpec("LpLow", 1.5))[PLANARITY] == UNLABELED
    assert labels_for_spec(StimulusSpec("Noise", 0.3))[ROUGHNESS] == 1
    assert labels_for_spec(StimulusSpec("Noise", 0.1))[ROUGHNESS] == 0
    oval = labels_for_spec(StimulusSpec("Oval", 0.2))
    assert oval[CUBIC] == 0 and oval[THIN] == 1 and oval[PLANARITY] == 0
    assert labels_for_spec(StimulusSpec("Oval", 0.9))[CUBIC] == 1
    y = labels_for_spec(StimulusSpec("LpHigh", 10.0), LabelRule(planarity_min_p=5.0))
    assert y[PLANARITY] == 1
    assert set(np.flatnonzero(y != UNLABELED)) == {PLANARITY, ROUGHNESS, CUBIC, THIN}


def test_parameter_oracle_sweep(bgs):
    for fam in ("LpLow", "LpHigh", "Noise", "Oval"):
        r = run_sweep(ParameterOracle(FAMILY_ATTRIBUTE[fam]), fam, 5, bgs, renderer=SMALL)
        assert r.mean_r_s == 1.0 and r.pooled_r_s == 1.0 and not r.flagged
        assert np.allclose(r.centered_std, 0.0)


def test_constant_predictor_is_flagged(bgs):
    r = run_sweep(ConstantPredictor(0.3), "LpHigh", 5, bgs, renderer=SMALL)
    assert r.flagged and np.isnan(r.r_s).all() and np.isnan(r.mean_r_s)
    assert np.allclose(r.mean_curve, 0.3)


def test_cue_table_oracles(bgs):
    sh = conflicting_cues_table(ShadingOracle(), bgs, SMALL, sweep_size=5)
    co = conflicting_cues_table(ContourOracle(), bgs, SMALL, sweep_size=5)
    header, rows = sh.rows()
    assert len(header) == 1 + len(CUE_CONDITIONS) and [r[0] for r in rows] == ["r_s", "Range"]
    assert sh.mean_curves.shape == (5, 5)
    contour_varying = [i for i, (s, c) in enumerate(CUE_CONDITIONS) if s != "varying"]
    shading_varying = [i for i, (s, c) in enumerate(CUE_CONDITIONS) if c != "varying"]
    assert (sh.ranges[contour_varying] < 0.02).all()
    assert (co.ranges[shading_varying] < 0.02).all()
    assert co.ranges[0] > 0.02


def brute_force_counts(a, s):
    ident = indep = 0
    L, B = a.shape
    for b in range(B):
        for i in range(L):
            ident += a[i, b] < s[i, b]
            for j in range(L):
                indep += a[i, b] < s[j, b]
    return ident, indep


def test_catastrophic_counts_match_brute_force(rng):
    for trial in range(5):
        a = rng.normal(size=(100, 2))
        s = rng.normal(size=(100, 2))
        if trial % 2:
            a = np.round(a, 1)
            s = np.round(s, 1)
        assert catastrophic_counts(a, s) == brute_force_counts(a, s)


def test_lighting_geometry_oracle(bgs):
    rep = lighting_sensitivity(GeometryOracle(), bgs[:2], n_setups=4, renderer=SMALL, sweep_size=4)
    assert rep.identical_errors == 0 and rep.independent_errors == 0
    assert rep.identical_total == 2 * 4 * 2 and rep.independent_total == 2 * 16 * 2
    assert np.allclose(rep.std_per_stimulus, 0.0)
    assert all(v == 0.0 for v in rep.anchor_std.values())


def test_texture_sensitivity(bgs):
    rep = texture_sensitivity(ParameterOracle(), bgs[:2], SMALL, sweep_size=4)
    assert rep.kinds == TEXTURE_KINDS
    base = run_sweep(ParameterOracle(), "LpLow", 4, bgs[:2], PLANARITY, SMALL)
    assert np.array_equal(rep.reports["None"].mean_curve, base.mean_curve)
    for r in rep.reports.values():
        assert np.array_equal(r.params, base.params)
    geo = texture_sensitivity(GeometryOracle(), bgs[:1], SMALL, sweep_size=4)
    curves = [r.mean_curve for r in geo.reports.values()]
    for c in curves[1:]:
        assert np.allclose(c, curves[0])


def grid_ids(n_obj, n_views):
    return np.repeat(np.arange(n_obj), n_views), np.tile(np.arange(n_views), n_obj)


def test_mental_rotation_perfect_embeddings():
    ids, vc = grid_ids(6, 4)
    E = np.eye(6)[ids] + 1e-3 * np.random.default_rng(0).normal(size=(24, 6))
    rep = mental_rotation_eval(E, ids, vc)
    assert rep.auroc == 1.0 and rep.eer == 0.0
    assert rep.n_positives == 6 * 6 and rep.n_negatives == 24 * 23 // 2 - 6 * 6


def test_mental_rotation_random_is_chance():
    ids, vc = grid_ids(4, 4)
    scores = [mental_rotation_eval(np.random.default_rng(s).normal(size=(16, 8)), ids, vc).auroc for s in range(100)]
    assert abs(np.mean(scores) - 0.5) < 0.05


def test_mental_rotation_hard_keeps_upper_half(rng):
    ids, vc = grid_ids(5, 4)
    E = rng.normal(size=(20, 8))
    base = rng.normal(size=(20, 8))
    easy = mental_rotation_eval(E, ids, vc)
    hard = mental_rotation_eval(E, ids, vc, "Hard", base)
    assert hard.n_positives == int(np.ceil(easy.n_positives / 2))
    assert hard.n_negatives == easy.n_negatives
    with pytest.raises(ValueError):
        mental_rotation_eval(E, ids, vc, "Hard")


def test_mental_rotation_no_positives():
    ids = np.arange(5)
    with pytest.raises(UndefinedMetric):
        mental_rotation_eval(np.eye(5), ids, np.zeros(5))
    (pi, pj), _ = verification_pairs([0, 0, 1], [1, 1, 0])
    assert len(pi) == 0


def test_object_dataset(bgs):
    ds = make_object_dataset(3, 4, bgs, SMALL, seed=1, appearance="varied")
    assert ds.images.shape == (12, 24, 24, 3)
    assert ds.object_ids.tolist() == [0] * 4 + [1] * 4 + [2] * 4
    assert set(ds.view_cluster_ids.tolist()) <= {0, 1, 2, 3}
    again = make_object_dataset(3, 4, bgs, SMALL, seed=1, appearance="varied")
    assert np.array_equal(ds.images, again.images) and np.array_equal(ds.labels, again.labels)
