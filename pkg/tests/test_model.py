import warnings

import numpy as np
import pytest

from helpers import all_triplets, numeric_gradient, relative_error, tiny_gradcheck
from shapeattr.errors import InvalidArgument, NumericFailure
from shapeattr.model import (
    ATTRIBUTES,
    Batch,
    EmptyTripletWarning,
    ModelParams,
    TrainConfig,
    UNLABELED,
    attribute_loss,
    augment,
    combined_loss,
    forward,
    gradients,
    init_cam_model,
    init_mlp,
    load_checkpoint,
    loss_and_gradients,
    mine_triplets,
    param_group,
    pooling_views,
    sample_batch_indices,
    save_checkpoint,
    sgd_momentum_step,
    test_time_pool,
    train,
    triplet_loss,
)


def small_mlp(seed=0, shape=(8, 8, 3)):
    return init_mlp(shape, hidden=(16, 8), n_attributes=3, embed_dim=4, seed=seed)


# ----------------------------------------------------------------- forward


def test_vocabulary_has_twelve_attributes():
    assert len(ATTRIBUTES) == 12


def test_forward_invariants(rng):
    for params in (small_mlp(), init_cam_model((8, 8, 3), (4, 4), 3, 4, seed=1)):
        x = rng.uniform(size=(10, 8, 8, 3))
        pred = forward(params, x)
        assert np.abs(np.linalg.norm(pred.embeddings, axis=1) - 1).max() < 1e-6
        assert (pred.probs > 0).all() and (pred.probs < 1).all()
        dup = forward(params, np.stack([x[3], x[3]]))
        assert np.array_equal(dup.probs[0], dup.probs[1]) and np.array_equal(dup.embeddings[0], dup.embeddings[1])


def test_zero_attribute_head_gives_half(rng):
    p = small_mlp()
    p.arrays["attr_W"][:] = 0
    p.arrays["attr_b"][:] = 0
    assert (forward(p, rng.uniform(size=(5, 8, 8, 3))).probs == 0.5).all()


def test_forward_shape_mismatch():
    with pytest.raises(InvalidArgument):
        forward(small_mlp(), np.zeros((2, 9, 8, 3)))


def test_forward_non_finite():
    p = small_mlp()
    p.arrays["attr_W"][0, 0] = np.nan
    with pytest.raises(NumericFailure):
        forward(p, np.zeros((1, 8, 8, 3)))


def test_param_groups():
    assert param_group("trunk_W0") == "trunk"
    assert param_group("conv_b1") == "trunk"
    assert param_group("attr_W") == "attribute"
    assert param_group("emb_b") == "embedding"


# ------------------------------------------------------------------ losses


def test_attribute_loss_examples():
    assert attribute_loss(np.full((3, 2), UNLABELED), np.full((3, 2), 0.3)) == 0.0
    assert attribute_loss([[1]], [[0.5]]) == pytest.approx(0.6931, abs=1e-4)
    Y = np.array([[1, UNLABELED]])
    assert attribute_loss(Y, [[0.7, 0.2]]) == attribute_loss(Y, [[0.7, 0.9]])


def test_attribute_loss_rejects_exact_zero_one():
    with pytest.raises(NumericFailure):
        attribute_loss([[1]], [[1.0]])
    with pytest.raises(NumericFailure):
        attribute_loss([[0]], [[0.0]])


def _emb(dap, dan):
    return np.array([[0.0, 0.0], [np.sqrt(dap), 0.0], [0.0, np.sqrt(dan)]])


def test_triplet_loss_examples():
    t = [[0, 1, 2]]
    assert triplet_loss(_emb(0.0, 0.5), t, 0.1) == 0.0
    assert triplet_loss(_emb(0.3, 0.2), t, 0.1) == pytest.approx(0.2)
    assert triplet_loss(np.ones((3, 2)) / np.sqrt(2), t, 0.1) == pytest.approx(0.1)


def test_triplet_loss_empty_warns():
    with pytest.warns(EmptyTripletWarning):
        assert triplet_loss(np.eye(3), np.zeros((0, 3)), 0.1) == 0.0


def test_combined_loss_examples():
    cfg = TrainConfig()
    E = _emb(0.3, 0.2)
    t = np.array([[0, 1, 2]])
    assert combined_loss([[1]], [[0.5]], E, t, cfg) == pytest.approx(0.6931 + 0.6, abs=1e-4)
    assert combined_loss([[1]], [[0.5]], _emb(0, 0.5), t, cfg) == pytest.approx(attribute_loss([[1]], [[0.5]]))
    assert combined_loss([[UNLABELED]], [[0.5]], E, t, cfg) == pytest.approx(3 * 0.2)


def test_combined_loss_nonnegative(rng):
    cfg = TrainConfig()
    for _ in range(50):
        E = rng.normal(size=(6, 3))
        E /= np.linalg.norm(E, axis=1, keepdims=True)
        ids = [0, 0, 1, 1, 2, 2]
        P = rng.uniform(0.01, 0.99, size=(6, 2))
        Y = rng.integers(-1, 2, size=(6, 2))
        assert combined_loss(Y, P, E, all_triplets(ids), cfg) >= 0


# ------------------------------------------------------------------ mining


def test_mining_well_separated_falls_back():
    E = np.array([[0, 0], [0.01, 0], [5, 5], [5.01, 5]])
    trip, n_semi, n_fallback = mine_triplets(E, [0, 0, 1, 1], 0.1, return_counts=True)
    assert n_semi == 0 and n_fallback == len(trip) == 4
    assert triplet_loss(E, trip, 0.1) == 0.0


def test_mining_selects_semi_hard_negative():
    # D(a,p) = 0.1, D(a,n1) = 0.15 (in band), D(a,n2) = 0.5 (outside)
    E = np.array([[0.0, 0.0], [np.sqrt(0.1), 0.0], [-np.sqrt(0.15), 0.0], [0.0, np.sqrt(0.5)]])
    trip = mine_triplets(E, [0, 0, 1, 2], 0.1)
    assert [tuple(t) for t in trip if t[0] == 0] == [(0, 1, 2)]


def test_mining_object_invariant(rng):
    for strategy in ("semi-hard", "hardest"):
        ids = rng.integers(0, 5, size=30)
        trip = mine_triplets(rng.normal(size=(30, 4)), ids, 0.1, strategy)
        assert len(trip) > 0
        assert (ids[trip[:, 0]] == ids[trip[:, 1]]).all()
        assert (ids[trip[:, 0]] != ids[trip[:, 2]]).all()
        assert (trip[:, 0] != trip[:, 1]).all()


def test_mining_without_pairs_is_empty():
    assert mine_triplets(np.eye(3), [0, 1, 2], 0.1).shape == (0, 3)


# --------------------------------------------------------------- gradients


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_tiny_model(seed):
    assert tiny_gradcheck(seed, TrainConfig()) < 1e-5


@pytest.mark.parametrize("kind", ["mlp", "cam"])
def test_gradcheck_larger_models(kind, rng):
    if kind == "mlp":
        params = init_mlp((4, 4, 3), hidden=(6, 5), n_attributes=3, embed_dim=4, seed=3)
    else:
        params = init_cam_model((5, 5, 3), (3, 4), n_attributes=3, embed_dim=4, seed=3)
    shape = params.input_shape
    ids = np.array([0, 0, 1, 1, 2, 2, 3])
    batch = Batch(rng.uniform(size=(7, *shape)), rng.integers(-1, 2, size=(7, 3)), all_triplets(ids), ids)
    cfg = TrainConfig(margin=0.5)
    _, grads = loss_and_gradients(params, batch, cfg)
    worst = 0.0
    for name, arr in params.arrays.items():
        for index in list(np.ndindex(arr.shape))[:12]:
            worst = max(worst, relative_error(grads[name][index], numeric_gradient(params, batch, cfg, name, index)))
    assert worst < 1e-5


def test_zero_gradient_without_signal(rng):
    p = small_mlp()
    batch = Batch(rng.uniform(size=(4, 8, 8, 3)), np.full((4, 3), UNLABELED), np.zeros((0, 3), dtype=int), None)
    g = gradients(p, batch, TrainConfig())
    assert all((v == 0).all() for v in g.values())


def test_normalization_gradient_orthogonal(rng):
    p = small_mlp()
    ids = np.array([0, 0, 1, 1])
    batch = Batch(rng.uniform(size=(4, 8, 8, 3)), rng.integers(0, 2, (4, 3)), all_triplets(ids), ids)
    info, _ = loss_and_gradients(p, batch, TrainConfig(margin=2.0))
    e = forward(p, batch.images).embeddings
    assert np.abs(np.sum(info["embedding_grad"] * e, axis=1)).max() < 1e-12
    assert np.abs(info["embedding_grad"]).max() > 0


# --------------------------------------------------------------- optimizer


def _unit_lr(momentum):
    return TrainConfig(lr_trunk=1.0, lr_attribute=1.0, lr_embedding=1.0, momentum=momentum)


def test_sgd_examples():
    p = small_mlp()
    g = {k: np.full_like(v, 0.01) for k, v in p.arrays.items()}
    plain, _ = sgd_momentum_step(p, g, {}, _unit_lr(0.0))
    assert all(np.allclose(plain.arrays[k], p.arrays[k] - 0.01) for k in p.arrays)
    zero = {k: np.zeros_like(v) for k, v in p.arrays.items()}
    same, _ = sgd_momentum_step(p, zero, {}, _unit_lr(0.9))
    assert all(np.array_equal(same.arrays[k], p.arrays[k]) for k in p.arrays)
    cfg = _unit_lr(0.9)
    q, vel = sgd_momentum_step(p, g, {}, cfg)
    q, vel = sgd_momentum_step(q, g, vel, cfg)
    assert all(np.allclose(p.arrays[k] - q.arrays[k], 2.9 * 0.01) for k in p.arrays)


def test_sgd_per_group_rates():
    p = small_mlp()
    g = {k: np.ones_like(v) for k, v in p.arrays.items()}
    cfg = TrainConfig(lr_trunk=0.1, lr_attribute=0.2, lr_embedding=0.3, momentum=0.0)
    q, _ = sgd_momentum_step(p, g, {}, cfg)
    for k in p.arrays:
        assert np.allclose(p.arrays[k] - q.arrays[k], cfg.lr(param_group(k)))


def test_sgd_non_finite():
    p = small_mlp()
    g = {k: np.full_like(v, np.inf) for k, v in p.arrays.items()}
    with pytest.raises(NumericFailure):
        sgd_momentum_step(p, g, {}, TrainConfig())


def test_config_validation():
    for kw in ({"margin": 0}, {"triplet_weight": 0}, {"momentum": 1.0}, {"mining": "easy"}, {"weight_decay": -1}):
        with pytest.raises(InvalidArgument):
            TrainConfig(**kw)


# ------------------------------------------------------------ augmentation


def test_augment_examples(rng):
    img = rng.uniform(size=(10, 10, 3))
    assert np.array_equal(augment(img, 3, 10, (1.0, 1.0), flip=False), img)
    assert np.array_equal(augment(img, 5, 8), augment(img, 5, 8))
    once = augment(img, 5, 10, (1.0, 1.0), flip=True)
    assert np.array_equal(augment(once, 5, 10, (1.0, 1.0), flip=True), img)
    out = augment(img, 9, 6)
    assert out.shape == (6, 6, 3)
    with pytest.raises(InvalidArgument):
        augment(img, 0, 11)


def test_augment_flip_rate():
    img = np.arange(4 * 4 * 3, dtype=float).reshape(4, 4, 3) / 48
    flips = sum(not np.allclose(augment(img, s, 4, (1, 1)), img) for s in range(400))
    assert 160 < flips < 240


# ------------------------------------------------------------ test-time pool


def test_pool_constant_model(rng):
    p = small_mlp()
    p.arrays["attr_W"][:] = 0
    p.arrays["emb_W"][:] = 0
    p.arrays["emb_b"][:] = [1.0, 2.0, 0.0, 0.0]
    probs, emb = test_time_pool(p, rng.uniform(size=(12, 12, 3)))
    single = forward(p, np.zeros((1, 8, 8, 3)))
    assert np.allclose(probs, single.probs[0]) and np.allclose(emb, single.embeddings[0])


def test_pool_norm_and_views(rng):
    p = small_mlp()
    probs, emb = test_time_pool(p, rng.uniform(size=(11, 13, 3)))
    assert abs(np.linalg.norm(emb) - 1) < 1e-6
    assert pooling_views(np.zeros((11, 13, 3)), 8).shape == (10, 8, 8, 3)
    assert pooling_views(np.zeros((11, 13, 3)), 8, flips=False).shape == (5, 8, 8, 3)


def test_pool_symmetric_image(rng):
    p = small_mlp()
    half = rng.uniform(size=(12, 6, 3))
    sym = np.concatenate([half, half[:, ::-1]], axis=1)
    a = test_time_pool(p, sym, flips=True)
    b = test_time_pool(p, sym, flips=False)
    assert np.abs(a[0] - b[0]).max() < 1e-6 and np.abs(a[1] - b[1]).max() < 1e-6
    img = rng.uniform(size=(8, 8, 3))
    sym8 = np.concatenate([img[:, :4], img[:, :4][:, ::-1]], axis=1)
    single = forward(p, sym8[None])
    pooled = test_time_pool(p, sym8)
    assert np.abs(pooled[0] - single.probs[0]).max() < 1e-6
    assert np.abs(pooled[1] - single.embeddings[0]).max() < 1e-6


# ---------------------------------------------------------------- training


def test_batch_sampling_pk():
    ids = np.repeat(np.arange(10), 5)
    idx = sample_batch_indices(np.random.default_rng(0), ids, 12, 4)
    assert len(idx) == 12 and len(set(idx.tolist())) == 12
    assert sorted(np.bincount(ids[idx])[np.bincount(ids[idx]) > 0].tolist()) == [4, 4, 4]


def _separable_set(n=128, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.2, 0.8, size=(n, 4, 4, 3))
    y = np.zeros((n, 2), dtype=np.int64)
    y[:, 0] = rng.integers(0, 2, n)
    y[:, 1] = rng.integers(0, 2, n)
    x[:, :2, :, 0] += np.where(y[:, 0] == 1, 0.15, -0.15)[:, None, None]
    x[:, 2:, :, 1] += np.where(y[:, 1] == 1, 0.15, -0.15)[:, None, None]
    return np.clip(x, 0, 1), y


def test_toy_separable_set_converges():
    x, y = _separable_set()
    params = init_mlp((4, 4, 3), hidden=(16, 8), n_attributes=2, embed_dim=4, seed=0)
    cfg = TrainConfig(steps=500, batch_size=32, views_per_object=1, crop_size=4, jitter=(1, 1), lr_trunk=0.1, lr_attribute=0.1)
    params, _ = train(params, x, y, np.arange(len(x)), cfg)
    assert attribute_loss(y, forward(params, x).probs) < 0.05


def test_training_bit_reproducible(rng):
    x = rng.uniform(size=(24, 10, 10, 3))
    y = rng.integers(-1, 2, size=(24, 3))
    ids = np.repeat(np.arange(6), 4)
    cfg = TrainConfig(steps=15, batch_size=8, views_per_object=4, crop_size=8)
    a, ca = train(small_mlp(), x, y, ids, cfg)
    b, cb = train(small_mlp(), x, y, ids, cfg)
    assert ca == cb
    assert all(np.array_equal(a.arrays[k], b.arrays[k]) for k in a.arrays)
    assert any(row[2] > 0 for row in ca)  # triplet term was active


def test_training_zero_steps_is_init(rng):
    p = small_mlp()
    q, curve = train(p, rng.uniform(size=(4, 8, 8, 3)), np.zeros((4, 3), int), np.arange(4), TrainConfig(steps=0, crop_size=8))
    assert curve == [] and all(np.array_equal(p.arrays[k], q.arrays[k]) for k in p.arrays)


def test_checkpoint_round_trip(tmp_path):
    for p in (small_mlp(2), init_cam_model((8, 8, 3), (3, 5), 3, 4, seed=2)):
        save_checkpoint(p, tmp_path / "ck")
        q = load_checkpoint(tmp_path / "ck")
        assert q.kind == p.kind and q.input_shape == p.input_shape
        assert sorted(q.arrays) == sorted(p.arrays)
        assert all(np.array_equal(p.arrays[k], q.arrays[k]) for k in p.arrays)
    text = (tmp_path / "ck.manifest.txt").read_text()
    assert text.startswith("kind cam\ninput_shape 8,8,3\ntensor ")
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "missing")


def test_model_params_copy_is_deep():
    p = small_mlp()
    q = p.copy()
    q.arrays["attr_b"][0] = 5.0
    assert p.arrays["attr_b"][0] == 0.0
    assert isinstance(q, ModelParams)
