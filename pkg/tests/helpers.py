"""Shared oracles for the test-suite."""

import math

import numpy as np

from shapeattr.model import Batch, combined_loss, forward, init_mlp, loss_and_gradients


def numeric_gradient(params, batch, config, name, index, step=1e-5):
    arr = params.arrays[name]
    old = arr[index]

    def loss():
        pred = forward(params, batch.images)
        return combined_loss(batch.labels, pred.probs, pred.embeddings, batch.triplets, config)

    arr[index] = old + step
    up = loss()
    arr[index] = old - step
    down = loss()
    arr[index] = old
    return (up - down) / (2 * step)


def relative_error(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def all_triplets(object_ids):
    ids = np.asarray(object_ids)
    out = []
    for a in range(len(ids)):
        for p in range(len(ids)):
            if p != a and ids[p] == ids[a]:
                out.extend((a, p, n) for n in range(len(ids)) if ids[n] != ids[a])
    return np.array(out, dtype=np.int64)


def tiny_gradcheck(seed, config):
    """Max relative error over all 10 parameters of the (1,1,3)->1->(1 attribute, 2-D embedding) model."""
    rng = np.random.default_rng([77, seed])
    params = init_mlp((1, 1, 3), hidden=(1,), n_attributes=1, embed_dim=2, seed=seed)
    for k in params.arrays:
        params.arrays[k] = rng.normal(0, 1.0, size=params.arrays[k].shape)
    assert params.n_parameters == 10
    images = rng.uniform(size=(6, 1, 1, 3))
    labels = rng.integers(-1, 2, size=(6, 1))
    labels[0, 0] = 1
    ids = np.array([0, 0, 1, 1, 2, 2])
    batch = Batch(images, labels, all_triplets(ids), ids)
    _, grads = loss_and_gradients(params, batch, config)
    worst = 0.0
    for name, arr in params.arrays.items():
        for index in np.ndindex(arr.shape):
            n = numeric_gradient(params, batch, config, name, index)
            worst = max(worst, relative_error(grads[name][index], n))
    return worst


def pair_count_auroc(pos, neg):
    wins = 0.0
    for p in pos:
        for n in neg:
            wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(pos) * len(neg))


def naive_ranks(x):
    r = []
    for v in x:
        below = sum(1 for u in x if u < v)
        same = sum(1 for u in x if u == v)
        r.append(below + (same + 1) / 2.0)
    return r


def naive_spearman(x, y):
    rx, ry = naive_ranks(list(x)), naive_ranks(list(y))
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return num / den


ACCEPTANCE = []  # (criterion, verdict line), printed in the terminal summary


def record(criterion, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{criterion:>2}] {name}: {detail}"
    ACCEPTANCE.append((criterion, line))
    print(line)
    return ok
