"""Spectral clustering of a precomputed similarity matrix into viewpoint clusters."""

from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans

from .errors import InvalidArgument, NumericFailure


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    k: int


def validate_similarity(S, tol=1e-9):
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidArgument("similarity matrix must be square")
    if not np.isfinite(S).all():
        raise InvalidArgument("similarity matrix must be finite")
    if np.abs(S - S.T).max() > tol:
        raise InvalidArgument("similarity matrix must be symmetric")
    if S.min() < -tol or S.max() > 1 + tol:
        raise InvalidArgument("similarities must lie in [0, 1]")
    return S


def normalized_laplacian(S):
    """``I - D^-1/2 S D^-1/2``."""
    S = validate_similarity(S)
    deg = S.sum(axis=1)
    if (deg <= 0).any():
        raise InvalidArgument("similarity matrix has a zero-degree row")
    d = 1.0 / np.sqrt(deg)
    return np.eye(len(S)) - d[:, None] * S * d[None, :]


def laplacian_spectrum(S):
    L = normalized_laplacian(S)
    try:
        vals, vecs = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"eigendecomposition failed: {exc}") from exc
    return vals, vecs


def spectral_cluster(S, k, seed=0, n_init=10):
    """Bottom-``k`` Laplacian eigenvectors, rows renormalized, then k-means."""
    S = validate_similarity(S)
    n = len(S)
    if int(k) != k or not 2 <= k <= n:
        raise InvalidArgument(f"k must be an integer in [2, {n}]")
    k = int(k)
    _, vecs = laplacian_spectrum(S)
    U = vecs[:, :k]
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    U = U / np.where(norms > 0, norms, 1.0)
    if k == n:
        return ClusterAssignment(np.arange(n), k)
    km = KMeans(n_clusters=k, n_init=n_init, random_state=int(seed)).fit(U)
    return ClusterAssignment(_canonical_labels(km.labels_), k)


def _canonical_labels(labels):
    # relabel by first appearance so equal partitions give equal label vectors
    mapping = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, l in enumerate(labels):
        out[i] = mapping.setdefault(int(l), len(mapping))
    return out


def suggest_k(S, k_max=None, tol=1e-9):
    """Cluster count at the largest gap ``lambda[k] - lambda[k-1]`` of the Laplacian spectrum.

    A spectrum with no gap at all is either fully disconnected (all
    eigenvalues 0, so every point is its own cluster) or fully connected.
    """
    vals, _ = laplacian_spectrum(S)
    n = len(vals)
    k_max = n - 1 if k_max is None else min(int(k_max), n - 1)
    gaps = np.diff(vals)[:k_max]
    if gaps.size == 0 or gaps.max() < tol:
        return n if vals[-1] < 0.5 else 1
    return int(np.flatnonzero(gaps >= gaps.max() - tol)[0] + 1)


def planted_partition(sizes, within=0.9, between=0.1, jitter=0.05, seed=0):
    """Noisy block similarity matrix and its ground-truth labels."""
    rng = np.random.default_rng([0xB10C, int(seed)])
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = len(labels)
    same = labels[:, None] == labels[None, :]
    base = np.where(same, within, between)
    noise = rng.uniform(-jitter, jitter, size=(n, n))
    noise = np.triu(noise, 1)
    S = np.clip(base + noise + noise.T, 0.0, 1.0)
    np.fill_diagonal(S, 1.0)
    return S, labels


def agreement(labels, truth):
    """Best fraction of matching labels over all label permutations (Hungarian matching)."""
    from scipy.optimize import linear_sum_assignment

    labels = np.asarray(labels)
    truth = np.asarray(truth)
    a = np.unique(labels)
    b = np.unique(truth)
    C = np.zeros((len(a), len(b)))
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            C[i, j] = np.sum((labels == x) & (truth == y))
    r, c = linear_sum_assignment(-C)
    return float(C[r, c].sum() / len(labels))


def read_matrix(path):
    """Read a similarity matrix from CSV (optionally with a header row) or ``.npy``."""
    path = str(path)
    if path.endswith(".npy"):
        return np.load(path)
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(t) for t in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    return np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)


def write_assignment(path, assignment):
    with open(path, "w") as fh:
        fh.write("index,label\n")
        for i, l in enumerate(assignment.labels):
            fh.write(f"{i},{int(l)}\n")
