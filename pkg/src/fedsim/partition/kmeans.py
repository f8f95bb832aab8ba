"""Seeded Lloyd's k-means with k-means++ seeding."""

import numpy as np

from ..rng import substream


def _sq_dists(x, centroids):
    d2 = (
        np.einsum("ij,ij->i", x, x)[:, None]
        - 2.0 * x @ centroids.T
        + np.einsum("ij,ij->i", centroids, centroids)[None, :]
    )
    return np.maximum(d2, 0.0)


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(x, x[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            cum = np.cumsum(d2)
            nxt = int(np.searchsorted(cum, rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
        else:
            # every point coincides with a chosen centroid
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(free[rng.integers(free.size)])
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(x, x[[nxt]])[:, 0])
    return x[chosen].copy()


def _fill_empty(x, labels, d2, k):
    """Move the farthest point of a multi-member cluster into each empty cluster."""
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        own = d2[np.arange(len(labels)), labels]
        own = np.where(counts[labels] > 1, own, -1.0)
        far = int(np.argmax(own))
        counts[labels[far]] -= 1
        labels[far] = c
        counts[c] = 1
    return labels


def kmeans(points, k: int, seed: int, max_iter: int = 100, tol: float = 1e-6) -> np.ndarray:
    """Cluster ids for every row of ``points``; every cluster ends non-empty."""
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = substream(seed, "kmeans_init")
    centroids = kmeans_pp_init(x, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = _sq_dists(x, centroids)
        labels = np.argmin(d2, axis=1).astype(np.int64)
        labels = _fill_empty(x, labels, d2, k)
        updated = np.zeros_like(centroids)
        np.add.at(updated, labels, x)
        updated /= np.bincount(labels, minlength=k)[:, None]
        shift = np.sqrt(((updated - centroids) ** 2).sum(axis=1)).max()
        centroids = updated
        if shift < tol:
            break
    return labels
