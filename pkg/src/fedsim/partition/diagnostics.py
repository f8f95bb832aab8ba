"""Jensen-Shannon divergence between client label distributions."""

import numpy as np

from ..errors import LayoutError
from .spec import PartitionResult


def _check_prob(v, name):
    if np.any(v < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(v.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} sums to {v.sum()}, not 1")


def _kl2(a, b):
    # 0 * log 0 := 0; b > 0 wherever a > 0 since b is a midpoint
    nz = a > 0
    return float(np.sum(a[nz] * np.log2(a[nz] / b[nz])))


def js_divergence(p, q) -> float:
    """Base-2 JS divergence, in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise LayoutError(f"length mismatch: {p.shape} vs {q.shape}")
    _check_prob(p, "p")
    _check_prob(q, "q")
    m = 0.5 * (p + q)
    return min(max(0.5 * _kl2(p, m) + 0.5 * _kl2(q, m), 0.0), 1.0)


def jsd_matrix(result: PartitionResult | np.ndarray) -> np.ndarray:
    """Symmetric N x N matrix of pairwise JS divergences between client label mixes."""
    counts = result.label_matrix if isinstance(result, PartitionResult) else result
    counts = np.asarray(counts, dtype=np.float64)
    totals = counts.sum(axis=1)
    if np.any(totals <= 0):
        raise ValueError("every client needs at least one example")
    dist = counts / totals[:, None]
    n = dist.shape[0]
    out = np.zeros((n, n))
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(dist > 0, dist * np.log2(dist), 0.0)
        for i in range(n - 1):
            m = 0.5 * (dist[i] + dist[i + 1:])
            mlogm = np.where(m > 0, m * np.log2(m), 0.0)
            # JSD = H(m) - (H(p) + H(q)) / 2
            vals = -mlogm.sum(axis=1) + 0.5 * (plogp[i].sum() + plogp[i + 1:].sum(axis=1))
            out[i, i + 1:] = vals
    out = np.clip(out, 0.0, 1.0)
    return np.triu(out, 1) + np.triu(out, 1).T


def mean_off_diagonal(matrix: np.ndarray) -> float:
    n = matrix.shape[0]
    if n < 2:
        return 0.0
    return float(matrix.sum() / (n * (n - 1)))
