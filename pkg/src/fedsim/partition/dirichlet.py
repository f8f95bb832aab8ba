"""Non-IID client partitions driven by Dirichlet draws."""

from __future__ import annotations

import numpy as np

from ..errors import ClusteringDegenerate, EmptyClient, EmptyDataset, TooManyClients
from ..rng import derive_seed, substream
from .kmeans import kmeans
from .spec import PartitionResult, PartitionSpec, Strategy, label_counts


def sample_dirichlet(concentration, rng: np.random.Generator) -> np.ndarray:
    """Normalized Gamma draws, computed in log space.

    Uses Gamma(a) = Gamma(a + 1) * U**(1/a) so that tiny concentrations do
    not underflow to an all-zero vector.
    """
    a = np.asarray(concentration, dtype=np.float64)
    g = rng.standard_gamma(a + 1.0)
    u = 1.0 - rng.random(a.shape)  # in (0, 1]
    live = a > 0
    logx = np.full(a.shape, -np.inf)
    logx[live] = np.log(g[live]) + np.log(u[live]) / a[live]
    logx -= logx.max()
    x = np.exp(logx)
    return x / x.sum()


def largest_remainder(total: int, weights) -> np.ndarray:
    """Integer split of ``total`` proportional to ``weights``; ties go to the lowest index."""
    w = np.asarray(weights, dtype=np.float64)
    raw = total * w / w.sum()
    base = np.floor(raw).astype(np.int64)
    short = int(total - base.sum())
    if short > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    elif short < 0:  # float slop can push floors sum over by one
        order = np.argsort(raw - base, kind="stable")
        for i in order:
            if short == 0:
                break
            if base[i] > 0:
                base[i] -= 1
                short += 1
    return base


def balanced_sizes(n: int, n_clients: int) -> list[int]:
    base, extra = divmod(n, n_clients)
    return [base + (1 if j < extra else 0) for j in range(n_clients)]


def _check_counts(n: int, n_clients: int) -> None:
    if n == 0:
        raise EmptyDataset("cannot partition an empty dataset")
    if n_clients > n:
        raise TooManyClients(f"{n_clients} clients for {n} examples")


def _label_dirichlet(labels: np.ndarray, n_labels: int, spec: PartitionSpec):
    n = labels.shape[0]
    _check_counts(n, spec.n_clients)
    prior = np.full(n_labels, 1.0 / n_labels) if spec.prior is None else np.asarray(spec.prior)
    if prior.shape[0] != n_labels:
        raise ValueError(f"prior has {prior.shape[0]} entries for {n_labels} labels")

    pools = []
    for c in range(n_labels):
        idx = np.flatnonzero(labels == c)
        pools.append(substream(spec.seed, "label_pool", c).permutation(idx))
    cursor = np.zeros(n_labels, dtype=np.int64)
    remaining = np.array([len(p) for p in pools], dtype=np.int64)

    assignments, draws, refills = {}, [], []
    for j, size in enumerate(balanced_sizes(n, spec.n_clients)):
        q = sample_dirichlet(spec.alpha * prior, substream(spec.seed, "label_q", j))
        draws.append(q)
        want = largest_remainder(size, q)
        take = np.minimum(want, remaining)
        vacancy = int(size - take.sum())
        chosen = []
        for c in np.flatnonzero(take):
            chosen.append(pools[c][cursor[c]:cursor[c] + take[c]])
            cursor[c] += take[c]
        remaining -= take

        # dynamic reassignment: backfill one example at a time, label drawn
        # with probability proportional to what is still unassigned
        fill_rng = substream(spec.seed, "label_fill", j)
        for _ in range(vacancy):
            cum = np.cumsum(remaining)
            c = int(np.searchsorted(cum, fill_rng.integers(cum[-1]), side="right"))
            chosen.append(pools[c][cursor[c]:cursor[c] + 1])
            cursor[c] += 1
            remaining[c] -= 1
        refills.append(vacancy)
        assignments[j] = np.sort(np.concatenate(chosen)).astype(np.int64)

    result = PartitionResult(
        assignments, spec, label_counts(assignments, labels, n_labels),
        meta={"q": np.array(draws), "reassigned": refills},
    )
    return result


def _as_labels(labels) -> tuple[np.ndarray, int]:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if labels.size and labels.min() < 0:
        raise ValueError("labels must be non-negative")
    return labels, int(labels.max()) + 1 if labels.size else 0


def dirichlet_label_partition(labels, spec: PartitionSpec) -> PartitionResult:
    """Near-equal client sizes with label mixes drawn from Dir(alpha * prior)."""
    if spec.strategy is not Strategy.LABEL_DIRICHLET:
        raise ValueError(f"expected label_dirichlet spec, got {spec.strategy.value}")
    labels, n_labels = _as_labels(labels)
    if spec.prior is not None:
        if n_labels > len(spec.prior):
            raise ValueError("label id outside the prior's support")
        n_labels = len(spec.prior)
    return _label_dirichlet(labels, n_labels, spec)


def quantity_partition(n_examples: int, spec: PartitionSpec, labels=None) -> PartitionResult:
    """Client sizes from z ~ Dir_N(beta); examples dealt from one seeded shuffle."""
    if spec.strategy is not Strategy.QUANTITY_DIRICHLET:
        raise ValueError(f"expected quantity_dirichlet spec, got {spec.strategy.value}")
    n, n_clients = int(n_examples), spec.n_clients
    _check_counts(n, n_clients)
    z = sample_dirichlet(np.full(n_clients, float(spec.beta)), substream(spec.seed, "quantity_z"))
    # one guaranteed example each, the rest split by largest remainder
    sizes = 1 + largest_remainder(n - n_clients, z)
    perm = substream(spec.seed, "quantity_perm").permutation(n)
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    assignments = {
        j: np.sort(perm[bounds[j]:bounds[j + 1]]).astype(np.int64) for j in range(n_clients)
    }
    if labels is None:
        matrix = sizes.reshape(-1, 1).astype(np.int64)
    else:
        labels, n_labels = _as_labels(labels)
        matrix = label_counts(assignments, labels, n_labels)
    return PartitionResult(assignments, spec, matrix, meta={"z": z})


def cluster_feature_partition(embeddings, spec: PartitionSpec) -> PartitionResult:
    """K-means pseudo-labels fed through the label-Dirichlet partitioner."""
    if spec.strategy is not Strategy.CLUSTER_DIRICHLET:
        raise ValueError(f"expected cluster_dirichlet spec, got {spec.strategy.value}")
    x = np.asarray(embeddings, dtype=np.float64)
    k = int(spec.n_clusters)
    if x.shape[0] < k:
        raise ValueError(f"{x.shape[0]} points cannot form {k} clusters")
    if k > 1 and np.all(x == x[0]):
        raise ClusteringDegenerate("all embeddings are identical")
    clusters = kmeans(x, k, seed=derive_seed(spec.seed, "kmeans"))
    result = _label_dirichlet(clusters, k, spec)
    result.meta["clusters"] = clusters
    return result


def natural_partition(group_ids, labels=None) -> PartitionResult:
    """One client per pre-existing group (data source, sub-corpus, ...)."""
    groups = np.asarray(group_ids, dtype=np.int64)
    if groups.size == 0:
        raise EmptyDataset("cannot partition an empty dataset")
    n_groups = int(groups.max()) + 1
    counts = np.bincount(groups, minlength=n_groups)
    if groups.min() < 0 or np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise EmptyClient(f"group ids are not dense; empty groups {missing}")
    assignments = {g: np.flatnonzero(groups == g).astype(np.int64) for g in range(n_groups)}
    spec = PartitionSpec(Strategy.NATURAL, n_groups)
    if labels is None:
        matrix = counts.reshape(-1, 1).astype(np.int64)
    else:
        labels, n_labels = _as_labels(labels)
        matrix = label_counts(assignments, labels, n_labels)
    return PartitionResult(assignments, spec, matrix)
