"""Partition JSON files and JSD CSV sidecars."""

import json

import numpy as np

from .spec import PartitionResult, PartitionSpec, Strategy, label_counts

FORMAT_VERSION = 1


def partition_to_dict(result: PartitionResult) -> dict:
    spec = result.spec
    return {
        "version": FORMAT_VERSION,
        "strategy": spec.strategy.value,
        "n_clients": result.n_clients,
        "alpha": spec.alpha,
        "beta": spec.beta,
        "n_clusters": spec.n_clusters,
        "prior": list(spec.prior) if spec.prior is not None else None,
        "seed": spec.seed,
        "assignments": {str(k): [int(i) for i in v] for k, v in sorted(result.assignments.items())},
        "label_matrix": np.asarray(result.label_matrix).astype(int).tolist(),
    }


def partition_from_dict(doc: dict, labels=None) -> PartitionResult:
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported partition file version {doc.get('version')!r}")
    spec = PartitionSpec(
        strategy=Strategy(doc["strategy"]),
        n_clients=int(doc["n_clients"]),
        alpha=doc.get("alpha"),
        beta=doc.get("beta"),
        prior=doc.get("prior"),
        n_clusters=doc.get("n_clusters"),
        seed=int(doc.get("seed") or 0),
    )
    assignments = {int(k): np.asarray(v, dtype=np.int64) for k, v in doc["assignments"].items()}
    if sorted(assignments) != list(range(spec.n_clients)):
        raise ValueError("assignment keys must be 0..n_clients-1")
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        n_labels = len(spec.prior) if spec.prior else int(labels.max()) + 1
        matrix = label_counts(assignments, labels, n_labels)
    elif doc.get("label_matrix") is not None:
        matrix = np.asarray(doc["label_matrix"], dtype=np.int64)
    else:
        matrix = np.array([[len(assignments[i])] for i in range(spec.n_clients)], dtype=np.int64)
    return PartitionResult(assignments, spec, matrix)


def save_partition(result: PartitionResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(partition_to_dict(result), fh, separators=(",", ":"))
        fh.write("\n")


def load_partition(path, labels=None) -> PartitionResult:
    with open(path, encoding="utf-8") as fh:
        return partition_from_dict(json.load(fh), labels)


def write_jsd_csv(matrix: np.ndarray, path) -> None:
    np.savetxt(path, matrix, delimiter=",", fmt="%.12g")
