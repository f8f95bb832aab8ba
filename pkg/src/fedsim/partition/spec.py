"""Partition configuration and result containers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError


class Strategy(str, enum.Enum):
    LABEL_DIRICHLET = "label_dirichlet"
    QUANTITY_DIRICHLET = "quantity_dirichlet"
    CLUSTER_DIRICHLET = "cluster_dirichlet"
    NATURAL = "natural"


@dataclass(frozen=True)
class PartitionSpec:
    strategy: Strategy
    n_clients: int
    alpha: Optional[float] = None
    beta: Optional[float] = None
    prior: Optional[tuple] = None
    n_clusters: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.prior is not None:
            object.__setattr__(self, "prior", tuple(float(v) for v in self.prior))
        if int(self.n_clients) < 1:
            raise ConfigError("n_clients must be positive", [("n_clients", "must be >= 1")])
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if v is not None and not float(v) > 0:
                raise ConfigError(f"{name} must be > 0", [(name, "must be > 0")])
        needs = {
            Strategy.LABEL_DIRICHLET: "alpha",
            Strategy.CLUSTER_DIRICHLET: "alpha",
            Strategy.QUANTITY_DIRICHLET: "beta",
        }.get(self.strategy)
        if needs and getattr(self, needs) is None:
            raise ConfigError(f"{self.strategy.value} needs {needs}", [(needs, "required")])
        if self.strategy is Strategy.CLUSTER_DIRICHLET and not (self.n_clusters or 0) >= 1:
            raise ConfigError("cluster strategy needs n_clusters >= 1", [("n_clusters", "required")])
        if self.prior is not None:
            p = np.asarray(self.prior)
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ConfigError("prior must be a probability vector", [("prior", "must sum to 1")])


@dataclass
class PartitionResult:
    assignments: dict[int, np.ndarray]
    spec: PartitionSpec
    label_matrix: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_clients(self) -> int:
        return len(self.assignments)

    @property
    def n_examples(self) -> int:
        return int(sum(len(v) for v in self.assignments.values()))

    def sizes(self) -> list[int]:
        return [len(self.assignments[i]) for i in range(self.n_clients)]

    def label_distributions(self) -> np.ndarray:
        m = np.asarray(self.label_matrix, dtype=np.float64)
        return m / m.sum(axis=1, keepdims=True)


def label_counts(assignments: dict[int, np.ndarray], labels, n_labels: int) -> np.ndarray:
    out = np.zeros((len(assignments), n_labels), dtype=np.int64)
    labels = np.asarray(labels)
    for cid in range(len(assignments)):
        out[cid] = np.bincount(labels[assignments[cid]], minlength=n_labels)
    return out
