"""Text classification: logistic regression on hashed n-gram features."""

import numpy as np

from ..partition.embed import embed_many
from .base import TaskBinding
from .data import FeatureSet, TextClassificationData
from .linear import SoftmaxModel
from .metrics import accuracy


class TextClassificationTask(TaskBinding):
    name = "tc"

    def __init__(self, n_classes: int, feature_dim: int = 256, feature_seed: int = 0,
                 n_blocks: int = 1, frozen=(), init_scale: float = 0.0, init_seed: int = 0):
        self.n_classes = n_classes
        self.feature_dim = feature_dim
        self.feature_seed = feature_seed
        self.model = SoftmaxModel(feature_dim, n_classes, n_blocks, frozen, init_scale, init_seed)
        self.layout = self.model.layout

    def model_init(self):
        return self.model.model_init()

    def featurize(self, raw: TextClassificationData) -> FeatureSet:
        return FeatureSet(embed_many(raw.docs, self.feature_dim, self.feature_seed), raw.labels)

    def labels(self, raw: TextClassificationData):
        return raw.labels

    def loss_and_grad(self, model, batch: FeatureSet):
        return self.model.loss_and_grad(model, batch.x, batch.y)

    def evaluate(self, model, data: FeatureSet):
        loss, _ = self.model.loss_and_grad(model, data.x, data.y)
        return {"accuracy": accuracy(self.model.predict(model, data.x), data.y), "loss": loss}


def majority_baseline(labels) -> float:
    counts = np.bincount(np.asarray(labels))
    return float(counts.max() / counts.sum())
