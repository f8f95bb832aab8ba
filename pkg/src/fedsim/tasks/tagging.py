"""Sequence tagging: a per-token softmax over windowed hashed features."""

import numpy as np

from ..partition.embed import embed_many
from .base import TaskBinding
from .data import FeatureSet, TaggingData
from .linear import SoftmaxModel
from .metrics import accuracy, bio_decode, span_f1, token_f1

PAD = -1


def token_windows(sentence) -> list:
    """(previous, current, next) token id triples; sentence edges padded with ``PAD``."""
    s = np.asarray(sentence, dtype=np.int64)
    padded = np.concatenate([[PAD], s, [PAD]])
    return [padded[i:i + 3] for i in range(len(s))]


class TaggingTask(TaskBinding):
    name = "st"

    def __init__(self, n_tags: int, feature_dim: int = 256, feature_seed: int = 0,
                 n_blocks: int = 1, frozen=(), init_scale: float = 0.0, init_seed: int = 0):
        self.n_tags = n_tags
        self.feature_dim = feature_dim
        self.feature_seed = feature_seed
        self.model = SoftmaxModel(feature_dim, n_tags, n_blocks, frozen, init_scale, init_seed)
        self.layout = self.model.layout

    def model_init(self):
        return self.model.model_init()

    def featurize(self, raw: TaggingData) -> FeatureSet:
        windows = [w for s in raw.sentences for w in token_windows(s)]
        x = embed_many(windows, self.feature_dim, self.feature_seed)
        y = np.concatenate(raw.tags) if raw.tags else np.zeros(0, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum([len(s) for s in raw.sentences])])
        return FeatureSet(x, y, offsets)

    def labels(self, raw: TaggingData):
        # dominant entity type per sentence (Outside when the sentence has none)
        out = []
        for tags in raw.tags:
            ent = tags[tags > 0]
            out.append(0 if ent.size == 0 else 1 + int(np.bincount((ent - 1) // 2).argmax()))
        return np.asarray(out, dtype=np.int64)

    def loss_and_grad(self, model, batch: FeatureSet):
        return self.model.loss_and_grad(model, batch.x, batch.y)

    def evaluate(self, model, data: FeatureSet):
        loss, _ = self.model.loss_and_grad(model, data.x, data.y)
        pred = self.model.predict(model, data.x)
        pred_spans, gold_spans = [], []
        for i in range(len(data)):
            lo, hi = data.offsets[i], data.offsets[i + 1]
            pred_spans.append(bio_decode(pred[lo:hi]))
            gold_spans.append(bio_decode(data.y[lo:hi]))
        return {
            "accuracy": accuracy(pred, data.y),
            "token_f1": token_f1(pred, data.y),
            "span_f1": span_f1(pred_spans, gold_spans),
            "loss": loss,
        }
