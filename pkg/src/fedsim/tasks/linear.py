"""Shared multinomial logistic model over dense feature rows."""

from __future__ import annotations

import numpy as np

from ..core import Block, BlockLayout, ParamVector
from ..errors import LayoutError, NumericalError
from ..rng import substream


def softmax_layout(n_features: int, n_outputs: int, n_blocks: int = 1, frozen=()) -> BlockLayout:
    """Weights stored feature-major (D x C) so each block is a contiguous feature group."""
    if not 1 <= n_blocks <= n_features:
        raise LayoutError(f"cannot split {n_features} features into {n_blocks} blocks")
    bounds = np.linspace(0, n_features, n_blocks + 1).round().astype(int)
    names = ["weight"] if n_blocks == 1 else [f"weight{k}" for k in range(n_blocks)]
    blocks = [Block(name, int(hi - lo) * n_outputs, name in frozen) for name, lo, hi in zip(names, bounds[:-1], bounds[1:])]
    blocks.append(Block("bias", n_outputs, "bias" in frozen))
    return BlockLayout(tuple(blocks))


class SoftmaxModel:
    def __init__(self, n_features: int, n_outputs: int, n_blocks: int = 1, frozen=(), init_scale: float = 0.0, init_seed: int = 0):
        self.n_features = n_features
        self.n_outputs = n_outputs
        self.layout = softmax_layout(n_features, n_outputs, n_blocks, frozen)
        self.init_scale = init_scale
        self.init_seed = init_seed

    def model_init(self) -> ParamVector:
        values = np.zeros(self.layout.total_len)
        if self.init_scale:
            rng = substream(self.init_seed, "model_init")
            values[: self.n_features * self.n_outputs] = self.init_scale * rng.standard_normal(
                self.n_features * self.n_outputs
            )
        return ParamVector(self.layout, values)

    def unpack(self, model: ParamVector):
        if model.layout.total_len != self.layout.total_len:
            raise LayoutError("model does not match the task's layout")
        d, c = self.n_features, self.n_outputs
        return model.values[: d * c].reshape(d, c), model.values[d * c:]

    def logits(self, model: ParamVector, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.n_features:
            raise LayoutError(f"feature dim {x.shape[1]} != {self.n_features}")
        w, b = self.unpack(model)
        with np.errstate(over="ignore", invalid="ignore"):
            return x @ w + b

    def loss_and_grad(self, model: ParamVector, x: np.ndarray, y: np.ndarray):
        """Mean cross-entropy and its gradient over the rows of ``x``."""
        z = self.logits(model, x)
        z = z - z.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(z).sum(axis=1))
        n = x.shape[0]
        loss = float(np.mean(logsum - z[np.arange(n), y]))
        probs = np.exp(z - logsum[:, None])
        probs[np.arange(n), y] -= 1.0
        probs /= n
        grad = np.concatenate([(x.T @ probs).ravel(), probs.sum(axis=0)])
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise NumericalError("non-finite loss or gradient")
        return loss, ParamVector(model.layout, grad)

    def predict(self, model: ParamVector, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(model, x), axis=1)
