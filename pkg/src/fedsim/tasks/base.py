"""The contract between a task and the training engine."""

from __future__ import annotations

from typing import Any

from ..core import BlockLayout, ParamVector


class TaskBinding:
    """Loss, gradient, evaluation and model initialisation for one task.

    Batches and datasets are whatever ``featurize`` returns; the engine only
    needs ``len()`` and ``take(indices)`` on them. Question answering and
    seq2seq heads would plug in here as further subclasses.
    """

    name = "task"
    layout: BlockLayout

    def model_init(self) -> ParamVector:
        raise NotImplementedError

    def featurize(self, raw) -> Any:
        raise NotImplementedError

    def loss_and_grad(self, model: ParamVector, batch) -> tuple[float, ParamVector]:
        raise NotImplementedError

    def evaluate(self, model: ParamVector, data) -> dict[str, float]:
        raise NotImplementedError

    def labels(self, raw):
        """Per-example labels used by label-based partitioners, if the task has them."""
        raise NotImplementedError(f"{self.name} has no example-level labels")
