"""The federated round loop: cohort sampling, local training, aggregation, server update."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Literal, Mapping, Optional

import numpy as np

from .core import ParamVector, check_same_layout, trainable_view
from .errors import ConfigError, EmptyClient, EmptyDataset, NoUpdates
from .optim import ClientOptConfig, OptimizerState, ServerOptConfig, client_step
from .rng import substream
from .secagg import QuantizationConfig


@dataclass(frozen=True)
class RoundConfig:
    total_rounds: int = 22
    cohort_size: int = 10
    local_epochs: int = 1
    batch_size: int = 10
    client_opt: ClientOptConfig = field(default_factory=ClientOptConfig)
    server_opt: ServerOptConfig = field(default_factory=ServerOptConfig)
    seed: int = 0
    secure: bool = False
    weighting: Literal["size", "uniform"] = "size"
    quantization: QuantizationConfig = field(default_factory=QuantizationConfig)
    # public bound on client weights used to scale masked deltas into the clip range
    weight_bound: Optional[float] = None

    def __post_init__(self):
        errors = []
        if self.total_rounds < 0:
            errors.append(("total_rounds", "must be >= 0"))
        if self.cohort_size < 1:
            errors.append(("cohort_size", "must be >= 1"))
        if self.local_epochs < 1:
            errors.append(("local_epochs", "must be >= 1"))
        if self.batch_size < 1:
            errors.append(("batch_size", "must be >= 1"))
        if self.weighting not in ("size", "uniform"):
            errors.append(("weighting", "must be 'size' or 'uniform'"))
        if errors:
            raise ConfigError("invalid round config", errors)


@dataclass
class ClientUpdate:
    client_id: int
    delta: ParamVector
    weight: float
    steps: int
    train_loss: float = float("nan")


@dataclass
class RoundRecord:
    round: int
    cohort: list
    train_loss_mean: float
    eval_metrics: dict
    payload_bytes_up: int
    payload_bytes_down: int
    wall_ms: int = 0

    def to_dict(self, timestamps: bool = True) -> dict:
        d = asdict(self)
        if not timestamps:
            del d["wall_ms"]
        return d


def sample_cohort(n_clients: int, cohort_size: int, round: int, seed: int) -> list[int]:
    """Uniform sample without replacement, sorted; everybody when sizes match."""
    if cohort_size > n_clients:
        raise ConfigError(
            f"cohort of {cohort_size} from {n_clients} clients",
            [("federation.cohort_size", "exceeds n_clients")],
        )
    if cohort_size == n_clients:
        return list(range(n_clients))
    rng = substream(seed, "cohort", round)
    return sorted(int(i) for i in rng.choice(n_clients, size=cohort_size, replace=False))


def client_weight(n_examples: int, cfg: RoundConfig) -> float:
    return float(n_examples) if cfg.weighting == "size" else 1.0


def train_locally(client_id, global_model: ParamVector, data, cfg: RoundConfig, task, round: int = 0):
    """Run the local epochs; returns ``(local_model, mean_batch_loss, steps)``."""
    n = len(data)
    if n == 0:
        raise EmptyClient(f"client {client_id} has no data")
    rng = substream(cfg.seed, "batches", round, client_id)
    state = OptimizerState.for_client(global_model.layout.trainable_len, cfg.client_opt)
    x = global_model
    losses = []
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            loss, grad = task.loss_and_grad(x, data.take(order[lo:lo + cfg.batch_size]))
            losses.append(loss)
            x = client_step(x, grad, state, cfg.client_opt, global_model)
    return x, float(np.mean(losses)), state.step_count


def local_train(client_id, global_model: ParamVector, data, cfg: RoundConfig, task, round: int = 0) -> ClientUpdate:
    x, loss, steps = train_locally(client_id, global_model, data, cfg, task, round)
    delta = ParamVector(global_model.layout, x.values - global_model.values)
    return ClientUpdate(client_id, delta, client_weight(len(data), cfg), steps, loss)


def aggregate(updates) -> ParamVector:
    """Weighted mean of client deltas, summed in client-id order."""
    updates = sorted(updates, key=lambda u: u.client_id)
    if not updates:
        raise NoUpdates("no client updates to aggregate")
    layout = check_same_layout(*(u.delta for u in updates))
    mask = layout.trainable_mask
    num = np.zeros(layout.trainable_len)
    total = 0.0
    for u in updates:
        if not u.weight > 0:
            raise ValueError(f"client {u.client_id} has non-positive weight {u.weight}")
        num += u.weight * u.delta.values[mask]
        total += u.weight
    values = np.zeros(layout.total_len)
    values[mask] = num / total
    return ParamVector(layout, values)


def negate(x: ParamVector) -> ParamVector:
    return ParamVector(x.layout, -x.values)


class JsonlLog:
    """Append-only JSON Lines writer; a ``None`` path swallows everything."""

    def __init__(self, path=None, timestamps: bool = True):
        self.path = path
        self.timestamps = timestamps
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def write(self, obj: dict) -> None:
        if self._fh:
            self._fh.write(json.dumps(obj, sort_keys=True, allow_nan=True) + "\n")
            self._fh.flush()

    def record(self, rec: RoundRecord) -> None:
        self.write(rec.to_dict(self.timestamps))

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None


def _client_datasets(datasets, partition) -> dict:
    if isinstance(datasets, Mapping):
        return {int(k): v for k, v in datasets.items()}
    return {cid: datasets.take(idx) for cid, idx in partition.assignments.items()}


def run_federation(datasets, partition, cfg: RoundConfig, task, transport=None, test=None,
                   log_path=None, timestamps: bool = True, header: Optional[dict] = None,
                   on_round=None):
    """Run ``cfg.total_rounds`` rounds over the in-process bus.

    ``datasets`` is either the pooled training FeatureSet (sliced by the
    partition) or a mapping client id -> FeatureSet. ``transport`` may be a
    pre-built :class:`~fedsim.transport.bus.LocalBus`; by default one is made.
    Returns the final model and one RoundRecord per round.
    """
    from .transport.bus import LocalBus
    from .transport.managers import ClientManager, ServerManager

    client_data = _client_datasets(datasets, partition)
    cfg = with_weight_bound(cfg, client_data)
    if transport is None:
        transport = LocalBus()
    for cid in sorted(client_data):
        transport.attach(ClientManager(cid, client_data[cid], task, cfg))
    log = JsonlLog(log_path, timestamps)
    if header is not None:
        log.write(header)
    try:
        server = ServerManager(cfg, task, len(client_data), transport, test=test, log=log, on_round=on_round)
        model = server.run()
    finally:
        log.close()
    return model, server.records


def with_weight_bound(cfg: RoundConfig, client_data) -> RoundConfig:
    if cfg.weight_bound is not None:
        return cfg
    from dataclasses import replace

    sizes = [len(d) for d in client_data.values()] or [1]
    return replace(cfg, weight_bound=max(client_weight(s, cfg) for s in sizes))


def centralized_train(dataset, cfg: RoundConfig, task, test=None, log_path=None,
                      timestamps: bool = True, header: Optional[dict] = None, on_round=None):
    """The same trainer loop on pooled data; one record per round-sized segment.

    Optimizer state restarts each segment exactly as it does on a client, so
    a single-client federation with the FedAvg server reproduces this loop.
    """
    if len(dataset) == 0:
        raise EmptyDataset("centralized training needs data")
    x = task.model_init()
    records = []
    log = JsonlLog(log_path, timestamps)
    if header is not None:
        log.write(header)
    try:
        for t in range(cfg.total_rounds):
            t0 = time.perf_counter()
            x, loss, _ = train_locally(0, x, dataset, cfg, task, round=t)
            metrics = task.evaluate(x, test) if test is not None else {}
            rec = RoundRecord(t, [0], loss, metrics, 0, 0, int(1000 * (time.perf_counter() - t0)))
            records.append(rec)
            log.record(rec)
            if on_round:
                on_round(t, x, rec)
    finally:
        log.close()
    return x, records


__all__ = [
    "ClientUpdate",
    "JsonlLog",
    "RoundConfig",
    "RoundRecord",
    "aggregate",
    "centralized_train",
    "client_weight",
    "local_train",
    "run_federation",
    "sample_cohort",
    "train_locally",
    "with_weight_bound",
]
