"""Server and client state machines, independent of the wire underneath.

The server talks to any ``comm`` exposing ``send(cid, msg)``,
``recv(timeout) -> (source, msg)`` (``msg=None`` signals a disconnect,
``TimeoutError`` a timeout), ``bind(source, cid)``, ``reject(source, why)``
and ``reconnected(source, cid)``, which tells a rejoin after a dropped
connection apart from a second live client claiming the same id.
"""

from __future__ import annotations

import enum
import logging
import time

import numpy as np

from ..core import ParamVector, payload_bytes, scatter_trainable, trainable_view
from ..engine import RoundConfig, RoundRecord, aggregate, local_train, negate, sample_cohort, ClientUpdate
from ..errors import ConfigError, ProtocolError, SecureAbort, TransportError
from ..optim import OptimizerState, server_step
from ..secagg import MaskedUpdate, pair_seed, prepare_update, secure_aggregate
from .codec import CLEAR, MASKED, Broadcast, EvalReport, Join, SeedShare, Shutdown, Update

log = logging.getLogger(__name__)


class ServerState(enum.Enum):
    WAIT_JOIN = "wait_join"
    BROADCASTING = "broadcasting"
    COLLECTING = "collecting"
    AGGREGATING = "aggregating"
    DONE = "done"


class ClientState(enum.Enum):
    JOINING = "joining"
    WAIT_BROADCAST = "wait_broadcast"
    TRAINING = "training"
    REPORTING = "reporting"
    DONE = "done"


class _Disconnected(Exception):
    def __init__(self, client_id, rejoined=False):
        super().__init__(client_id)
        self.client_id = client_id
        # the client already reconnected (its Join beat the old connection's EOF)
        self.rejoined = rejoined


class ServerManager:
    def __init__(self, cfg: RoundConfig, task, n_clients: int, comm, test=None, log=None,
                 on_round=None, join_timeout: float = 30.0, round_timeout: float | None = None):
        self.cfg = cfg
        self.task = task
        self.n_clients = n_clients
        self.comm = comm
        self.test = test
        self.log = log
        self.on_round = on_round
        self.join_timeout = join_timeout
        self.round_timeout = round_timeout
        self.state = ServerState.WAIT_JOIN
        self.records: list[RoundRecord] = []
        self.rejected: list[ProtocolError] = []
        self.joined: set[int] = set()
        self.layout = task.layout
        self.layout_hash = self.layout.hash64()
        if cfg.cohort_size > n_clients:
            sample_cohort(n_clients, cfg.cohort_size, 0, cfg.seed)  # raises ConfigError
        if cfg.secure:
            cfg.quantization.check_cohort(cfg.cohort_size)
            if cfg.weight_bound is None:
                raise ConfigError("secure mode needs a weight bound", [("weight_bound", "required")])

    # -- joining -------------------------------------------------------------
    def _register(self, source, cid):
        """Bind a Join; returns False (rejected), True (new) or "rejoin"."""
        if not isinstance(cid, int) or not 0 <= cid < self.n_clients:
            err = ProtocolError(f"join from unknown client id {cid}", client_id=cid)
        elif cid in self.joined:
            if self.comm.reconnected(source, cid):
                self.comm.bind(source, cid)
                return "rejoin"
            err = ProtocolError(f"duplicate join for client {cid}", client_id=cid)
        else:
            self.joined.add(cid)
            self.comm.bind(source, cid)
            return True
        log.warning("rejecting connection: %s", err)
        self.rejected.append(err)
        self.comm.reject(source, str(err))
        return False

    def _await_joins(self):
        deadline = time.monotonic() + self.join_timeout
        while len(self.joined) < self.n_clients:
            source, msg = self._recv_until(deadline, "join")
            if isinstance(msg, Join):
                self._register(source, msg.client_id)
            elif msg is None and source in self.joined:
                self.joined.discard(source)

    def _await_rejoin(self, cid, round):
        self.joined.discard(cid)
        deadline = time.monotonic() + self.join_timeout
        while cid not in self.joined:
            try:
                source, msg = self._recv_until(deadline, "rejoin")
            except TransportError:
                raise TransportError(f"client {cid} did not rejoin for round {round}", round=round, client_id=cid)
            if isinstance(msg, Join):
                self._register(source, msg.client_id)

    def _recv_until(self, deadline, phase):
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise TransportError(f"timed out waiting for {phase}")
        try:
            return self.comm.recv(remaining)
        except TimeoutError as exc:
            raise TransportError(f"timed out waiting for {phase}") from exc

    # -- rounds ----------------------------------------------------------------
    def _collect(self, t, model, cohort):
        cfg = self.cfg
        self.state = ServerState.BROADCASTING
        values = trainable_view(model)
        msg = Broadcast(t, self.layout_hash, tuple(cohort), values)
        for cid in cohort:
            self.comm.send(cid, msg)
        down = len(cohort) * payload_bytes(self.layout)

        self.state = ServerState.COLLECTING
        pending = set(cohort)
        clear, masked, losses = {}, {}, {}
        up = 0
        while pending:
            try:
                source, msg = self.comm.recv(self.round_timeout)
            except TimeoutError:
                if cfg.secure:
                    raise SecureAbort(f"round {t} timed out", round=t, missing=sorted(pending))
                raise TransportError(f"round {t} timed out waiting for {sorted(pending)}", round=t)
            if msg is None or isinstance(msg, Shutdown):
                if source in cohort:
                    raise _Disconnected(source)
                self.joined.discard(source)
                continue
            if isinstance(msg, Join):
                if self._register(source, msg.client_id) == "rejoin" and msg.client_id in cohort:
                    raise _Disconnected(msg.client_id, rejoined=True)
                continue
            rnd = getattr(msg, "round", t)
            if rnd < t:
                log.info("dropping stale %s for round %d from %s", type(msg).__name__, rnd, source)
                continue
            if rnd > t:
                raise ProtocolError(f"message for future round {rnd} during round {t}", round=t, client_id=source)
            if isinstance(msg, SeedShare):
                if msg.sender != source or msg.receiver not in cohort:
                    raise ProtocolError("misrouted seed share", round=t, client_id=source)
                self.comm.send(msg.receiver, msg)
            elif isinstance(msg, EvalReport):
                losses[source] = msg.metrics.get("train_loss", float("nan"))
            elif isinstance(msg, Update):
                if msg.client_id != source or source not in cohort:
                    raise ProtocolError(f"update from {source} claims client {msg.client_id}", round=t, client_id=source)
                if source not in pending:
                    continue  # duplicate after a retried broadcast
                if msg.layout_hash != self.layout_hash:
                    raise ProtocolError("update layout does not match the session", round=t, client_id=source)
                if cfg.secure:
                    if msg.kind != MASKED:
                        raise ProtocolError("clear update in secure mode", round=t, client_id=source)
                    mu = MaskedUpdate.from_bytes(source, msg.payload)
                    masked[source] = mu
                    up += mu.field_bytes()
                else:
                    if msg.kind != CLEAR:
                        raise ProtocolError("masked update in clear mode", round=t, client_id=source)
                    delta = np.frombuffer(msg.payload, dtype="<f8").astype(np.float64)
                    if delta.shape[0] != self.layout.trainable_len:
                        raise ProtocolError("update has the wrong number of coordinates", round=t, client_id=source)
                    full = np.zeros(self.layout.total_len)
                    full[self.layout.trainable_mask] = delta
                    clear[source] = ClientUpdate(source, ParamVector(self.layout, full), msg.weight, msg.steps)
                    up += len(msg.payload)
                pending.discard(source)
            else:
                raise ProtocolError(f"unexpected {type(msg).__name__} from client", round=t, client_id=source)
        return clear, masked, losses, up, down

    def run(self) -> ParamVector:
        cfg = self.cfg
        self._await_joins()
        model = self.task.model_init()
        server_state = OptimizerState.for_server(self.layout.trainable_len)
        for t in range(cfg.total_rounds):
            t0 = time.perf_counter()
            cohort = sample_cohort(self.n_clients, cfg.cohort_size, t, cfg.seed)
            attempts = 0
            while True:
                try:
                    clear, masked, losses, up, down = self._collect(t, model, cohort)
                    break
                except _Disconnected as dc:
                    if cfg.secure:
                        raise SecureAbort(f"client {dc.client_id} dropped in secure round {t}",
                                          round=t, missing=(dc.client_id,))
                    if attempts >= 1:
                        raise TransportError(f"client {dc.client_id} dropped twice in round {t}",
                                             round=t, client_id=dc.client_id)
                    attempts += 1
                    log.warning("client %d dropped in round %d; retrying once", dc.client_id, t)
                    if not dc.rejoined:
                        self._await_rejoin(dc.client_id, t)

            self.state = ServerState.AGGREGATING
            if cfg.secure:
                delta = secure_aggregate(list(masked.values()), cfg.quantization, cohort, self.layout, cfg.weight_bound)
            else:
                delta = aggregate(list(clear.values()))
            model = server_step(model, negate(delta), server_state, cfg.server_opt)
            metrics = self.task.evaluate(model, self.test) if self.test is not None else {}
            loss = float(np.mean([losses.get(c, float("nan")) for c in cohort]))
            rec = RoundRecord(t, list(cohort), loss, metrics, up, down, int(1000 * (time.perf_counter() - t0)))
            self.records.append(rec)
            if self.log is not None:
                self.log.record(rec)
            if self.on_round is not None:
                self.on_round(t, model, rec)

        for cid in sorted(self.joined):
            try:
                self.comm.send(cid, Shutdown())
            except TransportError:
                log.warning("client %d gone before shutdown", cid)
        self.state = ServerState.DONE
        return model


class ClientManager:
    def __init__(self, client_id: int, data, task, cfg: RoundConfig):
        self.client_id = int(client_id)
        self.data = data
        self.task = task
        self.cfg = cfg
        self.base_model = task.model_init()
        self.layout_hash = task.layout.hash64()
        self.state = ClientState.JOINING
        self.last_round = -1
        self._pending = None
        self._seeds: dict[tuple[int, int], int] = {}
        if cfg.secure and cfg.weight_bound is None:
            raise ConfigError("secure mode needs a weight bound", [("weight_bound", "required")])

    def join(self) -> Join:
        self.state = ClientState.WAIT_BROADCAST
        return Join(self.client_id)

    def handle(self, msg) -> list:
        if isinstance(msg, Broadcast):
            return self._on_broadcast(msg)
        if isinstance(msg, SeedShare):
            if msg.receiver != self.client_id:
                raise ProtocolError(f"seed share for {msg.receiver} delivered to {self.client_id}")
            if msg.round < self.last_round:
                return []
            self._seeds[(msg.round, msg.sender)] = msg.seed
            return self._try_finish()
        if isinstance(msg, Shutdown):
            self.state = ClientState.DONE
            return []
        raise ProtocolError(f"client cannot handle {type(msg).__name__}")

    def _on_broadcast(self, msg: Broadcast) -> list:
        if msg.round < self.last_round:
            raise ProtocolError(f"broadcast for round {msg.round} after round {self.last_round}")
        if msg.layout_hash != self.layout_hash:
            raise ProtocolError("broadcast layout does not match the local task")
        if msg.round > self.last_round:
            self._seeds = {k: v for k, v in self._seeds.items() if k[0] >= msg.round}
        self.last_round = msg.round
        self.state = ClientState.TRAINING
        model = scatter_trainable(self.base_model, msg.values)
        upd = local_train(self.client_id, model, self.data, self.cfg, self.task, round=msg.round)
        self.state = ClientState.REPORTING
        out = [EvalReport(msg.round, {"train_loss": upd.train_loss, "steps": float(upd.steps)})]
        if not self.cfg.secure:
            payload = trainable_view(upd.delta).astype("<f8").tobytes()
            out.append(Update(msg.round, self.client_id, CLEAR, upd.weight, upd.steps, self.layout_hash, payload))
            self.state = ClientState.WAIT_BROADCAST
            return out
        cohort = sorted(msg.cohort)
        if self.client_id not in cohort:
            raise ProtocolError(f"client {self.client_id} not in the broadcast cohort")
        self._pending = (msg.round, upd, cohort)
        for peer in cohort:
            if peer > self.client_id:
                seed = pair_seed(self.cfg.seed, msg.round, self.client_id, peer)
                out.append(SeedShare(msg.round, self.client_id, peer, seed))
        return out + self._try_finish()

    def _try_finish(self) -> list:
        if self._pending is None:
            return []
        rnd, upd, cohort = self._pending
        lower = [p for p in cohort if p < self.client_id]
        if any((rnd, p) not in self._seeds for p in lower):
            return []
        seeds = {(p, self.client_id): self._seeds[(rnd, p)] for p in lower}
        for p in cohort:
            if p > self.client_id:
                seeds[(self.client_id, p)] = pair_seed(self.cfg.seed, rnd, self.client_id, p)
        masked = prepare_update(trainable_view(upd.delta), upd.weight, self.client_id, cohort, seeds,
                                self.cfg.quantization, self.cfg.weight_bound)
        self._pending = None
        self.state = ClientState.WAIT_BROADCAST
        # weight travels masked inside the payload; the clear field stays zero
        return [Update(rnd, self.client_id, MASKED, 0.0, upd.steps, self.layout_hash, masked.to_bytes())]
