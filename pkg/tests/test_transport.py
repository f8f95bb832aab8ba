import socket
import threading
import time

import numpy as np
import pytest

from fedsim.engine import RoundConfig, run_federation
from fedsim.errors import ProtocolError, SecureAbort, TransportError
from fedsim.optim import FEDOPT_SERVER, ClientOptConfig
from fedsim.partition import PartitionSpec, dirichlet_label_partition
from fedsim.transport.bus import LocalBus
from fedsim.transport.codec import CLEAR, MASKED, Broadcast, Join, Update, frame_decode, frame_encode, read_frame
from fedsim.transport.managers import ClientManager, ClientState, ServerManager, ServerState
from fedsim.transport.tcp import _recv_exact, parse_addr, run_client, run_server
from tcp_helpers import tcp_federation


def small_setup(tc_small, n_clients, seed=1):
    train, test, task, x, xt = tc_small
    part = dirichlet_label_partition(train.labels, PartitionSpec("label_dirichlet", n_clients, alpha=1.0, seed=seed))
    return part, task, x, xt


CONFIGS = {
    "fedavg": dict(client_opt=ClientOptConfig("sgd", lr=0.5)),
    "fedopt_prox": dict(client_opt=ClientOptConfig("adamw", lr=0.01, proximal_mu=0.01), server_opt=FEDOPT_SERVER),
    "secure": dict(client_opt=ClientOptConfig("sgd", lr=0.5), secure=True),
}


def make_cfg(name, n_clients, rounds=3):
    return RoundConfig(total_rounds=rounds, cohort_size=n_clients, batch_size=20, seed=5, **CONFIGS[name])


# local bus


def test_secure_transcript_has_no_clear_updates(tc_small):
    part, task, x, _ = small_setup(tc_small, 4)
    bus = LocalBus(record_transcript=True)
    run_federation(x, part, make_cfg("secure", 4, rounds=2), task, transport=bus)
    ups = [frame_decode(f) for d, _, f in bus.transcript if d == "up"]
    updates = [m for m in ups if isinstance(m, Update)]
    assert len(updates) == 8
    assert all(m.kind == MASKED and m.weight == 0.0 for m in updates)


def test_clear_transcript_has_clear_updates(tc_small):
    part, task, x, _ = small_setup(tc_small, 3)
    bus = LocalBus(record_transcript=True)
    run_federation(x, part, make_cfg("fedavg", 3, rounds=1), task, transport=bus)
    kinds = [frame_decode(f).kind for d, _, f in bus.transcript if d == "up" and frame_decode(f).__class__ is Update]
    assert kinds == [CLEAR] * 3


class FlakyBus(LocalBus):
    """Drops the connection of ``victim`` when it is sent a broadcast for ``round``."""

    def __init__(self, victim, round, drops=1):
        super().__init__()
        self.victim, self.round, self.drops = victim, round, drops

    def send(self, cid, msg):
        if cid == self.victim and isinstance(msg, Broadcast) and msg.round == self.round and self.drops > 0:
            self.drops -= 1
            self.inbox.append((cid, None))
            self.inbox.append((cid, Join(cid)))
            return
        super().send(cid, msg)


def test_clear_disconnect_retries_once(tc_small):
    part, task, x, _ = small_setup(tc_small, 4)
    cfg = make_cfg("fedavg", 4)
    ref, _ = run_federation(x, part, cfg, task)
    got, rec = run_federation(x, part, cfg, task, transport=FlakyBus(victim=2, round=1))
    assert len(rec) == 3
    assert got.values.tobytes() == ref.values.tobytes()


def test_second_disconnect_fails(tc_small):
    part, task, x, _ = small_setup(tc_small, 4)
    with pytest.raises(TransportError) as err:
        run_federation(x, part, make_cfg("fedavg", 4), task, transport=FlakyBus(victim=2, round=1, drops=2))
    assert err.value.round == 1 and err.value.client_id == 2


def test_secure_disconnect_aborts(tc_small):
    part, task, x, _ = small_setup(tc_small, 4)
    with pytest.raises(SecureAbort) as err:
        run_federation(x, part, make_cfg("secure", 4), task, transport=FlakyBus(victim=3, round=0))
    assert err.value.round == 0 and err.value.missing == (3,)


def test_state_machines_finish(tc_small):
    part, task, x, _ = small_setup(tc_small, 2)
    cfg = make_cfg("fedavg", 2, rounds=1)
    bus = LocalBus()
    clients = [ClientManager(c, x.take(part.assignments[c]), task, cfg) for c in range(2)]
    for c in clients:
        bus.attach(c)
    server = ServerManager(cfg, task, 2, bus)
    server.run()
    assert server.state is ServerState.DONE
    assert all(c.state is ClientState.DONE for c in clients)


def test_client_rejects_stale_broadcast(tc_small):
    part, task, x, _ = small_setup(tc_small, 2)
    c = ClientManager(0, x.take(part.assignments[0]), task, make_cfg("fedavg", 2))
    c.join()
    values = np.zeros(task.layout.trainable_len)
    c.handle(Broadcast(2, task.layout.hash64(), (0, 1), values))
    with pytest.raises(ProtocolError):
        c.handle(Broadcast(1, task.layout.hash64(), (0, 1), values))
    with pytest.raises(ProtocolError):
        c.handle(Broadcast(3, 1234, (0, 1), values))


# TCP


def test_parse_addr():
    assert parse_addr("127.0.0.1:8080") == ("127.0.0.1", 8080)
    assert parse_addr(("localhost", 5)) == ("localhost", 5)


@pytest.mark.parametrize("n_clients", [2, 6])
@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_tcp_matches_local_bus(tc_small, name, n_clients):
    part, task, x, xt = small_setup(tc_small, n_clients)
    cfg = make_cfg(name, n_clients)
    ref, ref_rec = run_federation(x, part, cfg, task, test=xt)
    got, rec, exits = tcp_federation(x, part, cfg, task, test=xt)
    assert np.max(np.abs(got.values - ref.values)) <= 1e-9
    assert [r.cohort for r in rec] == [r.cohort for r in ref_rec]
    assert [r.payload_bytes_up for r in rec] == [r.payload_bytes_up for r in ref_rec]
    # every client saw Shutdown and returned 0
    assert exits == {c: 0 for c in range(n_clients)}


def test_duplicate_join_rejected(tc_small):
    part, task, x, _ = small_setup(tc_small, 2)
    cfg = make_cfg("fedavg", 2, rounds=1)
    ready, results = [], {}
    ev = threading.Event()

    def serve():
        results["server"] = run_server(("127.0.0.1", 0), cfg, task, part, join_timeout=20,
                                       on_ready=lambda a: (ready.append(a), ev.set()), timestamps=False)

    st = threading.Thread(target=serve, daemon=True)
    st.start()
    ev.wait(10)
    addr = "%s:%d" % ready[0]
    first = threading.Thread(target=lambda: results.setdefault(0, run_client(addr, 0, x.take(part.assignments[0]),
                                                                              cfg, task)), daemon=True)
    first.start()
    time.sleep(0.3)
    with pytest.raises(ProtocolError):
        run_client(addr, 0, x.take(part.assignments[0]), cfg, task)
    assert run_client(addr, 1, x.take(part.assignments[1]), cfg, task) == 0
    first.join(20)
    st.join(20)
    assert results[0] == 0 and len(results["server"][1]) == 1


def drop_once_client(drop_round):
    """A client that hangs up on its first broadcast for ``drop_round`` and then rejoins."""
    state = {"dropped": False}

    def client(addr, cid, data, cfg, task):
        if cid != 1 or state["dropped"]:
            return run_client(addr, cid, data, cfg, task)
        host, port = parse_addr(addr)
        sock = socket.create_connection((host, port), timeout=10)
        sock.settimeout(None)
        manager = ClientManager(cid, data, task, cfg)
        sock.sendall(frame_encode(manager.join()))
        while True:
            msg = frame_decode(read_frame(lambda n: _recv_exact(sock, n)))
            if isinstance(msg, Broadcast) and msg.round == drop_round:
                break
            for reply in manager.handle(msg):
                sock.sendall(frame_encode(reply))
        sock.close()
        state["dropped"] = True
        return run_client(addr, cid, data, cfg, task)

    return client


def test_tcp_mid_round_disconnect_retries(tc_small):
    part, task, x, _ = small_setup(tc_small, 3)
    cfg = make_cfg("fedavg", 3)
    ref, _ = run_federation(x, part, cfg, task)
    got, rec, exits = tcp_federation(x, part, cfg, task, client_fn=drop_once_client(1))
    assert len(rec) == 3 and exits == {0: 0, 1: 0, 2: 0}
    assert np.max(np.abs(got.values - ref.values)) <= 1e-9


def test_tcp_secure_disconnect_aborts(tc_small):
    part, task, x, _ = small_setup(tc_small, 3)
    with pytest.raises(SecureAbort):
        tcp_federation(x, part, make_cfg("secure", 3), task, client_fn=drop_once_client(1))


def test_join_timeout(tc_small):
    part, task, x, _ = small_setup(tc_small, 2)
    with pytest.raises(TransportError):
        run_server(("127.0.0.1", 0), make_cfg("fedavg", 2), task, part, join_timeout=0.3)


def test_comm_rejoin_versus_duplicate():
    from fedsim.transport.tcp import TcpServerComm

    comm = TcpServerComm()
    comm.REJOIN_GRACE = 0.2
    try:
        first = socket.create_connection(comm.address)
        first.sendall(frame_encode(Join(3)))
        src, msg = comm.recv(5)
        assert msg == Join(3)
        comm.bind(src, 3)
        # a second live connection claiming the id is a duplicate
        dup = socket.create_connection(comm.address)
        dup.sendall(frame_encode(Join(3)))
        src2, _ = comm.recv(5)
        assert not comm.reconnected(src2, 3)
        comm.reject(src2, "duplicate")
        # after the first connection drops, a new Join is a rejoin
        first.close()
        again = socket.create_connection(comm.address)
        again.sendall(frame_encode(Join(3)))
        events = [comm.recv(5) for _ in range(3)]
        joins = [s for s, m in events if isinstance(m, Join)]
        assert len(joins) == 1 and comm.reconnected(joins[0], 3)
        comm.bind(joins[0], 3)
        # the stale EOF of the old connection, if still queued, is never surfaced as client 3
        again.sendall(frame_encode(Join(3)))
        assert comm.recv(5) == (3, Join(3))
        dup.close()
        again.close()
    finally:
        comm.close()
