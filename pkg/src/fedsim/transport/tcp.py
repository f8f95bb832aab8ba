"""TCP backend: the same managers, with frames over loopback or LAN sockets."""

from __future__ import annotations

import logging
import os
import queue
import socket
import threading
import time

from ..engine import JsonlLog, with_weight_bound
from ..errors import ConfigError, FrameError, ProtocolError, TransportError
from .codec import Join, Shutdown, frame_decode, frame_encode, read_frame
from .managers import ClientManager, ClientState, ServerManager

log = logging.getLogger(__name__)

DEFAULT_JOIN_TIMEOUT = 30.0


def join_timeout_default() -> float:
    return float(os.environ.get("FEDSIM_JOIN_TIMEOUT", DEFAULT_JOIN_TIMEOUT))


def parse_addr(addr) -> tuple[str, int]:
    if isinstance(addr, tuple):
        return addr[0], int(addr[1])
    host, _, port = str(addr).rpartition(":")
    return host or "127.0.0.1", int(port)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf += chunk
    return bytes(buf)


class _Conn:
    """An accepted socket that has not (yet) been bound to a client id."""

    __slots__ = ("key",)

    def __init__(self, key):
        self.key = key

    def __repr__(self):
        return f"<conn {self.key}>"


class TcpServerComm:
    # how long a Join for a bound id waits to see the old connection close
    REJOIN_GRACE = 1.0

    def __init__(self, bind_addr=("127.0.0.1", 0)):
        host, port = parse_addr(bind_addr)
        self.sock = socket.create_server((host, port), reuse_port=False)
        self.address = self.sock.getsockname()[:2]
        # (connection key, message); sources are resolved at recv time
        self.events: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self._socks: dict[int, socket.socket] = {}
        self._gone: dict[int, threading.Event] = {}
        self._key_to_cid: dict[int, int] = {}
        self._cid_to_key: dict[int, int] = {}
        self._next = 0
        self._closed = False
        self._acceptor = threading.Thread(target=self._accept_loop, daemon=True)
        self._acceptor.start()

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._lock:
                key = self._next
                self._next += 1
                self._socks[key] = conn
                self._gone[key] = threading.Event()
            threading.Thread(target=self._reader, args=(key, conn), daemon=True).start()

    def _reader(self, key, conn):
        try:
            while True:
                msg = frame_decode(read_frame(lambda n: _recv_exact(conn, n)))
                self.events.put((key, msg))
        except (ConnectionError, OSError, FrameError, ProtocolError) as exc:
            if not self._closed:
                log.debug("connection %d closed: %s", key, exc)
            self._gone[key].set()
            self.events.put((key, None))

    def recv(self, timeout=None):
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            try:
                key, msg = self.events.get(timeout=remaining)
            except queue.Empty as exc:
                raise TimeoutError("no message within timeout") from exc
            with self._lock:
                cid = self._key_to_cid.get(key)
                current = cid is not None and self._cid_to_key.get(cid) == key
            if cid is None:
                return _Conn(key), msg
            if current:
                return cid, msg
            # traffic from a connection superseded by a rejoin

    def reconnected(self, source, cid) -> bool:
        """True when ``cid``'s bound connection has closed, so ``source`` is a rejoin."""
        with self._lock:
            old = self._cid_to_key.get(cid)
            gone = self._gone.get(old)
        return gone is None or gone.wait(self.REJOIN_GRACE)

    def bind(self, source, cid):
        if not isinstance(source, _Conn):
            raise ProtocolError(f"connection for client {cid} is already bound")
        with self._lock:
            old = self._cid_to_key.get(cid)
            self._key_to_cid[source.key] = cid
            self._cid_to_key[cid] = source.key
            old_sock = self._socks.pop(old, None) if old is not None else None
        if old_sock is not None:
            old_sock.close()

    def reject(self, source, reason):
        with self._lock:
            key = source.key if isinstance(source, _Conn) else self._cid_to_key.get(source)
            conn = self._socks.pop(key, None)
        if conn is not None:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()

    def send(self, cid, msg):
        with self._lock:
            key = self._cid_to_key.get(cid)
            conn = self._socks.get(key)
        if conn is None:
            self.events.put((key, None))
            return
        try:
            conn.sendall(frame_encode(msg))
        except OSError:
            self.events.put((key, None))

    def close(self):
        self._closed = True
        try:
            self.sock.close()
        except OSError:
            pass
        with self._lock:
            socks = list(self._socks.values())
            self._socks.clear()
        for s in socks:
            try:
                s.close()
            except OSError:
                pass


def run_server(bind_addr, cfg, task, partition, test=None, join_timeout=None, log_path=None,
               timestamps=True, header=None, on_ready=None, round_timeout=None):
    """Serve one federation over TCP; returns ``(final_model, records)``.

    ``on_ready(address)`` fires once the socket listens, which is how callers
    binding port 0 learn the real port.
    """
    cfg = with_weight_bound(cfg, {c: idx for c, idx in partition.assignments.items()})
    comm = TcpServerComm(bind_addr)
    log_file = JsonlLog(log_path, timestamps)
    if header is not None:
        log_file.write(header)
    try:
        if on_ready is not None:
            on_ready(comm.address)
        server = ServerManager(
            cfg, task, partition.n_clients, comm, test=test, log=log_file,
            join_timeout=join_timeout_default() if join_timeout is None else join_timeout,
            round_timeout=round_timeout,
        )
        model = server.run()
        # let shutdown frames drain before the sockets go away
        time.sleep(0.05)
        return model, server.records
    finally:
        log_file.close()
        comm.close()


def run_client(server_addr, client_id, data, cfg, task, connect_timeout: float = 10.0) -> int:
    """Join the server, train whenever asked, exit 0 on Shutdown."""
    if cfg.secure and cfg.weight_bound is None:
        raise ConfigError("secure clients need cfg.weight_bound", [("weight_bound", "required")])
    host, port = parse_addr(server_addr)
    deadline = time.monotonic() + connect_timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=connect_timeout)
            break
        except OSError as exc:
            if time.monotonic() > deadline:
                raise TransportError(f"cannot reach server at {host}:{port}: {exc}", client_id=client_id)
            time.sleep(0.05)
    sock.settimeout(None)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    manager = ClientManager(client_id, data, task, cfg)
    got_any = False
    try:
        sock.sendall(frame_encode(manager.join()))
        while True:
            try:
                frame = read_frame(lambda n: _recv_exact(sock, n))
            except (ConnectionError, OSError) as exc:
                if not got_any:
                    raise ProtocolError(f"server rejected client {client_id}", client_id=client_id) from exc
                raise TransportError(f"lost server connection: {exc}", round=manager.last_round,
                                     client_id=client_id) from exc
            got_any = True
            msg = frame_decode(frame)
            for reply in manager.handle(msg):
                sock.sendall(frame_encode(reply))
            if isinstance(msg, Shutdown):
                assert manager.state is ClientState.DONE
                return 0
    finally:
        sock.close()
