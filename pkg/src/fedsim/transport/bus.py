"""In-process deterministic message bus.

Every message is pushed through the frame codec, so the local bus exercises
exactly the bytes the TCP backend would send.
"""

from collections import deque

from .codec import frame_decode, frame_encode


class LocalBus:
    def __init__(self, record_transcript: bool = False):
        self.clients = {}
        self.inbox = deque()
        self.transcript = [] if record_transcript else None

    def attach(self, client) -> None:
        self.clients[client.client_id] = client
        self._up(client.client_id, client.join())

    def _wire(self, direction, cid, msg):
        frame = frame_encode(msg)
        if self.transcript is not None:
            self.transcript.append((direction, cid, frame))
        return frame_decode(frame)

    def _up(self, cid, msg):
        self.inbox.append((cid, self._wire("up", cid, msg)))

    def send(self, cid, msg) -> None:
        for reply in self.clients[cid].handle(self._wire("down", cid, msg)):
            self._up(cid, reply)

    def recv(self, timeout=None):
        if not self.inbox:
            raise TimeoutError("local bus has no pending messages")
        return self.inbox.popleft()

    def bind(self, source, cid) -> None:
        pass

    def reconnected(self, source, cid) -> bool:
        # in-process clients never hold a second connection
        return False

    def reject(self, source, reason) -> None:
        self.clients.pop(source, None)

    def close(self) -> None:
        pass
