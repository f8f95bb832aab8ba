"""Length-prefixed binary frames.

A frame is ``u32 big-endian length | u8 tag | body`` where the length counts
the tag and the body. Body integers and reals are little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..errors import FrameError, ProtocolError

MAX_FRAME = (1 << 32) - 1

JOIN, BROADCAST, UPDATE, SEED_SHARE, EVAL_REPORT, SHUTDOWN = 1, 2, 3, 4, 5, 6

CLEAR, MASKED = 0, 1


@dataclass(frozen=True)
class Join:
    client_id: int


@dataclass(frozen=True)
class Broadcast:
    round: int
    layout_hash: int
    cohort: tuple
    values: np.ndarray = field(compare=False)

    def __eq__(self, other):
        return (
            isinstance(other, Broadcast)
            and (self.round, self.layout_hash, tuple(self.cohort)) == (other.round, other.layout_hash, tuple(other.cohort))
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class Update:
    round: int
    client_id: int
    kind: int  # CLEAR or MASKED
    weight: float
    steps: int
    layout_hash: int
    payload: bytes


@dataclass(frozen=True)
class SeedShare:
    round: int
    sender: int
    receiver: int
    seed: int


@dataclass(frozen=True)
class EvalReport:
    round: int
    metrics: dict


@dataclass(frozen=True)
class Shutdown:
    pass


Message = Union[Join, Broadcast, Update, SeedShare, EvalReport, Shutdown]

_U32 = struct.Struct("<I")
_BCAST_HEAD = struct.Struct("<IQI")
_UPDATE_HEAD = struct.Struct("<IIBdIQ")
_SEED = struct.Struct("<IIIQ")
_LEN = struct.Struct(">I")


def _encode_body(msg) -> tuple[int, bytes]:
    if isinstance(msg, Join):
        return JOIN, _U32.pack(msg.client_id)
    if isinstance(msg, Broadcast):
        cohort = np.asarray(msg.cohort, dtype="<u4").tobytes()
        vals = np.asarray(msg.values, dtype="<f8").tobytes()
        return BROADCAST, _BCAST_HEAD.pack(msg.round, msg.layout_hash, len(msg.cohort)) + cohort + vals
    if isinstance(msg, Update):
        head = _UPDATE_HEAD.pack(msg.round, msg.client_id, msg.kind, msg.weight, msg.steps, msg.layout_hash)
        return UPDATE, head + bytes(msg.payload)
    if isinstance(msg, SeedShare):
        return SEED_SHARE, _SEED.pack(msg.round, msg.sender, msg.receiver, msg.seed)
    if isinstance(msg, EvalReport):
        parts = [_U32.pack(msg.round), _U32.pack(len(msg.metrics))]
        for name in sorted(msg.metrics):
            raw = name.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<d", float(msg.metrics[name])))
        return EVAL_REPORT, b"".join(parts)
    if isinstance(msg, Shutdown):
        return SHUTDOWN, b""
    raise TypeError(f"not a message: {msg!r}")


def frame_encode(msg: Message) -> bytes:
    tag, body = _encode_body(msg)
    if len(body) + 1 > MAX_FRAME:
        raise FrameError("payload too large for a frame")
    return _LEN.pack(len(body) + 1) + bytes([tag]) + body


def _decode_body(tag: int, body: bytes) -> Message:
    try:
        if tag == JOIN:
            if len(body) != 4:
                raise FrameError("Join body must be 4 bytes")
            return Join(*_U32.unpack(body))
        if tag == BROADCAST:
            rnd, lhash, n = _BCAST_HEAD.unpack_from(body)
            off = _BCAST_HEAD.size
            if len(body) < off + 4 * n or (len(body) - off - 4 * n) % 8:
                raise FrameError("Broadcast body has a ragged cohort or value array")
            cohort = tuple(int(c) for c in np.frombuffer(body, dtype="<u4", count=n, offset=off))
            values = np.frombuffer(body, dtype="<f8", offset=off + 4 * n).astype(np.float64)
            return Broadcast(rnd, lhash, cohort, values)
        if tag == UPDATE:
            rnd, cid, kind, weight, steps, lhash = _UPDATE_HEAD.unpack_from(body)
            if kind not in (CLEAR, MASKED):
                raise ProtocolError(f"unknown update kind {kind}")
            return Update(rnd, cid, kind, weight, steps, lhash, bytes(body[_UPDATE_HEAD.size:]))
        if tag == SEED_SHARE:
            if len(body) != _SEED.size:
                raise FrameError("SeedShare body has the wrong size")
            return SeedShare(*_SEED.unpack(body))
        if tag == EVAL_REPORT:
            rnd, count = struct.unpack_from("<II", body)
            off, metrics = 8, {}
            for _ in range(count):
                (nlen,) = struct.unpack_from("<H", body, off)
                off += 2
                if off + nlen > len(body):
                    raise FrameError("EvalReport metric name runs past the body")
                name = body[off:off + nlen].decode("utf-8")
                off += nlen
                (val,) = struct.unpack_from("<d", body, off)
                off += 8
                metrics[name] = val
            if off != len(body):
                raise FrameError("trailing bytes after EvalReport")
            return EvalReport(rnd, metrics)
        if tag == SHUTDOWN:
            if body:
                raise FrameError("Shutdown carries no body")
            return Shutdown()
    except struct.error as exc:
        raise FrameError(f"truncated body for tag {tag}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise FrameError(f"bad UTF-8 in frame: {exc}") from exc
    raise ProtocolError(f"unknown frame tag {tag}")


def frame_decode(buf: bytes) -> Message:
    """Decode exactly one frame; raises FrameError/ProtocolError, never anything else."""
    buf = bytes(buf)
    if len(buf) < 5:
        raise FrameError(f"frame of {len(buf)} bytes is shorter than its header")
    (length,) = _LEN.unpack_from(buf)
    if length < 1 or len(buf) != 4 + length:
        raise FrameError(f"frame declares {length} bytes but carries {len(buf) - 4}")
    return _decode_body(buf[4], buf[5:])


def read_frame(readexactly) -> bytes:
    """Pull one whole frame through ``readexactly(n)``, which returns exactly ``n`` bytes."""
    head = readexactly(4)
    (length,) = _LEN.unpack(head)
    if length < 1:
        raise FrameError("zero-length frame")
    return head + readexactly(length)
