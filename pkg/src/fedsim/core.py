"""Flat parameter vectors with a named-block layout and per-block freezing."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import LayoutError, NumericalError

F64 = np.dtype("<f8")


@dataclass(frozen=True)
class Block:
    name: str
    length: int
    frozen: bool = False


@dataclass(frozen=True)
class BlockLayout:
    blocks: tuple[Block, ...]
    _mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, Block) else Block(*b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        names = [b.name for b in blocks]
        if len(set(names)) != len(names):
            raise LayoutError(f"duplicate block names in {names}")
        for b in blocks:
            if int(b.length) < 1:
                raise LayoutError(f"block {b.name!r} has length {b.length} < 1")
        mask = np.concatenate(
            [np.full(b.length, not b.frozen, dtype=bool) for b in blocks]
        ) if blocks else np.zeros(0, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "_mask", mask)

    @classmethod
    def of(cls, *blocks: tuple) -> "BlockLayout":
        return cls(tuple(Block(*b) for b in blocks))

    @property
    def total_len(self) -> int:
        return int(sum(b.length for b in self.blocks))

    @property
    def trainable_len(self) -> int:
        return int(sum(b.length for b in self.blocks if not b.frozen))

    @property
    def trainable_mask(self) -> np.ndarray:
        return self._mask

    def offsets(self) -> dict[str, slice]:
        out, start = {}, 0
        for b in self.blocks:
            out[b.name] = slice(start, start + b.length)
            start += b.length
        return out

    def with_frozen(self, names: Iterable[str]) -> "BlockLayout":
        """Copy of the layout with exactly ``names`` frozen."""
        names = set(names)
        unknown = names - {b.name for b in self.blocks}
        if unknown:
            raise LayoutError(f"unknown blocks: {sorted(unknown)}")
        return BlockLayout(tuple(Block(b.name, b.length, b.name in names) for b in self.blocks))

    def to_bytes(self) -> bytes:
        parts = [struct.pack("<I", len(self.blocks))]
        for b in self.blocks:
            raw = b.name.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<IB", b.length, int(b.frozen)))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes, offset: int = 0) -> tuple["BlockLayout", int]:
        """Parse a layout; returns it with the offset just past its end."""
        try:
            (n,) = struct.unpack_from("<I", buf, offset)
            offset += 4
            blocks = []
            for _ in range(n):
                (name_len,) = struct.unpack_from("<H", buf, offset)
                offset += 2
                if offset + name_len > len(buf):
                    raise LayoutError("truncated block name")
                name = bytes(buf[offset:offset + name_len]).decode("utf-8")
                offset += name_len
                length, frozen = struct.unpack_from("<IB", buf, offset)
                offset += 5
                blocks.append(Block(name, length, bool(frozen)))
        except (struct.error, UnicodeDecodeError) as exc:
            raise LayoutError(f"malformed layout: {exc}") from exc
        return cls(tuple(blocks)), offset

    def hash64(self) -> int:
        return int.from_bytes(hashlib.blake2b(self.to_bytes(), digest_size=8).digest(), "little")


class ParamVector:
    """Model parameters (or a gradient, or a delta) over a BlockLayout."""

    __slots__ = ("layout", "values")

    def __init__(self, layout: BlockLayout, values=None):
        if values is None:
            values = np.zeros(layout.total_len)
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != layout.total_len:
            raise LayoutError(
                f"values of shape {values.shape} do not fit layout of length {layout.total_len}"
            )
        self.layout = layout
        self.values = values

    def copy(self) -> "ParamVector":
        return ParamVector(self.layout, self.values.copy())

    def zeros_like(self) -> "ParamVector":
        return ParamVector(self.layout, np.zeros_like(self.values))

    def block(self, name: str) -> np.ndarray:
        return self.values[self.layout.offsets()[name]]

    def __len__(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"ParamVector(blocks={[b.name for b in self.layout.blocks]}, n={len(self)})"


def check_same_layout(*vectors: ParamVector) -> BlockLayout:
    layout = vectors[0].layout
    for v in vectors[1:]:
        if v.layout != layout:
            raise LayoutError("layout mismatch")
    return layout


def check_finite(values: np.ndarray, what: str = "values") -> None:
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"non-finite {what}")


def axpy(a: float, x: ParamVector, y: ParamVector) -> ParamVector:
    """Return ``y + a*x`` as a new vector."""
    layout = check_same_layout(x, y)
    with np.errstate(over="ignore", invalid="ignore"):
        out = y.values + a * x.values
    check_finite(out, "axpy result")
    return ParamVector(layout, out)


def trainable_view(x: ParamVector) -> np.ndarray:
    """Values of the live (non-frozen) blocks, concatenated in layout order."""
    return x.values[x.layout.trainable_mask]


def scatter_trainable(x: ParamVector, trainable: Sequence[float]) -> ParamVector:
    """Copy of ``x`` with its live coordinates replaced by ``trainable``."""
    trainable = np.asarray(trainable, dtype=np.float64)
    if trainable.shape != (x.layout.trainable_len,):
        raise LayoutError(
            f"expected {x.layout.trainable_len} trainable values, got {trainable.shape}"
        )
    out = x.values.copy()
    out[x.layout.trainable_mask] = trainable
    return ParamVector(x.layout, out)


def payload_bytes(x: ParamVector | BlockLayout) -> int:
    """Bytes needed to ship the trainable coordinates as 64-bit reals."""
    layout = x if isinstance(x, BlockLayout) else x.layout
    return 8 * layout.trainable_len


def serialize(x: ParamVector) -> bytes:
    return x.layout.to_bytes() + x.values.astype(F64, copy=False).tobytes()


def deserialize(buf: bytes) -> ParamVector:
    layout, offset = BlockLayout.from_bytes(buf)
    expected = 8 * layout.total_len
    if len(buf) - offset != expected:
        raise LayoutError(f"expected {expected} value bytes, found {len(buf) - offset}")
    values = np.frombuffer(buf, dtype=F64, offset=offset).astype(np.float64)
    return ParamVector(layout, values)


def save(x: ParamVector, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(x))


def load(path) -> ParamVector:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
