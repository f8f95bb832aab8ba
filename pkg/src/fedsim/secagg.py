"""Simulation-grade secure aggregation.

Clients quantize their (weight-scaled) deltas to fixed point, add pairwise
masks that cancel in the field sum, and the server only ever sees the sum.
Seeds travel in plaintext via the server, which is fine for simulation and
nothing else; there is no dropout recovery, a missing client aborts.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import BlockLayout, ParamVector
from .errors import ConfigError, FrameError, ProtocolError, SecureAbort
from .rng import derive_seed

log = logging.getLogger(__name__)

_HEADER = struct.Struct("<BBd")


@dataclass(frozen=True)
class QuantizationConfig:
    bits: int = 32
    clip: float = 8.0
    headroom_bits: int = 4

    def __post_init__(self):
        errors = []
        if not 1 <= self.bits <= 64:
            errors.append(("bits", "must be in [1, 64]"))
        if self.bits - self.headroom_bits < 16:
            errors.append(("headroom_bits", "bits - headroom_bits must be >= 16"))
        if self.bits - self.headroom_bits > 52:
            errors.append(("bits", "bits - headroom_bits must be <= 52 for exact float rounding"))
        if self.headroom_bits < 0:
            errors.append(("headroom_bits", "must be >= 0"))
        if not self.clip > 0:
            errors.append(("clip", "must be > 0"))
        if errors:
            raise ConfigError("invalid quantization config", errors)

    @property
    def levels(self) -> int:
        """Largest quantized value, 2^(bits - headroom) - 1."""
        return (1 << (self.bits - self.headroom_bits)) - 1

    @property
    def step(self) -> float:
        """Quantization step: 2*clip / levels."""
        return 2.0 * self.clip / self.levels

    @property
    def modulus_mask(self) -> np.uint64:
        return np.uint64((1 << self.bits) - 1) if self.bits < 64 else np.uint64(2**64 - 1)

    def check_cohort(self, size: int) -> None:
        if size > (1 << self.headroom_bits):
            raise ConfigError(
                f"cohort of {size} overflows {self.headroom_bits} headroom bits",
                [("quantization.headroom_bits", f"2^headroom must be >= cohort size {size}")],
            )


@dataclass
class MaskedUpdate:
    client_id: int
    field_values: np.ndarray  # uint64, each < 2^bits
    weight_field: int
    q: QuantizationConfig

    def to_bytes(self) -> bytes:
        dtype = "<u4" if self.q.bits <= 32 else "<u8"
        body = np.concatenate([self.field_values, [np.uint64(self.weight_field)]]).astype(dtype)
        return _HEADER.pack(self.q.bits, self.q.headroom_bits, self.q.clip) + body.tobytes()

    @classmethod
    def from_bytes(cls, client_id: int, buf: bytes) -> "MaskedUpdate":
        if len(buf) < _HEADER.size:
            raise FrameError("masked payload shorter than its header")
        bits, headroom, clip = _HEADER.unpack_from(buf)
        try:
            q = QuantizationConfig(bits=bits, clip=clip, headroom_bits=headroom)
        except ConfigError as exc:
            raise ProtocolError(f"bad quantization header: {exc}") from exc
        width = 4 if bits <= 32 else 8
        rest = len(buf) - _HEADER.size
        if rest < width or rest % width:
            raise FrameError("masked payload is not a whole number of field elements")
        arr = np.frombuffer(buf, dtype="<u4" if width == 4 else "<u8", offset=_HEADER.size).astype(np.uint64)
        if np.any(arr > q.modulus_mask):
            raise ProtocolError("field element out of range")
        return cls(client_id, arr[:-1].copy(), int(arr[-1]), q)

    def field_bytes(self) -> int:
        return (4 if self.q.bits <= 32 else 8) * (self.field_values.shape[0] + 1)


def quantize(x, q: QuantizationConfig) -> np.ndarray:
    """Clip to [-clip, clip] and map affinely onto 0..levels (round half away from zero)."""
    x = np.clip(np.asarray(x, dtype=np.float64), -q.clip, q.clip)
    scaled = (x + q.clip) / (2.0 * q.clip) * q.levels
    # scaled >= 0, so half-away-from-zero is floor(v + 0.5)
    return np.minimum(np.floor(scaled + 0.5), q.levels).astype(np.uint64)


def dequantize(v, q: QuantizationConfig) -> np.ndarray:
    return np.asarray(v, dtype=np.float64) * q.step - q.clip


def pair_seed(root_seed: int, round: int, i: int, j: int) -> int:
    a, b = (i, j) if i < j else (j, i)
    return derive_seed(root_seed, "secagg_pair", round, a, b)


def exchange_seeds(cohort, round: int, root_seed: int, transport=None) -> dict:
    """One shared seed per unordered cohort pair, keyed ``(i, j)`` with ``i < j``.

    The lower id draws the seed and ``transport(sender, receiver, seed)``
    relays it; the relay returns what the receiver got. With no transport the
    seed is handed over directly. A relay that loses a seed aborts the round.
    """
    cohort = sorted(int(c) for c in cohort)
    log.warning("secure aggregation seeds are relayed in plaintext (simulation only)")
    seeds = {}
    for a in range(len(cohort)):
        for b in range(a + 1, len(cohort)):
            i, j = cohort[a], cohort[b]
            s = pair_seed(root_seed, round, i, j)
            got = s if transport is None else transport(i, j, s)
            if got is None:
                raise SecureAbort(f"seed for pair ({i}, {j}) never arrived", round=round, missing=(j,))
            if got != s:
                raise ProtocolError(f"pair ({i}, {j}) endpoints disagree on their seed")
            seeds[(i, j)] = s
    return seeds


def _pair_masks(client_id, cohort, seeds, n, q):
    """Net mask for one client: + PRG(s_ij) for peers above, - PRG(s_ij) for peers below."""
    keep = q.modulus_mask
    net = np.zeros(n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for peer in sorted(int(c) for c in cohort):
            if peer == client_id:
                continue
            key = (min(client_id, peer), max(client_id, peer))
            if key not in seeds:
                raise ProtocolError(f"client {client_id} is missing the seed shared with {peer}")
            stream = kernels.mask_stream(np.uint64(seeds[key]), n, q.bits)
            net = (net + stream) & keep if peer > client_id else (net - stream) & keep
    return net


def mask_update(delta_q, client_id: int, cohort, seeds: dict, q: QuantizationConfig,
                weight_q: int = 0) -> MaskedUpdate:
    """Add the client's pairwise masks to its quantized delta and weight."""
    delta_q = np.asarray(delta_q, dtype=np.uint64)
    n = delta_q.shape[0]
    net = _pair_masks(client_id, cohort, seeds, n + 1, q)
    keep = q.modulus_mask
    with np.errstate(over="ignore"):
        values = (delta_q + net[:n]) & keep
        weight = (np.uint64(weight_q) + net[n]) & keep
    return MaskedUpdate(client_id, values, int(weight), q)


def prepare_update(delta_trainable, weight: float, client_id: int, cohort, seeds: dict,
                   q: QuantizationConfig, weight_bound: float) -> MaskedUpdate:
    """Quantize ``weight * delta / weight_bound`` and the integer weight, then mask both."""
    if weight != int(weight) or weight < 0:
        raise ValueError("secure aggregation needs non-negative integer client weights")
    scaled = np.asarray(delta_trainable, dtype=np.float64) * (weight / weight_bound)
    return mask_update(quantize(scaled, q), client_id, cohort, seeds, q, int(weight))


def field_sum(updates, q: QuantizationConfig) -> tuple[np.ndarray, int]:
    keep = q.modulus_mask
    total = np.zeros_like(updates[0].field_values)
    weight = np.uint64(0)
    with np.errstate(over="ignore"):
        for u in updates:
            total = (total + u.field_values) & keep
            weight = (weight + np.uint64(u.weight_field)) & keep
    return total, int(weight)


def aggregation_error_bound(q: QuantizationConfig, weights, weight_bound: float) -> float:
    """Per-coordinate bound on |secure - clear| for one aggregation."""
    weights = [float(w) for w in weights]
    return q.step / 2 * len(weights) * weight_bound / sum(weights)


def secure_aggregate(updates, q: QuantizationConfig, expected_cohort, layout: BlockLayout,
                     weight_bound: float = 1.0) -> ParamVector:
    """Weighted mean delta recovered from the field sum of masked updates.

    The per-coordinate error against clear aggregation is at most
    ``step/2 * cohort * weight_bound / sum(weights)``, i.e. ``step/2`` when
    every weight equals the bound.
    """
    expected = sorted(int(c) for c in expected_cohort)
    got = {u.client_id: u for u in updates}
    missing = [c for c in expected if c not in got]
    if missing:
        raise SecureAbort(f"secure round missing clients {missing}", missing=missing)
    if sorted(got) != expected:
        raise ProtocolError(f"unexpected secure updates from {sorted(set(got) - set(expected))}")
    q.check_cohort(len(expected))
    ordered = [got[c] for c in expected]
    for u in ordered:
        if u.q != q:
            raise ProtocolError(f"client {u.client_id} used a different quantization")
        if u.field_values.shape[0] != layout.trainable_len:
            raise ProtocolError(f"client {u.client_id} sent {u.field_values.shape[0]} coordinates")
    total, weight_sum = field_sum(ordered, q)
    if weight_sum <= 0:
        raise ProtocolError("aggregate weight is zero")
    # masks cancelled: total is the plain integer sum of the quantized values
    scaled_sum = total.astype(np.float64) * q.step - len(expected) * q.clip
    values = np.zeros(layout.total_len)
    values[layout.trainable_mask] = scaled_sum * (weight_bound / weight_sum)
    return ParamVector(layout, values)
