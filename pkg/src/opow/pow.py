"""Hashcash mechanics over HeavyHash.

Compact target codec (Bitcoin-style 4-byte exponent/mantissa), the 88-byte
little-endian block header, strict below-target comparison, batched nonce
search, window retargeting with a clamp, and expected-work accounting.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

from .heavyhash import (
    DIGEST_SIZE,
    HeavyHashParams,
    WeightMatrix,
    heavyhash,
    heavyhash_many,
)

TARGET_SPACE = 1 << 256

HEADER_FORMAT = "<I32s32sQIQ"
HEADER_SIZE = struct.calcsize(HEADER_FORMAT)  # 88
_PREFIX_FORMAT = "<I32s32sQI"  # header minus the trailing nonce

_U32 = 1 << 32
_U64 = 1 << 64


class MalformedHeaderError(ValueError):
    """Header bytes of the wrong length or fields out of range."""


class CompactTargetError(ValueError):
    """Compact bits that do not decode to a target in (0, 2**256)."""


class InvalidWindowError(ValueError):
    """Retarget timestamp window of the wrong shape."""


@dataclass(frozen=True)
class BlockHeader:
    version: int
    parent_hash: bytes
    payload_commitment: bytes
    timestamp: int
    compact_target: int
    nonce: int

    def __post_init__(self):
        if not 0 <= self.version < _U32:
            raise MalformedHeaderError("version out of u32 range")
        if len(self.parent_hash) != DIGEST_SIZE:
            raise MalformedHeaderError("parent_hash must be 32 bytes")
        if len(self.payload_commitment) != DIGEST_SIZE:
            raise MalformedHeaderError("payload_commitment must be 32 bytes")
        if not 0 <= self.timestamp < _U64:
            raise MalformedHeaderError("timestamp out of u64 range")
        if not 0 <= self.compact_target < _U32:
            raise MalformedHeaderError("compact_target out of u32 range")
        if not 0 <= self.nonce < _U64:
            raise MalformedHeaderError("nonce out of u64 range")

    def with_nonce(self, nonce: int) -> "BlockHeader":
        return BlockHeader(self.version, self.parent_hash, self.payload_commitment,
                           self.timestamp, self.compact_target, nonce)


def serialize_header(header: BlockHeader) -> bytes:
    return struct.pack(HEADER_FORMAT, header.version, header.parent_hash,
                       header.payload_commitment, header.timestamp,
                       header.compact_target, header.nonce)


def deserialize_header(data: bytes) -> BlockHeader:
    if len(data) != HEADER_SIZE:
        raise MalformedHeaderError(f"header must be exactly {HEADER_SIZE} bytes")
    fields = struct.unpack(HEADER_FORMAT, data)
    return BlockHeader(*fields)


def _check_target(target: int) -> None:
    if not 0 < target < TARGET_SPACE:
        raise ValueError("target must be in (0, 2**256)")


def target_from_compact(bits: int) -> int:
    """Decode 4-byte compact bits to a full target; strict validation."""
    if not 0 <= bits < _U32:
        raise CompactTargetError("compact bits out of u32 range")
    exponent = bits >> 24
    mantissa = bits & 0x007FFFFF
    if bits & 0x00800000:
        raise CompactTargetError("compact sign bit set")
    if mantissa == 0:
        raise CompactTargetError("compact mantissa is zero")
    if exponent <= 3:
        target = mantissa >> (8 * (3 - exponent))
    else:
        target = mantissa << (8 * (exponent - 3))
    if target == 0:
        raise CompactTargetError("compact bits decode to zero")
    if target >= TARGET_SPACE:
        raise CompactTargetError("compact bits decode above 2**256")
    return target


def compact_from_target(target: int) -> int:
    """Encode a target as compact bits, rounding the mantissa down."""
    _check_target(target)
    size = (target.bit_length() + 7) // 8
    if size <= 3:
        mantissa = target << (8 * (3 - size))
    else:
        mantissa = target >> (8 * (size - 3))
    if mantissa & 0x00800000:
        mantissa >>= 8
        size += 1
    return (size << 24) | mantissa


def meets_target(digest: bytes, target: int) -> bool:
    """Strictly below-target test on the big-endian value of the digest."""
    if len(digest) != DIGEST_SIZE:
        raise ValueError("digest must be 32 bytes")
    _check_target(target)
    return int.from_bytes(digest, "big") < target


def work_from_target(target: int) -> int:
    """Expected trials to clear the target: floor(2**256 / (target + 1))."""
    _check_target(target)
    return TARGET_SPACE // (target + 1)


@dataclass(frozen=True)
class RetargetParams:
    window: int = 64
    expected_interval: int = 600  # seconds
    clamp_factor: Fraction = Fraction(4)

    def __post_init__(self):
        object.__setattr__(self, "clamp_factor", Fraction(self.clamp_factor))
        if self.window <= 0 or self.expected_interval <= 0:
            raise ValueError("window and expected_interval must be positive")
        if self.clamp_factor <= 1:
            raise ValueError("clamp_factor must exceed 1")


def retarget(timestamps: list[int], current: int, params: RetargetParams) -> int:
    """New target after one window.

    `timestamps` covers window+1 consecutive blocks; the elapsed span is
    compared against window * expected_interval, the ratio clamped to
    [1/clamp_factor, clamp_factor], and the target rescaled with exact
    rational arithmetic and a final floor.
    """
    _check_target(current)
    if len(timestamps) != params.window + 1:
        raise InvalidWindowError(
            f"need {params.window + 1} timestamps, got {len(timestamps)}"
        )
    if any(b <= a for a, b in zip(timestamps, timestamps[1:])):
        raise InvalidWindowError("timestamps must be strictly increasing")
    span = params.window * params.expected_interval
    actual = Fraction(timestamps[-1] - timestamps[0])
    lo = Fraction(span) / params.clamp_factor
    hi = Fraction(span) * params.clamp_factor
    actual = min(max(actual, lo), hi)
    scaled = Fraction(current) * actual / span
    new_target = scaled.numerator // scaled.denominator
    return max(1, min(new_target, TARGET_SPACE - 1))


def scheduled_target(parent_height: int, parent_target: int,
                     timestamp_at: Callable[[int], int],
                     params: RetargetParams) -> int:
    """Target a child of the given parent must use.

    Retargets when the parent sits on a positive window boundary, using the
    window+1 timestamps ending at the parent; the result is squeezed through
    the compact encoding so consensus always compares encodable targets.
    """
    if parent_height == 0 or parent_height % params.window != 0:
        return parent_target
    ts = [timestamp_at(h) for h in
          range(parent_height - params.window, parent_height + 1)]
    raw = retarget(ts, parent_target, params)
    return target_from_compact(compact_from_target(raw))


def mine(template: BlockHeader, matrix: WeightMatrix, target: int,
         nonce_start: int, nonce_count: int,
         params: HeavyHashParams = HeavyHashParams(),
         batch: int = 1024) -> Optional[int]:
    """Smallest nonce in [nonce_start, nonce_start + nonce_count) whose
    header HeavyHash meets the target, or None if the range is exhausted."""
    if target_from_compact(template.compact_target) != target:
        raise ValueError("template compact_target does not encode the target")
    if nonce_count < 0 or nonce_start < 0 or nonce_start + nonce_count > _U64:
        raise ValueError("nonce range out of u64 space")
    prefix = struct.pack(_PREFIX_FORMAT, template.version, template.parent_hash,
                         template.payload_commitment, template.timestamp,
                         template.compact_target)
    end = nonce_start + nonce_count
    nonce = nonce_start
    while nonce < end:
        chunk = min(batch, end - nonce)
        headers = [prefix + struct.pack("<Q", nonce + i) for i in range(chunk)]
        for i, digest in enumerate(heavyhash_many(params, matrix, headers)):
            if meets_target(digest, target):
                return nonce + i
        nonce += chunk
    return None


def verify_header(header: BlockHeader, matrix: WeightMatrix,
                  params: HeavyHashParams = HeavyHashParams()) -> bool:
    """Re-run the PoW check a block claims: HeavyHash below its own target."""
    target = target_from_compact(header.compact_target)
    digest = heavyhash(params, matrix, serialize_header(header))
    return meets_target(digest, target)


@dataclass(frozen=True)
class SimPoint:
    """One block of a virtual constant-hashrate chain."""

    height: int
    timestamp: int
    target: int
    interval: float


def simulate_retarget_chain(initial_target: int, hashrate: float,
                            n_blocks: int, params: RetargetParams,
                            stochastic: bool = False,
                            seed: int = 0) -> list[SimPoint]:
    """Drive the retarget rule with a constant-hashrate virtual miner.

    No hashing happens: each block lands after its expected solve time
    2**256 / (target * hashrate) seconds (or an exponential draw of that
    mean in stochastic mode), and the target follows the same schedule real
    chain validation enforces.  Returns every block after genesis.
    """
    import random

    _check_target(initial_target)
    if hashrate <= 0 or n_blocks <= 0:
        raise ValueError("hashrate and n_blocks must be positive")
    rng = random.Random(seed)
    timestamps = [0]
    targets = [initial_target]
    points = []
    clock = 0.0
    for height in range(1, n_blocks + 1):
        parent_height = height - 1
        target = scheduled_target(parent_height, targets[parent_height],
                                  lambda h: timestamps[h], params)
        mean_interval = TARGET_SPACE / (target * hashrate)
        interval = rng.expovariate(1.0 / mean_interval) if stochastic else mean_interval
        clock += interval
        ts = max(timestamps[-1] + 1, round(clock))  # integer, strictly increasing
        timestamps.append(ts)
        targets.append(target)
        points.append(SimPoint(height, ts, target, interval))
    return points


def window_mean_intervals(points: list[SimPoint], window: int) -> list[float]:
    """Mean observed block interval per full retarget window."""
    means = []
    for start in range(0, len(points) - window + 1, window):
        chunk = points[start:start + window]
        first = points[start - 1].timestamp if start else 0
        means.append((chunk[-1].timestamp - first) / window)
    return means
