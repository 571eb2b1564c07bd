"""HeavyHash: SHA-256 sandwiched around a nibble matrix-vector weighting stage.

One round over an input byte string:

    d = SHA256(input)                      32 bytes
    x = nibbles(d)                         64 values in [0, 15]
    t = ((M @ x) >> 10) & 0xF              weighting, truncated to 4 bits
    out = SHA256(bytes(t ^ x))

The 64x64 weighting matrix M has 4-bit entries, is derived deterministically
from a 32-byte seed with xoshiro256++, and must be full rank over the
rationals so the weighting stage does not collapse distinct inputs.  The
whole consensus path is exact integer arithmetic: every accumulator is
bounded by 64 * 15 * 15 = 14400 < 2**14.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

DIGEST_SIZE = 32
MATRIX_DIM = 64
DEMO_DIM = 16
NIBBLE_BITS = 4
NIBBLE_MAX = 15
TRUNCATE_SHIFT = 10

# Largest weighting accumulator for an n-wide matrix of 4-bit entries.
def accumulator_max(dim: int) -> int:
    return dim * NIBBLE_MAX * NIBBLE_MAX


_MASK64 = 0xFFFFFFFFFFFFFFFF

# Prime used for the fast one-sided full-rank certificate: full rank mod p
# implies full rank over the rationals.  2**31 - 1 keeps all intermediate
# products inside int64.
_RANK_PRIME = 2**31 - 1


class ParameterError(ValueError):
    """Raised for dimension or parameter mismatches in the hash pipeline."""


def _rotl64(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def splitmix64(x: int) -> int:
    """One SplitMix64 step; used to condition the xoshiro seed words."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class Xoshiro256PlusPlus:
    """xoshiro256++ with the published state update.

    Seeded from a 32-byte digest read as four little-endian 64-bit words,
    each conditioned through one SplitMix64 step so a zero digest (or any
    zero word) cannot produce the forbidden all-zero state.
    """

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed: bytes):
        _check_digest(seed, "seed")
        words = struct.unpack("<4Q", seed)
        s = [splitmix64(w) for w in words]
        if not any(s):  # only reachable for one adversarial 256-bit seed
            s[0] = 1
        self.s0, self.s1, self.s2, self.s3 = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (s0 + _rotl64((s0 + s3) & _MASK64, 23)) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl64(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result


def _check_digest(value: bytes, name: str = "digest") -> None:
    if not isinstance(value, (bytes, bytearray)) or len(value) != DIGEST_SIZE:
        raise ValueError(f"{name} must be exactly {DIGEST_SIZE} bytes")


@dataclass(frozen=True)
class HeavyHashParams:
    """Pipeline knobs; everything but `rounds` is a consensus constant."""

    rounds: int = 1
    matrix_dim: int = MATRIX_DIM
    truncate_shift: int = TRUNCATE_SHIFT
    nibble_bits: int = NIBBLE_BITS

    def __post_init__(self):
        if self.rounds < 1:
            raise ParameterError("rounds must be >= 1")
        if self.matrix_dim not in (DEMO_DIM, MATRIX_DIM):
            raise ParameterError(f"matrix_dim must be {DEMO_DIM} or {MATRIX_DIM}")
        if self.truncate_shift != TRUNCATE_SHIFT:
            raise ParameterError(f"truncate_shift is fixed at {TRUNCATE_SHIFT}")
        if self.nibble_bits != NIBBLE_BITS:
            raise ParameterError(f"nibble_bits is fixed at {NIBBLE_BITS}")


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Full-rank matrix of 4-bit entries plus the seed it was derived from."""

    entries: np.ndarray  # (dim, dim) int64, values in [0, 15]
    seed: bytes

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=np.int64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("matrix must be square")
        if entries.shape[0] not in (DEMO_DIM, MATRIX_DIM):
            raise ValueError(f"matrix dimension must be {DEMO_DIM} or {MATRIX_DIM}")
        if entries.min() < 0 or entries.max() > NIBBLE_MAX:
            raise ValueError("matrix entries must be in [0, 15]")
        _check_digest(self.seed, "seed")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "seed", bytes(self.seed))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def identity_matrix(dim: int = MATRIX_DIM) -> WeightMatrix:
    """Identity weighting; heavyhash degenerates to double SHA-256."""
    return WeightMatrix(entries=np.eye(dim, dtype=np.int64), seed=bytes(DIGEST_SIZE))


def digest_to_nibbles(digest: bytes) -> np.ndarray:
    """Split a 32-byte digest into 64 nibbles, high nibble of each byte first."""
    _check_digest(digest)
    b = np.frombuffer(bytes(digest), dtype=np.uint8).astype(np.int64)
    out = np.empty(2 * DIGEST_SIZE, dtype=np.int64)
    out[0::2] = b >> 4
    out[1::2] = b & 0x0F
    return out


def nibbles_to_digest(nibbles: np.ndarray) -> bytes:
    """Inverse of digest_to_nibbles; exact round trip."""
    arr = np.asarray(nibbles, dtype=np.int64)
    if arr.shape != (2 * DIGEST_SIZE,):
        raise ValueError(f"expected {2 * DIGEST_SIZE} nibbles")
    if arr.min() < 0 or arr.max() > NIBBLE_MAX:
        raise ValueError("nibble values must be in [0, 15]")
    return ((arr[0::2] << 4) | arr[1::2]).astype(np.uint8).tobytes()


def _draw_entries(rng: Xoshiro256PlusPlus, dim: int) -> np.ndarray:
    # Row-major fill, 16 nibbles per 64-bit draw, least-significant nibble first.
    n_words = dim * dim // 16
    words = np.array([rng.next_u64() for _ in range(n_words)], dtype=np.uint64)
    shifts = (4 * np.arange(16, dtype=np.uint64))[np.newaxis, :]
    nibbles = (words[:, np.newaxis] >> shifts) & np.uint64(0xF)
    return nibbles.astype(np.int64).reshape(dim, dim)


def matrix_is_full_rank(matrix) -> bool:
    """Exact rank test over the rationals.

    Fraction-free Bareiss elimination in plain integer arithmetic; no
    floating point anywhere, so the verdict is exact for any integer matrix.
    """
    rows = [[int(v) for v in row] for row in np.asarray(matrix)]
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ValueError("matrix must be square")
    prev = 1
    for k in range(n):
        pivot_row = next((i for i in range(k, n) if rows[i][k] != 0), None)
        if pivot_row is None:
            return False
        if pivot_row != k:
            rows[k], rows[pivot_row] = rows[pivot_row], rows[k]
        pivot = rows[k][k]
        base = rows[k]
        for i in range(k + 1, n):
            row = rows[i]
            factor = row[k]
            for j in range(k + 1, n):
                row[j] = (row[j] * pivot - factor * base[j]) // prev
            row[k] = 0
        prev = pivot
    return True


def _full_rank_mod_p(matrix: np.ndarray, p: int = _RANK_PRIME) -> bool:
    # One-sided certificate: full rank mod p implies full rank over Q.
    # A False here is inconclusive and falls back to the exact test.
    a = np.asarray(matrix, dtype=np.int64) % p
    n = a.shape[0]
    for k in range(n):
        nz = np.nonzero(a[k:, k])[0]
        if nz.size == 0:
            return False
        piv = k + int(nz[0])
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
        inv = pow(int(a[k, k]), -1, p)
        a[k, k:] = (a[k, k:] * inv) % p
        below = a[k + 1:, k]
        if below.size:
            a[k + 1:, k:] = (a[k + 1:, k:] - below[:, np.newaxis] * a[k, k:]) % p
    return True


def generate_matrix(seed: bytes, dim: int = MATRIX_DIM) -> WeightMatrix:
    """Derive the weighting matrix for `seed`, deterministically.

    Candidates are drawn from a single xoshiro256++ stream; a candidate that
    is not full rank is discarded and the stream continues into the next one.
    Rank-deficient candidates are vanishingly rare, so the loop all but
    always exits on the first pass.
    """
    _check_digest(seed, "seed")
    if dim not in (DEMO_DIM, MATRIX_DIM):
        raise ValueError(f"dim must be {DEMO_DIM} or {MATRIX_DIM}")
    rng = Xoshiro256PlusPlus(seed)
    while True:
        entries = _draw_entries(rng, dim)
        if _full_rank_mod_p(entries) or matrix_is_full_rank(entries):
            return WeightMatrix(entries=entries, seed=bytes(seed))


def weighting_sums(matrix: WeightMatrix, x: np.ndarray) -> np.ndarray:
    """Raw accumulators y = M @ x before truncation; exact int64."""
    arr = np.asarray(x, dtype=np.int64)
    if arr.shape != (matrix.dim,):
        raise ParameterError(
            f"vector length {arr.shape} does not match matrix dim {matrix.dim}"
        )
    if arr.min() < 0 or arr.max() > NIBBLE_MAX:
        raise ValueError("nibble values must be in [0, 15]")
    return matrix.entries @ arr


def weighting(matrix: WeightMatrix, x: np.ndarray) -> np.ndarray:
    """Truncated weighting t_i = ((M @ x)_i >> 10) & 0xF."""
    return (weighting_sums(matrix, x) >> TRUNCATE_SHIFT) & 0xF


def heavyhash(params: HeavyHashParams, matrix: WeightMatrix, data: bytes) -> bytes:
    """Full HeavyHash of a byte string; 32-byte digest."""
    if matrix.dim != params.matrix_dim:
        raise ParameterError(
            f"matrix dim {matrix.dim} does not match params matrix_dim {params.matrix_dim}"
        )
    if matrix.dim != MATRIX_DIM:
        raise ParameterError(
            f"heavyhash needs a {MATRIX_DIM}-wide matrix to weight a "
            f"{DIGEST_SIZE}-byte digest"
        )
    for _ in range(params.rounds):
        inner = hashlib.sha256(data).digest()
        x = digest_to_nibbles(inner)
        t = weighting(matrix, x)
        data = hashlib.sha256(nibbles_to_digest(t ^ x)).digest()
    return data


def heavyhash_many(params: HeavyHashParams, matrix: WeightMatrix,
                   inputs: list[bytes]) -> list[bytes]:
    """Vectorized heavyhash over a batch of inputs.

    The batched matmul runs in float64 for BLAS speed; every intermediate is
    an integer far below 2**53, so the products and partial sums are exact
    and the result is bit-identical to the scalar path.
    """
    if matrix.dim != params.matrix_dim or matrix.dim != MATRIX_DIM:
        raise ParameterError("batched heavyhash needs the consensus 64-wide matrix")
    if not inputs:
        return []
    mt = matrix.entries.astype(np.float64).T
    data = list(inputs)
    n = len(data)
    for _ in range(params.rounds):
        inner = b"".join(hashlib.sha256(d).digest() for d in data)
        raw = np.frombuffer(inner, dtype=np.uint8).reshape(n, DIGEST_SIZE).astype(np.int64)
        x = np.empty((n, 2 * DIGEST_SIZE), dtype=np.int64)
        x[:, 0::2] = raw >> 4
        x[:, 1::2] = raw & 0x0F
        y = np.rint(x.astype(np.float64) @ mt).astype(np.int64)
        z = ((y >> TRUNCATE_SHIFT) & 0xF) ^ x
        packed = ((z[:, 0::2] << 4) | z[:, 1::2]).astype(np.uint8).tobytes()
        data = [
            hashlib.sha256(packed[i * DIGEST_SIZE:(i + 1) * DIGEST_SIZE]).digest()
            for i in range(n)
        ]
    return data
