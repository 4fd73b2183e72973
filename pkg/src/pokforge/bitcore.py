"""Fixed-length bit vectors and Hamming-space operations.

Bits are held in a read-only ``uint8`` numpy array (one byte per bit). The
byte serialization is a 4-byte big-endian bit count followed by the bits
packed most-significant-bit first, trailing pad bits zero.

Randomness always comes from an explicit :class:`numpy.random.Generator`
backed by PCG64 (see :func:`make_rng`); nothing in the package touches the
global numpy state.
"""

from __future__ import annotations

import struct
from typing import Iterable, Union

import numpy as np

from .errors import FormatError, LengthError

MAX_SEED = 2**64 - 1


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator for a 64-bit unsigned ``seed``."""
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def derive_rng(seed: int, *tags: int) -> np.random.Generator:
    """Independent PCG64 stream keyed by ``seed`` and integer ``tags``.

    Use this when one seed must drive several consumers (device fabrication,
    enrollment randomness, ...) that would otherwise replay the same stream.
    """
    make_rng(seed)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, tags)])))


class BitString:
    """Immutable bit vector.

    Accepts any iterable of 0/1 values, a numpy array, or a string of
    ``'0'``/``'1'`` characters.
    """

    __slots__ = ("_bits",)

    def __init__(self, bits: Union[str, Iterable[int], np.ndarray] = ()):
        if isinstance(bits, BitString):
            arr = bits._bits
        elif isinstance(bits, str):
            if set(bits) - {"0", "1"}:
                raise ValueError(f"not a bit string: {bits!r}")
            arr = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
        else:
            arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
            if arr.dtype != np.bool_ and arr.size and ((arr != 0) & (arr != 1)).any():
                raise ValueError("bit values must be 0 or 1")
        arr = np.array(arr, dtype=np.uint8, copy=True).ravel()
        arr.flags.writeable = False
        self._bits = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "BitString":
        """Adopt a fresh uint8 0/1 array without validation or copy (internal use)."""
        obj = cls.__new__(cls)
        arr.flags.writeable = False
        obj._bits = arr
        return obj

    @classmethod
    def zeros(cls, n: int) -> "BitString":
        return cls(np.zeros(n, dtype=np.uint8))

    @classmethod
    def ones(cls, n: int) -> "BitString":
        return cls(np.ones(n, dtype=np.uint8))

    @property
    def bits(self) -> np.ndarray:
        """Read-only view of the underlying ``uint8`` array."""
        return self._bits

    @property
    def length(self) -> int:
        return int(self._bits.size)

    def __len__(self) -> int:
        return int(self._bits.size)

    def __iter__(self):
        return (int(b) for b in self._bits)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return BitString._wrap(self._bits[item].copy())
        return int(self._bits[item])

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return self._bits.size == other._bits.size and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self) -> int:
        return hash((self._bits.size, self._bits.tobytes()))

    def __xor__(self, other: "BitString") -> "BitString":
        return xor(self, other)

    def __add__(self, other: "BitString") -> "BitString":
        return BitString._wrap(np.concatenate([self._bits, other._bits]))

    def __str__(self) -> str:
        return (self._bits + ord("0")).tobytes().decode("ascii")

    def __repr__(self) -> str:
        s = str(self)
        if len(s) > 64:
            s = s[:61] + "..."
        return f"BitString('{s}', length={self.length})"

    def popcount(self) -> int:
        return int(self._bits.sum(dtype=np.int64))

    def packed(self) -> bytes:
        """Bits packed MSB-first, zero padded to a whole byte."""
        return np.packbits(self._bits, bitorder="big").tobytes()

    def to_bytes(self) -> bytes:
        return struct.pack(">I", self.length) + self.packed()

    @classmethod
    def from_packed(cls, data: bytes, length: int) -> "BitString":
        need = (length + 7) // 8
        if len(data) < need:
            raise FormatError(f"need {need} bytes for {length} bits, got {len(data)}")
        arr = np.unpackbits(np.frombuffer(data[:need], dtype=np.uint8), bitorder="big")
        return cls._wrap(arr[:length].copy())

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitString":
        bs, used = cls.read_from(data, 0)
        if used != len(data):
            raise FormatError(f"{len(data) - used} trailing bytes after bit string")
        return bs

    @classmethod
    def read_from(cls, data: bytes, offset: int) -> tuple["BitString", int]:
        """Parse one length-prefixed bit string at ``offset``.

        Returns the bit string and the offset just past it.
        """
        if len(data) < offset + 4:
            raise FormatError("truncated bit-string header")
        (n,) = struct.unpack_from(">I", data, offset)
        offset += 4
        nbytes = (n + 7) // 8
        if len(data) < offset + nbytes:
            raise FormatError("truncated bit-string body")
        bs = cls.from_packed(data[offset:offset + nbytes], n)
        return bs, offset + nbytes

    def to_hex(self) -> str:
        return self.packed().hex()


def _check_same_length(a: BitString, b: BitString) -> None:
    if a.length != b.length:
        raise LengthError(f"length mismatch: {a.length} != {b.length}")


def hamming_distance(a: BitString, b: BitString) -> int:
    _check_same_length(a, b)
    return int(np.count_nonzero(a.bits != b.bits))


def xor(a: BitString, b: BitString) -> BitString:
    _check_same_length(a, b)
    return BitString._wrap(np.bitwise_xor(a.bits, b.bits))


def random_bits(n: int, p1: float, rng: np.random.Generator) -> BitString:
    """``n`` independent Bernoulli(``p1``) bits drawn from ``rng``."""
    if not 0.0 <= p1 <= 1.0:
        raise ValueError(f"p1 must be a probability, got {p1}")
    return BitString._wrap((rng.random(n) < p1).astype(np.uint8))
