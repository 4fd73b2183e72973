"""Code-offset secure sketch and Toeplitz-hash privacy amplification.

Gen reads ``W``, publishes ``h = W xor Encode(x)`` plus a hash seed ``s`` and
keeps ``k = T_s W``. Rep corrects a noisy ``W'`` back to ``W`` through ``h``
and rehashes. Failures beyond the code radius are silent here; callers that
need detection compare a key-check value (see :mod:`pokforge.engine`).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bitcore import BitString, random_bits
from .codes import LinearBlockCode, check_blocks, code_from_descriptor
from .errors import FormatError, LengthError

HELPER_MAGIC = b"POKH"
HELPER_VERSION = 0x01
_HEADER = struct.Struct(">4sBBHHHII")
_MAX_SEED_DRAWS = 1000


def encode(code: LinearBlockCode, m: BitString) -> BitString:
    blocks = check_blocks(len(m), code.k, "message")
    return BitString._wrap(code.encode_blocks(m.bits.reshape(blocks, code.k)).astype(np.uint8).ravel())


def decode(code: LinearBlockCode, c: BitString) -> BitString:
    blocks = check_blocks(len(c), code.n, "codeword")
    return BitString._wrap(code.decode_blocks(c.bits.reshape(blocks, code.n)).astype(np.uint8).ravel())


def ss_gen(code: LinearBlockCode, W: BitString, x: Optional[BitString] = None,
           rng: Optional[np.random.Generator] = None) -> BitString:
    """Sketch ``h = W xor Encode(x)``; ``x`` is drawn from ``rng`` when omitted."""
    blocks = check_blocks(len(W), code.n, "W")
    if x is None:
        if rng is None:
            raise ValueError("either x or rng is required")
        x = random_bits(blocks * code.k, 0.5, rng)
    if len(x) != blocks * code.k:
        raise LengthError(f"x has {len(x)} bits, expected {blocks * code.k}")
    return W ^ encode(code, x)


def rec(code: LinearBlockCode, W_prime: BitString, h: BitString) -> BitString:
    """Recover ``W`` from a noisy reading; exact when every block has at most ``t`` errors."""
    if len(W_prime) != len(h):
        raise LengthError(f"W' has {len(W_prime)} bits, sketch has {len(h)}")
    return h ^ encode(code, decode(code, W_prime ^ h))


def toeplitz_seed_ok(s: BitString, n: int, out_len: int) -> bool:
    """True when no row of the ``out_len x n`` Toeplitz matrix is all zero.

    Row ``i`` reads ``s[i : i + n]`` (reversed), so this is a check that no
    window of ``n`` consecutive seed bits is all zero.
    """
    if out_len == 0:
        return True
    if n == 0:
        return False
    csum = np.concatenate([[0], np.cumsum(s.bits, dtype=np.int64)])
    windows = csum[n:n + out_len] - csum[:out_len]
    return bool(np.all(windows > 0))


def pa_hash(W: BitString, s: BitString, out_len: int) -> BitString:
    """``k = T_s W`` over GF(2) with ``T[i][j] = s[i - j + len(W) - 1]``.

    The product is the middle slice of the full integer convolution of ``s``
    with ``W``, reduced mod 2.
    """
    n = len(W)
    if out_len < 0:
        raise LengthError("out_len must be non-negative")
    if len(s) != out_len + n - 1 and not (out_len == 0 and len(s) == 0):
        raise LengthError(f"seed has {len(s)} bits, expected {out_len + n - 1}")
    if out_len == 0:
        return BitString.zeros(0)
    full = np.convolve(s.bits.astype(np.int64), W.bits.astype(np.int64))
    return BitString._wrap((full[n - 1:n - 1 + out_len] & 1).astype(np.uint8))


@dataclass(frozen=True)
class EnrolledKey:
    """Secret key material; deliberately not part of :class:`HelperData`."""

    k: BitString

    @property
    def pa_output_len(self) -> int:
        return len(self.k)

    def __repr__(self):
        return f"EnrolledKey(<{len(self.k)} bits>)"


@dataclass(frozen=True)
class HelperData:
    code: LinearBlockCode
    block_count: int
    h: BitString
    s: BitString
    pa_output_len: int
    version: int = HELPER_VERSION

    def __post_init__(self):
        if len(self.h) != self.code.n * self.block_count:
            raise LengthError(f"sketch has {len(self.h)} bits, expected {self.code.n * self.block_count}")
        expected = self.pa_output_len + len(self.h) - 1 if self.pa_output_len else 0
        if len(self.s) != expected:
            raise LengthError(f"seed has {len(self.s)} bits, expected {expected}")

    def to_bytes(self) -> bytes:
        code_id, n, k, t = self.code.descriptor()
        body = _HEADER.pack(HELPER_MAGIC, self.version, code_id, n, k, t,
                            self.block_count, self.pa_output_len)
        body += self.s.to_bytes() + self.h.to_bytes()
        return body + struct.pack(">I", zlib.crc32(body))

    @classmethod
    def from_bytes(cls, data: bytes) -> "HelperData":
        hd, end = cls.read_from(data, 0)
        if end != len(data):
            raise FormatError(f"{len(data) - end} trailing bytes after helper data")
        return hd

    @classmethod
    def read_from(cls, data: bytes, offset: int = 0):
        """Parse one record starting at ``offset``; returns ``(helper, end_offset)``."""
        try:
            magic, version, code_id, n, k, t, blocks, out_len = _HEADER.unpack_from(data, offset)
        except struct.error as exc:
            raise FormatError("truncated helper data header") from exc
        if magic != HELPER_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != HELPER_VERSION:
            raise FormatError(f"unsupported helper data version {version}")
        pos = offset + _HEADER.size
        s, pos = BitString.read_from(data, pos)
        h, pos = BitString.read_from(data, pos)
        if pos + 4 > len(data):
            raise FormatError("missing CRC-32 trailer")
        (crc,) = struct.unpack_from(">I", data, pos)
        if crc != zlib.crc32(data[offset:pos]):
            raise FormatError("helper data CRC mismatch")
        try:
            code = code_from_descriptor(code_id, n, k, t)
            hd = cls(code=code, block_count=blocks, h=h, s=s, pa_output_len=out_len, version=version)
        except (LengthError, ValueError) as exc:
            raise FormatError(str(exc)) from exc
        return hd, pos + 4


def draw_seed(n: int, out_len: int, rng: np.random.Generator) -> BitString:
    """Uniform Toeplitz seed, redrawn while any matrix row would be all zero."""
    if out_len == 0:
        return BitString.zeros(0)
    for _ in range(_MAX_SEED_DRAWS):
        s = random_bits(out_len + n - 1, 0.5, rng)
        if toeplitz_seed_ok(s, n, out_len):
            return s
    raise LengthError(f"no usable Toeplitz seed for n={n}, out_len={out_len}")


def fe_gen(code: LinearBlockCode, W: BitString, out_len: int, rng: np.random.Generator):
    """Enrollment: returns public :class:`HelperData` and the secret :class:`EnrolledKey`."""
    blocks = check_blocks(len(W), code.n, "W")
    if out_len < 0:
        raise LengthError("out_len must be non-negative")
    h = ss_gen(code, W, rng=rng)
    s = draw_seed(len(W), out_len, rng)
    hd = HelperData(code=code, block_count=blocks, h=h, s=s, pa_output_len=out_len)
    return hd, EnrolledKey(pa_hash(W, s, out_len))


def fe_rep(code: Optional[LinearBlockCode], W_prime: BitString, hd: HelperData) -> EnrolledKey:
    """Reproduction; ``code`` may be ``None`` to use the one recorded in ``hd``."""
    code = hd.code if code is None else code
    if code != hd.code:
        raise LengthError(f"code {code} does not match helper data code {hd.code}")
    W = rec(code, W_prime, hd.h)
    return EnrolledKey(pa_hash(W, hd.s, hd.pa_output_len))
