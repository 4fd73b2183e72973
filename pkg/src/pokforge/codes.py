"""Binary linear block codes used by the secure sketch.

Every code works blockwise on ``(blocks, k)`` / ``(blocks, n)`` uint8 arrays
and corrects up to ``t`` errors per block. Decoding is nearest-codeword
within radius ``t``; patterns outside the radius decode silently to some
codeword.
"""

from __future__ import annotations

import itertools
import re
from functools import lru_cache

import numpy as np

from .errors import DomainError, LengthError

REPETITION, HAMMING74, BCH = 0x01, 0x02, 0x03


class LinearBlockCode:
    name: str
    code_id: int
    n: int
    k: int
    t: int

    def encode_blocks(self, m: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decode_blocks(self, c: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def descriptor(self):
        return (self.code_id, self.n, self.k, self.t)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, k={self.k}, t={self.t})"

    def __eq__(self, other):
        return isinstance(other, LinearBlockCode) and self.descriptor() == other.descriptor()

    def __hash__(self):
        return hash(self.descriptor())


class RepetitionCode(LinearBlockCode):
    """Each data bit repeated ``n`` times (odd ``n``), majority-vote decoding."""

    code_id = REPETITION
    k = 1

    def __init__(self, n: int):
        if n < 1 or n % 2 == 0:
            raise DomainError(f"repetition length must be odd and positive, got {n}")
        self.n = n
        self.t = (n - 1) // 2
        self.name = f"rep{n}"

    def encode_blocks(self, m):
        return np.repeat(m, self.n, axis=1)

    def decode_blocks(self, c):
        return (c.sum(axis=1, keepdims=True) > self.t).astype(np.uint8)


class _SyndromeCode(LinearBlockCode):
    """Systematic code ``G = [I_k | P]`` with a coset-leader syndrome table."""

    def __init__(self, parity: np.ndarray, t: int):
        parity = np.asarray(parity, dtype=np.uint8)
        self.k, r = parity.shape
        self.n = self.k + r
        self.t = t
        self.G = np.hstack([np.eye(self.k, dtype=np.uint8), parity])
        self.H = np.hstack([parity.T, np.eye(r, dtype=np.uint8)])
        self._weights = 1 << np.arange(r - 1, -1, -1)
        self._leaders = self._build_table()

    def _syndrome_index(self, c):
        s = (c.astype(np.int64) @ self.H.T.astype(np.int64)) % 2
        return s @ self._weights

    def _build_table(self):
        r = self.n - self.k
        table = np.zeros((1 << r, self.n), dtype=np.uint8)
        seen = np.zeros(1 << r, dtype=bool)
        seen[0] = True
        for w in range(1, self.t + 1):
            for pos in itertools.combinations(range(self.n), w):
                e = np.zeros(self.n, dtype=np.uint8)
                e[list(pos)] = 1
                idx = int(self._syndrome_index(e[None, :])[0])
                if seen[idx]:
                    raise DomainError(f"code cannot correct {self.t} errors: syndrome collision")
                seen[idx] = True
                table[idx] = e
        return table

    def encode_blocks(self, m):
        return ((m.astype(np.int64) @ self.G.astype(np.int64)) % 2).astype(np.uint8)

    def decode_blocks(self, c):
        corrected = c ^ self._leaders[self._syndrome_index(c)]
        return corrected[:, :self.k]


class Hamming74(_SyndromeCode):
    code_id = HAMMING74
    name = "hamming74"

    def __init__(self):
        super().__init__(np.array([[1, 1, 0],
                                   [1, 0, 1],
                                   [0, 1, 1],
                                   [1, 1, 1]]), t=1)


def _poly_parity(n: int, gen: int) -> np.ndarray:
    """Parity part of the systematic generator of the cyclic code with generator polynomial ``gen``."""
    r = gen.bit_length() - 1
    k = n - r
    rows = []
    for i in range(k):
        # remainder of x^(n-1-i) mod g gives the parity of data bit i
        rem = 1 << (n - 1 - i)
        for shift in range(n - 1 - i, r - 1, -1):
            if rem >> shift & 1:
                rem ^= gen << (shift - r)
        rows.append([(rem >> (r - 1 - j)) & 1 for j in range(r)])
    return np.array(rows, dtype=np.uint8)


# generator polynomials of the narrow-sense binary BCH codes of length 15
_BCH15 = {7: (0b111010001, 2), 5: (0b10100110111, 3)}


class BCH15(_SyndromeCode):
    """Binary BCH code of length 15: (15,7) with t=2 or (15,5) with t=3."""

    code_id = BCH

    def __init__(self, k: int = 7):
        if k not in _BCH15:
            raise DomainError(f"no BCH(15,{k}) available; choose k in {sorted(_BCH15)}")
        gen, t = _BCH15[k]
        super().__init__(_poly_parity(15, gen), t=t)
        self.name = f"bch15_{k}"


@lru_cache(maxsize=None)
def get_code(name: str) -> LinearBlockCode:
    """Code by CLI name: ``rep<odd n>``, ``hamming74``, ``bch15_7`` or ``bch15_5``."""
    name = name.lower()
    m = re.fullmatch(r"rep(\d+)", name)
    if m:
        return RepetitionCode(int(m.group(1)))
    if name == "hamming74":
        return Hamming74()
    m = re.fullmatch(r"bch15_(\d+)", name)
    if m:
        return BCH15(int(m.group(1)))
    raise DomainError(f"unknown code {name!r}")


def code_from_descriptor(code_id: int, n: int, k: int, t: int) -> LinearBlockCode:
    if code_id == REPETITION:
        code = get_code(f"rep{n}")
    elif code_id == HAMMING74:
        code = get_code("hamming74")
    elif code_id == BCH and n == 15:
        code = get_code(f"bch15_{k}")
    else:
        raise DomainError(f"unknown code id 0x{code_id:02x} with n={n}")
    if code.descriptor() != (code_id, n, k, t):
        raise DomainError(f"descriptor {(code_id, n, k, t)} does not match {code}")
    return code


def check_blocks(length: int, size: int, what: str) -> int:
    if size <= 0 or length % size:
        raise LengthError(f"{what} length {length} is not a multiple of {size}")
    return length // size
