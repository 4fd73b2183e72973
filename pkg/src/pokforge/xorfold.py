"""XOR folding of biased or correlated bits into fewer, less biased bits."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .bitcore import BitString
from .errors import DomainError, FormatError, LengthError

PLAN_MAGIC = b"XPLN"
# magic, group size, input length, flags, 3 reserved bytes: 16 bytes total
_PLAN = struct.Struct(">4sIIB3x")
_STRIDED = 0x01


@dataclass(frozen=True)
class XorPlan:
    """Fold ``input_len`` bits in groups of ``group_size``.

    With ``strided=False`` output bit ``j`` is the parity of inputs
    ``[j*g, (j+1)*g)``. With ``strided=True`` it is the parity of inputs
    ``j, j + out, j + 2*out, ...`` so neighbouring inputs land in different
    outputs. Leftover bits beyond ``output_len * g`` are dropped.
    """

    group_size: int
    input_len: int
    strided: bool = False

    def __post_init__(self):
        if self.group_size < 1:
            raise DomainError(f"group size must be >= 1, got {self.group_size}")
        if self.input_len < self.group_size:
            raise LengthError(f"input of {self.input_len} bits is shorter than one group")

    @property
    def output_len(self) -> int:
        return self.input_len // self.group_size

    def to_bytes(self) -> bytes:
        return _PLAN.pack(PLAN_MAGIC, self.group_size, self.input_len,
                          _STRIDED if self.strided else 0)

    @classmethod
    def from_bytes(cls, data: bytes) -> "XorPlan":
        if len(data) != _PLAN.size:
            raise FormatError(f"plan record must be {_PLAN.size} bytes, got {len(data)}")
        magic, g, n, flags = _PLAN.unpack(data)
        if magic != PLAN_MAGIC or flags & ~_STRIDED:
            raise FormatError("bad plan record")
        try:
            return cls(group_size=g, input_len=n, strided=bool(flags & _STRIDED))
        except ValueError as exc:
            raise FormatError(str(exc)) from exc


def xor_fold(plan: XorPlan, w: BitString) -> BitString:
    g, out = plan.group_size, plan.output_len
    if len(w) < g:
        raise LengthError(f"{len(w)} bits is shorter than one group of {g}")
    if len(w) != plan.input_len:
        raise LengthError(f"plan expects {plan.input_len} bits, got {len(w)}")
    used = w.bits[:out * g]
    groups = used.reshape(g, out).T if plan.strided else used.reshape(out, g)
    return BitString(np.bitwise_xor.reduce(groups, axis=1))


def predicted_bias(p1, g: int):
    """P(parity = 1) for ``g`` independent Bernoulli(``p1``) bits."""
    p1 = np.asarray(p1, dtype=float)
    if np.any((p1 < 0) | (p1 > 1)):
        raise DomainError("p1 must lie in [0, 1]")
    if g < 1:
        raise DomainError("g must be >= 1")
    q = (1.0 - (1.0 - 2.0 * p1) ** g) / 2.0
    return float(q) if q.ndim == 0 else q
