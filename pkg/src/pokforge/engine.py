"""Device enrollment, key reconstruction and challenge response.

Two pipelines turn a device read-out ``W`` into a key ``k``:

* ``fe``: fuzzy extractor (secure sketch plus Toeplitz hash), needs public
  helper data and tolerates read noise up to the code radius;
* ``xor``: plain XOR folding of ``W``, no helper data at all, for sources
  whose reads never change.

Both store an 8-byte key-check value ``KCV = HMAC-SHA256(k, "POK-KCV")[:8]``
so a wrong reconstruction is detected instead of returned silently.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
import threading
import zlib
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import litho
from .bitcore import BitString, derive_rng, make_rng, random_bits
from .codes import get_code
from .errors import (DomainError, EnrollError, FormatError, KeyMismatchError, LengthError,
                     OverProgramError, UnderProgramError, WeakCellError)
from .fuzzy import EnrolledKey, HelperData, fe_gen, fe_rep
from .pcm import Geometry, MaterialParams, PcmCell, program_pulse, read_bit
from .pcm import PULSE_DT, PULSE_STEPS, V_PROG
from .xorfold import XorPlan, xor_fold

KCV_LABEL = b"POK-KCV"
KCV_LEN = 8
ENROLL_MAGIC = b"POKE"
ENROLL_VERSION = 0x01
PIPELINES = {"fe": 0x01, "xor": 0x02}
SOURCES = ("litho", "pcm", "generic-noisy")


def prf(key: BitString, message: bytes) -> bytes:
    """HMAC-SHA256 keyed by the MSB-first packed key bits."""
    return hmac.new(key.packed(), message, hashlib.sha256).digest()


def key_check_value(k: Union[EnrolledKey, BitString]) -> bytes:
    key = k.k if isinstance(k, EnrolledKey) else k
    return prf(key, KCV_LABEL)[:KCV_LEN]


def key_fingerprint(k: EnrolledKey) -> str:
    """Short public identifier of a key for logs (not the KCV, not the key)."""
    return hashlib.sha256(b"fingerprint" + k.k.to_bytes()).hexdigest()[:16]


def respond(k: EnrolledKey, c: Union[BitString, bytes]) -> BitString:
    """256-bit response ``HMAC-SHA256(k, c)``; bit-string challenges are packed MSB-first."""
    msg = c.packed() if isinstance(c, BitString) else bytes(c)
    return BitString.from_packed(prf(k.k, msg), 256)


@dataclass(frozen=True)
class PcmSourceParams:
    n_cells: int = 8
    v_prog: float = V_PROG
    duration: int = PULSE_STEPS
    dt: float = PULSE_DT
    nucleation_density: float = 0.01
    # relative voltage steps tried when a pulse leaves zero or two plugs
    retry_step: float = 0.1
    max_retries: int = 4
    material: MaterialParams = field(default_factory=MaterialParams)
    geometry: Geometry = field(default_factory=Geometry)


@dataclass(frozen=True)
class LithoSourceParams:
    rows: int = 16
    cols: int = 32
    L: float = 460.0
    W: float = 52.0
    p_void: float = 0.0
    surface: litho.YieldSurface = field(default_factory=litho.YieldSurface)


@dataclass(frozen=True)
class NoisySourceParams:
    n_bits: int = 512
    p1: float = 0.5
    p_err: float = 0.05


_DEFAULT_PARAMS = {"litho": LithoSourceParams, "pcm": PcmSourceParams,
                   "generic-noisy": NoisySourceParams}


class DeviceHandle:
    """One simulated device, fabricated lazily on the first read.

    Litho and PCM reads are deterministic. Generic-noisy reads flip each bit
    of a fixed reference string independently with probability ``p_err``,
    drawing the flips from a stream derived from the device seed (or from an
    explicit generator passed to :meth:`read`). Reads are serialized.
    """

    def __init__(self, kind: str, seed: int, params=None):
        if kind not in SOURCES:
            raise DomainError(f"unknown source kind {kind!r}")
        self.kind = kind
        self.seed = int(seed)
        make_rng(self.seed)
        self.params = params if params is not None else _DEFAULT_PARAMS[kind]()
        self._lock = threading.Lock()
        self._state = None
        self._noise = None

    @property
    def device_id(self) -> str:
        return f"{self.kind}:{self.seed}"

    def __repr__(self):
        return f"DeviceHandle({self.kind!r}, seed={self.seed})"

    def _fabricate(self):
        p = self.params
        if self.kind == "litho":
            return litho.fabricate_array(p.surface, p.rows, p.cols, p.L, p.W, seed=self.seed,
                                         p_void=p.p_void, device_id=self.device_id)
        if self.kind == "pcm":
            cell_seeds = make_rng(self.seed).integers(0, 2**63, size=p.n_cells)
            return [self._program(int(s)) for s in cell_seeds]
        self._noise = derive_rng(self.seed, 2)
        return random_bits(p.n_bits, p.p1, derive_rng(self.seed, 1))

    def _program(self, cell_seed: int) -> PcmCell:
        """Program-and-verify: step the pulse voltage down after an over-program, up after an under-program."""
        p = self.params
        cell = PcmCell.from_seed(cell_seed, p.material, p.geometry, p.nucleation_density)
        v = p.v_prog
        for _ in range(p.max_retries + 1):
            try:
                program_pulse(cell, v, p.duration, p.dt)
                return cell
            except OverProgramError:
                v *= 1.0 - p.retry_step
            except UnderProgramError:
                v *= 1.0 + p.retry_step
        raise EnrollError(f"{self.device_id}: cell seed {cell_seed} did not program")

    def fabricate(self):
        with self._lock:
            if self._state is None:
                self._state = self._fabricate()
            return self._state

    def read(self, noise_rng: Optional[np.random.Generator] = None, strict: bool = True) -> BitString:
        """One read-out of the device.

        With ``strict=False`` weak PCM cells contribute their bit anyway
        instead of raising :class:`WeakCellError`.
        """
        state = self.fabricate()
        with self._lock:
            if self.kind == "litho":
                return litho.read_bits(state)
            if self.kind == "pcm":
                bits = []
                for i, cell in enumerate(state):
                    try:
                        bits.append(read_bit(cell))
                    except WeakCellError as exc:
                        if strict:
                            raise WeakCellError(f"cell {i}: {exc}", exc.bit, exc.contrast, i) from exc
                        bits.append(exc.bit)
                return BitString(bits)
            rng = noise_rng if noise_rng is not None else self._noise
            return state ^ random_bits(len(state), self.params.p_err, rng)


@dataclass(frozen=True)
class PipelineParams:
    code: str = "rep3"
    # key length for the fe pipeline; None means 128 bits (or fewer for short reads)
    out_len: Optional[int] = None
    group_size: int = 4
    strided: bool = False
    # enrollment takes the bitwise majority of this many reads (odd)
    enroll_reads: int = 1

    def __post_init__(self):
        if self.enroll_reads < 1 or self.enroll_reads % 2 == 0:
            raise DomainError(f"enroll_reads must be odd and positive, got {self.enroll_reads}")


@dataclass(frozen=True)
class Enrollment:
    """Public enrollment record. Holds helper data or a fold plan, never the key."""

    device_id: str
    pipeline: str
    key_check: bytes
    helper: Optional[HelperData] = None
    plan: Optional[XorPlan] = None

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise DomainError(f"unknown pipeline {self.pipeline!r}")
        if len(self.key_check) != KCV_LEN:
            raise FormatError(f"key check must be {KCV_LEN} bytes")
        if (self.pipeline == "fe") != (self.helper is not None) or \
                (self.pipeline == "xor") != (self.plan is not None):
            raise FormatError(f"{self.pipeline} enrollment needs exactly its own payload")

    @property
    def read_len(self) -> int:
        return len(self.helper.h) if self.pipeline == "fe" else self.plan.input_len

    def to_bytes(self) -> bytes:
        dev = self.device_id.encode("utf-8")
        payload = self.helper.to_bytes() if self.pipeline == "fe" else self.plan.to_bytes()
        body = (ENROLL_MAGIC + bytes([ENROLL_VERSION, PIPELINES[self.pipeline]])
                + struct.pack(">H", len(dev)) + dev + self.key_check
                + struct.pack(">I", len(payload)) + payload)
        return body + struct.pack(">I", zlib.crc32(body))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Enrollment":
        if len(data) < 12 or data[:4] != ENROLL_MAGIC:
            raise FormatError("not an enrollment record")
        if data[4] != ENROLL_VERSION:
            raise FormatError(f"unsupported enrollment version {data[4]}")
        (crc,) = struct.unpack(">I", data[-4:])
        if crc != zlib.crc32(data[:-4]):
            raise FormatError("enrollment CRC mismatch")
        names = {v: k for k, v in PIPELINES.items()}
        if data[5] not in names:
            raise FormatError(f"unknown pipeline code {data[5]}")
        pipeline = names[data[5]]
        try:
            (dlen,) = struct.unpack_from(">H", data, 6)
            pos = 8 + dlen
            device_id = data[8:pos].decode("utf-8")
            kcv = data[pos:pos + KCV_LEN]
            pos += KCV_LEN
            (plen,) = struct.unpack_from(">I", data, pos)
            pos += 4
            payload = data[pos:pos + plen]
        except (struct.error, UnicodeDecodeError) as exc:
            raise FormatError("truncated enrollment record") from exc
        if pos + plen != len(data) - 4 or len(payload) != plen:
            raise FormatError("enrollment payload length mismatch")
        if pipeline == "fe":
            return cls(device_id, pipeline, kcv, helper=HelperData.from_bytes(payload))
        return cls(device_id, pipeline, kcv, plan=XorPlan.from_bytes(payload))


def _fe_geometry(code, n_read: int, out_len: Optional[int]):
    blocks = n_read // code.n
    if blocks == 0:
        raise LengthError(f"read of {n_read} bits is shorter than one {code.name} block")
    if out_len is None:
        out_len = min(128, blocks * code.k)
    return blocks * code.n, out_len


def enroll(device: DeviceHandle, pipeline: str = "xor", params: PipelineParams = PipelineParams(),
           rng: Optional[np.random.Generator] = None):
    """Read the device once and derive its key.

    Returns ``(Enrollment, EnrolledKey)``. With ``params.enroll_reads > 1``
    the enrolled read-out is the bitwise majority of that many reads, which
    keeps one noisy read from being frozen into the helper data. The fe pipeline draws the sketch
    offset and hash seed from ``rng`` and uses the longest prefix of the read
    that fills whole code blocks; trailing bits are ignored.
    """
    if pipeline not in PIPELINES:
        raise DomainError(f"unknown pipeline {pipeline!r}")
    try:
        reads = [device.read() for _ in range(params.enroll_reads)]
    except (WeakCellError, EnrollError) as exc:
        raise EnrollError(f"{device.device_id}: read failed: {exc}") from exc
    if len(reads) == 1:
        W = reads[0]
    else:
        votes = np.sum([r.bits for r in reads], axis=0)
        W = BitString((2 * votes > len(reads)).astype(np.uint8))
    if pipeline == "fe":
        if rng is None:
            raise ValueError("the fe pipeline needs an rng for x and s")
        code = get_code(params.code)
        used, out_len = _fe_geometry(code, len(W), params.out_len)
        helper, key = fe_gen(code, W[:used], out_len, rng)
        return Enrollment(device.device_id, "fe", key_check_value(key), helper=helper), key
    plan = XorPlan(params.group_size, len(W), params.strided)
    key = EnrolledKey(xor_fold(plan, W))
    return Enrollment(device.device_id, "xor", key_check_value(key), plan=plan), key


def reconstruct(device: DeviceHandle, enrollment: Enrollment,
                noise_rng: Optional[np.random.Generator] = None) -> EnrolledKey:
    """Re-read the device and rebuild its key; :class:`KeyMismatchError` if the KCV differs."""
    W = device.read(noise_rng=noise_rng, strict=False)
    if len(W) < enrollment.read_len:
        raise LengthError(f"device reads {len(W)} bits, enrollment needs {enrollment.read_len}")
    if enrollment.pipeline == "fe":
        key = fe_rep(None, W[:enrollment.read_len], enrollment.helper)
    else:
        key = EnrolledKey(xor_fold(enrollment.plan, W[:enrollment.plan.input_len]))
    if not hmac.compare_digest(key_check_value(key), enrollment.key_check):
        raise KeyMismatchError(f"key check failed for {enrollment.device_id} using {device.device_id}")
    return key
