"""Reliability, uniqueness and randomness statistics over device populations."""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .bitcore import BitString
from .errors import LengthError, SampleSizeError

Z_MCV = 2.576
Z_PASS = 3.29
MIN_MCV_BITS = 1000
MIN_TEST_BITS = 100


def _matrix(strings: Sequence[BitString], minimum: int, what: str) -> np.ndarray:
    if len(strings) < minimum:
        raise SampleSizeError(f"need at least {minimum} {what}, got {len(strings)}")
    lengths = {len(s) for s in strings}
    if len(lengths) != 1:
        raise LengthError(f"{what} have different lengths: {sorted(lengths)}")
    if lengths == {0}:
        raise LengthError(f"{what} are empty")
    return np.stack([s.bits for s in strings]).astype(np.float64)


def pairwise_distances(strings: Sequence[BitString]) -> np.ndarray:
    """Upper-triangle fractional Hamming distances, one entry per unordered pair."""
    X = _matrix(strings, 2, "bit strings")
    d = X @ (1.0 - X).T
    d = d + d.T
    iu = np.triu_indices(len(strings), k=1)
    return d[iu] / X.shape[1]


def intra_distance(reads: Sequence[BitString]) -> float:
    """Mean pairwise fractional distance between reads of one device."""
    return float(pairwise_distances(reads).mean())


def inter_distance(devices: Sequence[BitString]) -> float:
    """Mean pairwise fractional distance between different devices."""
    return float(pairwise_distances(devices).mean())


def bias_vector(devices: Sequence[BitString]) -> np.ndarray:
    """Fraction of devices with a 1 at each bit position."""
    return _matrix(devices, 1, "bit strings").mean(axis=0)


def mcv_min_entropy(bits: BitString) -> float:
    """Most-common-value min-entropy estimate per bit with a 99% upper bound on p."""
    n = len(bits)
    if n < MIN_MCV_BITS:
        raise SampleSizeError(f"need at least {MIN_MCV_BITS} bits, got {n}")
    ones = bits.popcount()
    p = max(ones, n - ones) / n
    pu = min(1.0, p + Z_MCV * math.sqrt(p * (1.0 - p) / n))
    return float(-math.log2(pu)) + 0.0


@dataclass(frozen=True)
class RandomnessTests:
    monobit_z: float
    runs_z: float
    monobit_pass: bool
    runs_pass: bool


def monobit_runs(bits: BitString) -> RandomnessTests:
    """Monobit z-score and a runs z-score conditional on the observed counts.

    The runs statistic uses the exact conditional mean and variance of the
    number of runs given ``n0`` zeros and ``n1`` ones. A constant string has
    no variance; its runs statistic is reported as infinite and fails.
    """
    n = len(bits)
    if n < MIN_TEST_BITS:
        raise SampleSizeError(f"need at least {MIN_TEST_BITS} bits, got {n}")
    b = bits.bits
    n1 = int(b.sum())
    n0 = n - n1
    z_mono = (2 * n1 - n) / math.sqrt(n)
    runs = 1 + int(np.count_nonzero(b[1:] != b[:-1]))
    if n0 == 0 or n1 == 0:
        z_runs = math.inf
    else:
        two = 2.0 * n0 * n1
        mean = two / n + 1.0
        var = two * (two - n) / (n * n * (n - 1.0))
        z_runs = (runs - mean) / math.sqrt(var)
    return RandomnessTests(z_mono, z_runs, abs(z_mono) <= Z_PASS, abs(z_runs) <= Z_PASS)


@dataclass
class PokReport:
    """Population summary. Distances and bias are fractions in [0, 1].

    ``mcv_min_entropy`` and the randomness statistics are computed on the
    concatenation of each device's first read and are ``None`` when that
    stream is too short for the estimator.
    """

    n_devices: int
    n_reads: int
    n_bits: int
    mean_intra: float
    max_intra: float
    mean_inter: float
    bias: List[float] = field(default_factory=list)
    mcv_min_entropy: Optional[float] = None
    monobit_z: Optional[float] = None
    monobit_pass: Optional[bool] = None
    runs_z: Optional[float] = None
    runs_pass: Optional[bool] = None

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_json(self, provenance: Optional[Dict] = None) -> str:
        d = {"provenance": provenance} if provenance is not None else {}
        d.update(self.to_dict())
        if d.get("runs_z") is not None and math.isinf(d["runs_z"]):
            d["runs_z"] = "inf" if d["runs_z"] > 0 else "-inf"
        return json.dumps(d, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PokReport":
        d = json.loads(text)
        d.pop("provenance", None)
        if isinstance(d.get("runs_z"), str):
            d["runs_z"] = float(d["runs_z"])
        return cls(**d)

    def bias_csv(self, header_lines: Sequence[str] = ()) -> str:
        out = io.StringIO()
        for line in header_lines:
            out.write(f"# {line}\n")
        out.write("bit,p_one\n")
        for i, p in enumerate(self.bias):
            out.write(f"{i},{p:.6f}\n")
        return out.getvalue()


def build_report(reads: Sequence[Sequence[BitString]]) -> PokReport:
    """Summarize ``reads[d][r]``: read ``r`` of device ``d`` (at least 2 devices, 2 reads each)."""
    if len(reads) < 2:
        raise SampleSizeError("need at least 2 devices")
    counts = {len(r) for r in reads}
    if len(counts) != 1 or min(counts) < 2:
        raise SampleSizeError("every device needs the same number (>= 2) of reads")
    intra = np.array([intra_distance(r) for r in reads])
    firsts = [r[0] for r in reads]
    bias = bias_vector(firsts)
    report = PokReport(n_devices=len(reads), n_reads=counts.pop(), n_bits=len(firsts[0]),
                       mean_intra=float(intra.mean()), max_intra=float(intra.max()),
                       mean_inter=inter_distance(firsts), bias=[float(p) for p in bias])
    stream = BitString(np.concatenate([f.bits for f in firsts]))
    if len(stream) >= MIN_MCV_BITS:
        report.mcv_min_entropy = mcv_min_entropy(stream)
    if len(stream) >= MIN_TEST_BITS:
        t = monobit_runs(stream)
        report.monobit_z, report.monobit_pass = float(t.monobit_z), bool(t.monobit_pass)
        report.runs_z, report.runs_pass = float(t.runs_z), bool(t.runs_pass)
    return report
