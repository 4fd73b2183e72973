"""Lithography-limit line-cell arrays.

A two-contact line cell printed near the resolution limit either survives
pattern transfer (connected, read as 1) or does not (broken, read as 0).
The probability of survival is modeled as a logistic surface in the design
width with a threshold width that grows linearly with design length:

    p(L, W) = 1 / (1 + exp(-(W - W50(L)) / s)),  W50(L) = W50_ref + k * (L - L_ref)

The defaults put the 50 % point at L = 460 nm, W = 52 nm.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .bitcore import BitString, make_rng
from .errors import DomainError, FormatError


@dataclass(frozen=True)
class YieldSurface:
    w50_at_lref: float = 52.0
    lref: float = 460.0
    dw50_dl: float = 0.01
    spread: float = 2.0

    def __post_init__(self):
        if not self.spread > 0:
            raise DomainError(f"spread must be positive, got {self.spread}")
        if self.dw50_dl < 0:
            # a negative slope would make yield grow with length
            raise DomainError(f"dw50_dl must be non-negative, got {self.dw50_dl}")

    def w50(self, L):
        return self.w50_at_lref + self.dw50_dl * (np.asarray(L, dtype=float) - self.lref)


def yield_probability(surface: YieldSurface, L, W):
    """Probability that a cell of design length ``L`` and width ``W`` (nm) connects.

    Scalar inputs give a float, array inputs broadcast.
    """
    L_arr = np.asarray(L, dtype=float)
    W_arr = np.asarray(W, dtype=float)
    if np.any(L_arr <= 0) or np.any(W_arr <= 0):
        raise DomainError("design length and width must be positive")
    p = expit((W_arr - surface.w50(L_arr)) / surface.spread)
    return float(p) if p.ndim == 0 else p


@dataclass(frozen=True, eq=False)
class LithoArray:
    """A fabricated array; ``cells`` is a read-only boolean grid (True = connected)."""

    cells: np.ndarray
    L_design: float
    W_design: float
    device_id: str = ""
    seed: Optional[int] = None

    @property
    def shape(self):
        return self.cells.shape

    @property
    def n_cells(self) -> int:
        return int(self.cells.size)

    def connected_fraction(self) -> float:
        return float(self.cells.mean())


def fabricate_array(surface: YieldSurface, rows: int, cols: int, L: float, W: float,
                    seed: int, p_void: float = 0.0, device_id: str = "") -> LithoArray:
    """Sample the connectivity of a ``rows x cols`` array of identical cells.

    ``p_void`` is the chance that a connected cell later opens up through void
    formation during annealing. The void draws are made after the
    connectivity draws, so changing ``p_void`` never reshuffles connectivity.
    """
    if rows * cols < 1:
        raise DomainError("array must have at least one cell")
    if not 0.0 <= p_void <= 1.0:
        raise DomainError(f"p_void must be a probability, got {p_void}")
    p = yield_probability(surface, L, W)
    rng = make_rng(seed)
    cells = rng.random((rows, cols)) < p
    voids = rng.random((rows, cols)) < p_void
    cells &= ~voids
    cells.flags.writeable = False
    return LithoArray(cells=cells, L_design=float(L), W_design=float(W),
                      device_id=device_id or f"litho-{seed}", seed=seed)


def read_bits(array: LithoArray) -> BitString:
    """Row-major readout; connected cells read as 1."""
    return BitString(array.cells.ravel().astype(np.uint8))


@dataclass(frozen=True, eq=False)
class YieldMap:
    """Measured connected fraction per (W, L) design group.

    ``fractions[i, j]`` belongs to ``widths[i]`` and ``lengths[j]``.
    """

    widths: np.ndarray
    lengths: np.ndarray
    fractions: np.ndarray
    samples_per_group: int = 0
    probabilities: Optional[np.ndarray] = field(default=None, repr=False)

    def at(self, L: float, W: float) -> float:
        i = int(np.flatnonzero(np.isclose(self.widths, W))[0])
        j = int(np.flatnonzero(np.isclose(self.lengths, L))[0])
        return float(self.fractions[i, j])

    def to_csv(self, header_lines: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["W_nm\\L_nm"] + [_fmt_nm(L) for L in self.lengths])
        for Wv, row in zip(self.widths, self.fractions):
            w.writerow([_fmt_nm(Wv)] + [f"{x:.4f}" for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "YieldMap":
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        if len(rows) < 2:
            raise FormatError("yield map CSV needs a header and at least one row")
        try:
            lengths = np.array([float(x) for x in rows[0][1:]])
            widths = np.array([float(r[0]) for r in rows[1:]])
            fractions = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
        except ValueError as exc:
            raise FormatError(f"bad yield map CSV: {exc}") from exc
        return cls(widths=widths, lengths=lengths, fractions=fractions)


def _fmt_nm(x: float) -> str:
    return f"{x:g}"


def build_yield_map(surface: YieldSurface, widths: Sequence[float], lengths: Sequence[float],
                    seed: int, cells_per_group: int = 10, dies: int = 10) -> YieldMap:
    """Simulate the test-structure measurement behind a connectivity yield map.

    Every (W, L) group has ``cells_per_group`` cells on each of ``dies`` dies;
    the map entry is the connected fraction over all of them.
    """
    widths = np.asarray(widths, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    if widths.size == 0 or lengths.size == 0:
        raise DomainError("width and length ranges must be non-empty")
    n = cells_per_group * dies
    if n < 1:
        raise DomainError("need at least one sample per group")
    probs = yield_probability(surface, lengths[None, :], widths[:, None])
    probs = np.broadcast_to(probs, (widths.size, lengths.size))
    rng = make_rng(seed)
    draws = rng.random((widths.size, lengths.size, n)) < probs[..., None]
    fractions = draws.mean(axis=-1)
    return YieldMap(widths=widths, lengths=lengths, fractions=fractions,
                    samples_per_group=n, probabilities=np.array(probs))


def grid_range(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive arithmetic range, e.g. ``grid_range(40, 64, 2)``."""
    if step <= 0:
        raise DomainError("step must be positive")
    if stop < start:
        raise DomainError(f"empty range {start}..{stop}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)
