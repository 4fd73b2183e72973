"""Polycrystalline grain maps from Poisson nucleation and nearest-nucleus growth."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..bitcore import make_rng
from ..errors import DomainError

_MAX_RETRIES = 64


def boundary_mask(ids: np.ndarray) -> np.ndarray:
    """True where any 4-neighbour belongs to a different grain."""
    m = np.zeros(ids.shape, dtype=bool)
    dx = ids[:, 1:] != ids[:, :-1]
    dy = ids[1:, :] != ids[:-1, :]
    m[:, 1:] |= dx
    m[:, :-1] |= dx
    m[1:, :] |= dy
    m[:-1, :] |= dy
    return m


@dataclass(frozen=True, eq=False)
class GrainMap:
    """Grain ids per cell plus the nuclei they grew from.

    ``nuclei`` holds ``(x, y)`` positions in cell units (cell ``(r, c)`` has
    its centre at ``(c + 0.5, r + 0.5)``). Grain ``g`` grew from nucleus
    ``grain_nucleus[g]``; nuclei that captured no cell own no grain.
    """

    ids: np.ndarray
    nuclei: np.ndarray
    grain_nucleus: np.ndarray
    seed: Optional[int] = None

    @property
    def shape(self):
        return self.ids.shape

    @property
    def n_grains(self) -> int:
        return int(self.grain_nucleus.size)

    @property
    def boundary(self) -> np.ndarray:
        return boundary_mask(self.ids)

    def mirrored(self) -> "GrainMap":
        """Left-right reflection of the map and its nuclei."""
        cols = self.ids.shape[1]
        nuclei = self.nuclei.copy()
        nuclei[:, 0] = cols - nuclei[:, 0]
        return GrainMap(ids=_readonly(self.ids[:, ::-1]), nuclei=_readonly(nuclei),
                        grain_nucleus=self.grain_nucleus, seed=self.seed)

    def to_pgm(self) -> str:
        """Plain (P2) PGM text of the grain ids, for inspection."""
        rows, cols = self.ids.shape
        maxval = max(int(self.ids.max()), 1)
        lines = ["P2", f"{cols} {rows}", str(maxval)]
        lines += [" ".join(str(int(v)) for v in row) for row in self.ids]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_nuclei(cls, rows: int, cols: int, nuclei, seed: Optional[int] = None) -> "GrainMap":
        """Tessellate the grid around given nuclei (ties go to the lower index)."""
        nuclei = np.asarray(nuclei, dtype=float).reshape(-1, 2)
        if nuclei.shape[0] < 1:
            raise DomainError("need at least one nucleus")
        owner = nearest_nucleus(rows, cols, nuclei)
        used, ids = np.unique(owner, return_inverse=True)
        return cls(ids=_readonly(ids.reshape(rows, cols)), nuclei=_readonly(nuclei),
                   grain_nucleus=_readonly(used), seed=seed)

    @classmethod
    def uniform(cls, rows: int, cols: int) -> "GrainMap":
        """A single grain covering the whole grid (no boundaries)."""
        return cls.from_nuclei(rows, cols, [(cols / 2.0, rows / 2.0)])


def nearest_nucleus(rows: int, cols: int, nuclei: np.ndarray) -> np.ndarray:
    """Index of the nearest nucleus for every cell centre, shape ``(rows, cols)``."""
    yy, xx = np.mgrid[0:rows, 0:cols]
    cx = (xx + 0.5).ravel()[:, None]
    cy = (yy + 0.5).ravel()[:, None]
    d2 = (cx - nuclei[None, :, 0]) ** 2 + (cy - nuclei[None, :, 1]) ** 2
    # argmin returns the first minimum, i.e. the lowest nucleus index on ties
    return np.argmin(d2, axis=1).reshape(rows, cols)


def generate_grain_map(rows: int, cols: int, nucleation_density: float, seed: int) -> GrainMap:
    """Poisson number of nuclei (mean ``density * rows * cols``) at uniform positions.

    Draws with fewer than two nuclei are redrawn; after a bounded number of
    retries the count is forced to two so the call always terminates.
    """
    if rows < 8 or cols < 8:
        raise DomainError("grain maps need at least 8 x 8 cells")
    if not 0.0 < nucleation_density < 1.0:
        raise DomainError(f"nucleation density must lie in (0, 1), got {nucleation_density}")
    rng = make_rng(seed)
    mean = nucleation_density * rows * cols
    count = 0
    for _ in range(_MAX_RETRIES):
        count = int(rng.poisson(mean))
        if count >= 2:
            break
    count = max(count, 2)
    nuclei = np.column_stack([rng.uniform(0.0, cols, count), rng.uniform(0.0, rows, count)])
    return GrainMap.from_nuclei(rows, cols, nuclei, seed=seed)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a
