"""Three-contact PCM cell: electro-thermal programming and non-destructive read.

The cell is a 2-D grid of GST cells (row 0 at the top). One electrode spans
the middle of the top edge and two mirror-symmetric electrodes sit on the
bottom edge. A programming pulse drives current from the top contact to both
bottom contacts through a series load resistance. Resistivity falls with
temperature, so the better-conducting bottom path heats faster, draws more
current and melts first; the load resistance then starves the other path.
When the pulse ends the molten region quenches to amorphous and plugs one
bottom contact. Which one is decided by the grain map.

All quantities are in arbitrary, self-consistent units (grid spacing 1).
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, Optional, Sequence

import numpy as np
from scipy import ndimage

from ..bitcore import BitString
from ..errors import (DomainError, OverProgramError, UnderProgramError, WeakCellError)
from .grains import GrainMap, generate_grain_map
from .network import GridNetwork, GridSolution, TOL_KCL, harmonic_edge

LEFT, RIGHT = "left", "right"
V_READ = 0.1
# default programming pulse: source voltage, number of steps, step length
V_PROG = 5.6
PULSE_STEPS = 300
PULSE_DT = 2.0


class Phase(IntEnum):
    CRYSTALLINE = 0
    BOUNDARY = 1
    MOLTEN = 2
    AMORPHOUS = 3


@dataclass(frozen=True)
class MaterialParams:
    """Material and pulse-circuit parameters.

    Solid phases follow ``rho(T) = rho0 * exp(-alpha * (T - T0))``; molten
    cells have the fixed resistivity ``rho_molten``.
    """

    rho_crystalline: float = 1.0
    rho_boundary: float = 10.0
    rho_amorphous: float = 1000.0
    rho_molten: float = 0.1
    alpha_crystalline: float = 0.003
    alpha_boundary: float = 0.0065
    alpha_amorphous: float = 0.003
    t_ambient: float = 300.0
    t_melt: float = 900.0
    diffusivity: float = 0.1
    oxide_diffusivity: float = 0.02
    heat_capacity: float = 2e-4
    substrate_loss: float = 0.002
    series_resistance: float = 5.0
    contact_coupling: float = 0.25
    contrast_min: float = 10.0

    def __post_init__(self):
        for name in ("rho_crystalline", "rho_boundary", "rho_amorphous", "rho_molten",
                     "diffusivity", "oxide_diffusivity", "heat_capacity"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if not self.alpha_boundary > self.alpha_crystalline > 0:
            raise DomainError("need alpha_boundary > alpha_crystalline > 0 (negative TCR)")
        if self.t_melt <= self.t_ambient:
            raise DomainError("t_melt must exceed t_ambient")
        if not 0 < self.contact_coupling <= 1:
            raise DomainError("contact_coupling must lie in (0, 1]")
        if self.substrate_loss < 0 or self.series_resistance < 0:
            raise DomainError("substrate_loss and series_resistance must be non-negative")

    def resistivity(self, phase: np.ndarray, temperature: np.ndarray) -> np.ndarray:
        dT = np.asarray(temperature, dtype=float) - self.t_ambient
        rho0 = np.choose(phase, [self.rho_crystalline, self.rho_boundary, self.rho_molten,
                                 self.rho_amorphous])
        alpha = np.choose(phase, [self.alpha_crystalline, self.alpha_boundary, 0.0,
                                  self.alpha_amorphous])
        return rho0 * np.exp(-alpha * dT)

    def max_stable_dt(self) -> float:
        return 1.0 / (4.0 * max(self.diffusivity, self.oxide_diffusivity) + self.substrate_loss)


@dataclass(frozen=True)
class Geometry:
    """Cell outline and contact spans (half-open column ranges).

    GST fills rows ``[0, leg_row)`` across the full width. Below ``leg_row``
    only two legs above the bottom contacts are GST; the rest is oxide. The
    right contact and leg mirror the left ones. ``leg_row=None`` makes the
    whole rectangle GST.
    """

    rows: int = 32
    cols: int = 64
    top: tuple = (16, 48)
    left: tuple = (6, 14)
    leg_row: Optional[int] = 12

    def __post_init__(self):
        if self.rows < 3 or self.cols < 4:
            raise DomainError("grid too small")
        for a, b in (self.top, self.left):
            if not 0 <= a < b <= self.cols:
                raise DomainError(f"bad contact span {(a, b)}")
        if self.left[1] > self.cols - self.left[1]:
            raise DomainError("bottom contacts overlap")
        if self.leg_row is not None and not 1 <= self.leg_row < self.rows:
            raise DomainError(f"leg_row must lie in [1, {self.rows})")

    @property
    def right(self) -> tuple:
        return (self.cols - self.left[1], self.cols - self.left[0])

    def masks(self):
        c = np.arange(self.cols)

        def span(s):
            return (c >= s[0]) & (c < s[1])

        return span(self.top), span(self.left), span(self.right)

    def active(self) -> np.ndarray:
        """True for GST cells, False for oxide."""
        a = np.ones((self.rows, self.cols), dtype=bool)
        if self.leg_row is not None:
            _, l, r = self.masks()
            a[self.leg_row:] = l | r
        return a

    def network(self, tol: float = TOL_KCL) -> GridNetwork:
        t, l, r = self.masks()
        return GridNetwork(self.rows, self.cols, t, l, r, tol=tol, active=self.active())

    def half_masks(self):
        """Boolean grids for the left and right halves (used to attribute melting)."""
        c = np.arange(self.cols)[None, :].repeat(self.rows, 0)
        mid = self.cols / 2.0
        return (c + 0.5) < mid, (c + 0.5) > mid


@dataclass
class TransientTrace:
    t: List[float] = field(default_factory=list)
    i_left: List[float] = field(default_factory=list)
    i_right: List[float] = field(default_factory=list)
    molten_count: List[int] = field(default_factory=list)
    i_top: List[float] = field(default_factory=list)
    residual: List[float] = field(default_factory=list)

    def append(self, t, sol: GridSolution, molten: int):
        self.t.append(float(t))
        self.i_left.append(sol.i_left)
        self.i_right.append(sol.i_right)
        self.i_top.append(sol.i_top)
        self.residual.append(sol.residual)
        self.molten_count.append(int(molten))

    def __len__(self):
        return len(self.t)

    def to_csv(self, header_lines: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_s", "I_left", "I_right", "molten_count"])
        for row in zip(self.t, self.i_left, self.i_right, self.molten_count):
            w.writerow([repr(row[0]), repr(row[1]), repr(row[2]), row[3]])
        return buf.getvalue()


@dataclass
class ProgramResult:
    plugged_side: str
    bit: int
    resistance_contrast: float
    trace: TransientTrace
    tie_broken: bool = False


class PcmCell:
    """Mutable simulation state of one three-contact cell (single owner)."""

    def __init__(self, grain_map: GrainMap, params: MaterialParams = MaterialParams(),
                 geometry: Optional[Geometry] = None):
        if geometry is None:
            geometry = Geometry(rows=grain_map.shape[0], cols=grain_map.shape[1])
        if grain_map.shape != (geometry.rows, geometry.cols):
            raise DomainError(f"grain map {grain_map.shape} does not match geometry "
                              f"{(geometry.rows, geometry.cols)}")
        self.grain_map = grain_map
        self.params = params
        self.geometry = geometry
        self.network = geometry.network()
        self.active = geometry.active()
        self._faces = _thermal_faces(self)
        self.phase = np.where(grain_map.boundary, Phase.BOUNDARY, Phase.CRYSTALLINE).astype(np.int8)
        self.temperature = np.full(grain_map.shape, params.t_ambient)
        self.plugged_side: Optional[str] = None

    @classmethod
    def from_seed(cls, seed: int, params: MaterialParams = MaterialParams(),
                  geometry: Geometry = Geometry(), nucleation_density: float = 0.01) -> "PcmCell":
        gm = generate_grain_map(geometry.rows, geometry.cols, nucleation_density, seed)
        return cls(gm, params, geometry)

    @property
    def programmed(self) -> bool:
        return self.plugged_side is not None

    def mirrored(self) -> "PcmCell":
        """Fresh cell built on the left-right reflected grain map."""
        return PcmCell(self.grain_map.mirrored(), self.params, self.geometry)

    def conductivity(self) -> np.ndarray:
        return 1.0 / self.params.resistivity(self.phase, self.temperature)

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.grain_map.ids, self.phase, self.temperature):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(str(self.plugged_side).encode())
        return h.hexdigest()


def solve_potentials(cell: PcmCell, v_top: float) -> GridSolution:
    """Potentials and contact currents with the top at ``v_top`` and both bottoms grounded."""
    return cell.network.solve(cell.conductivity(), v_top)


def _thermal_faces(cell: PcmCell):
    p = cell.params
    D = np.where(cell.active, p.diffusivity, p.oxide_diffusivity)
    return harmonic_edge(D[:, :-1], D[:, 1:]), harmonic_edge(D[:-1, :], D[1:, :])


def _thermal_step(cell: PcmCell, power: np.ndarray, dt: float) -> None:
    """Explicit update.

    Face diffusivities are harmonic means of the two cells. Contacts act as
    ghost cells pinned at ambient behind an interface of relative conductance
    ``contact_coupling``; the outer walls are adiabatic.
    """
    p = cell.params
    T = cell.temperature
    t0 = p.t_ambient
    top, left, right = cell.geometry.masks()
    kx, ky = cell._faces
    fx = kx * (T[:, 1:] - T[:, :-1])
    fy = ky * (T[1:, :] - T[:-1, :])
    div = np.zeros_like(T)
    div[:, :-1] += fx
    div[:, 1:] -= fx
    div[:-1, :] += fy
    div[1:, :] -= fy
    k = p.contact_coupling * p.diffusivity
    div[0] += np.where(top, k * (t0 - T[0]), 0.0)
    div[-1] += np.where(left | right, k * (t0 - T[-1]), 0.0)
    T += dt * (div + power / p.heat_capacity - p.substrate_loss * (T - t0))
    np.maximum(T, t0, out=T)


def blocked_contacts(geometry: Geometry, conducting: np.ndarray):
    """Whether each bottom contact is cut off from the top contact.

    ``conducting`` marks cells that still conduct (GST that is not molten or
    amorphous); connectivity is 4-neighbour.
    """
    labels, _ = ndimage.label(conducting)
    top, left, right = geometry.masks()
    reach = set(np.unique(labels[0, top & conducting[0]])) - {0}

    def cut(mask):
        seen = set(np.unique(labels[-1, mask & conducting[-1]])) - {0}
        return not (seen & reach)

    return cut(left), cut(right)


def _is_mirror_symmetric(cell: PcmCell) -> bool:
    s = np.where(cell.active, cell.conductivity(), 0.0)
    return bool(np.array_equal(s, s[:, ::-1]))


def program_pulse(cell: PcmCell, v_prog: float = V_PROG, duration: int = PULSE_STEPS, dt: float = PULSE_DT,
                  rise_steps: int = 0, tie_epsilon: float = 1e-2) -> ProgramResult:
    """Apply one programming pulse of ``duration`` steps and quench.

    The source ``v_prog`` drives the top contact through
    ``params.series_resistance``. Each step solves the network, deposits Joule
    heat, diffuses temperature and latches cells at or above ``t_melt`` as
    molten. At the end all molten cells become amorphous and the temperature
    returns to ambient.

    An exactly mirror-symmetric cell cannot decide by itself; the left half
    then gets a relative conductivity advantage of ``tie_epsilon`` so the
    runaway resolves to the left contact.

    Raises :class:`OverProgramError` if molten cells end up on both sides and
    :class:`UnderProgramError` if nothing melted; the cell is left untouched
    in both cases.
    """
    p = cell.params
    if cell.programmed:
        raise DomainError("cell is already programmed")
    if v_prog <= V_READ:
        raise DomainError(f"v_prog must exceed the read voltage {V_READ}")
    if duration < 1:
        raise DomainError("duration must be at least one step")
    if not 0 < dt <= p.max_stable_dt():
        raise DomainError(f"dt={dt} violates the explicit stability limit {p.max_stable_dt():.4g}")

    saved_phase = cell.phase.copy()
    saved_T = cell.temperature.copy()
    left_half, _ = cell.geometry.half_masks()
    tie = _is_mirror_symmetric(cell)
    bias = np.where(left_half, 1.0 + tie_epsilon, 1.0) if tie else None

    trace = TransientTrace()
    molten = cell.phase == Phase.MOLTEN
    for step in range(duration):
        sigma = cell.conductivity()
        if bias is not None:
            sigma = sigma * bias
        unit = cell.network.solve(sigma, 1.0)
        # linear network: scale the unit solve to the load-line operating point
        v_src = v_prog * min(1.0, (step + 1) / rise_steps) if rise_steps else v_prog
        v_top = v_src / (1.0 + p.series_resistance * unit.i_top)
        sol = GridSolution(potentials=unit.potentials * v_top, v_top=v_top,
                           i_top=unit.i_top * v_top, i_left=unit.i_left * v_top,
                           i_right=unit.i_right * v_top, residual=unit.residual,
                           power=unit.power * v_top ** 2)
        trace.append(step * dt, sol, int(molten.sum()))
        _thermal_step(cell, sol.power, dt)
        newly = (cell.temperature >= p.t_melt) & cell.active & ~molten
        if newly.any():
            molten |= newly
            cell.phase[newly] = Phase.MOLTEN

    blocked_left, blocked_right = blocked_contacts(cell.geometry, cell.active & ~molten)
    if blocked_left == blocked_right:
        n = int(molten.sum())
        cell.phase[:] = saved_phase
        cell.temperature[:] = saved_T
        if blocked_left:
            raise OverProgramError(f"both bottom paths blocked ({n} molten cells); lower v_prog or duration")
        if n:
            raise UnderProgramError(f"{n} cells melted but no contact was cut off; raise v_prog or duration")
        raise UnderProgramError("no cell reached the melting point; raise v_prog or duration")

    # melt-quench
    cell.phase[molten] = Phase.AMORPHOUS
    cell.temperature[:] = p.t_ambient
    side = LEFT if blocked_left else RIGHT
    cell.plugged_side = side
    read = solve_potentials(cell, V_READ)
    return ProgramResult(plugged_side=side, bit=0 if side == LEFT else 1,
                         resistance_contrast=_contrast(read), trace=trace, tie_broken=tie)


def _contrast(sol: GridSolution) -> float:
    lo, hi = sorted((abs(sol.i_left), abs(sol.i_right)))
    return float(hi / lo) if lo > 0 else float("inf")


def read_bit(cell: PcmCell, v_read: float = V_READ, settle_steps: int = 20, dt: float = 1.0,
             check_contrast: bool = True) -> int:
    """Non-destructive read: 0 when the left path draws less current, else 1.

    The read's Joule heating is simulated on a scratch copy of the temperature
    field for ``settle_steps`` steps to confirm nothing approaches melting;
    the cell's own state is never modified.
    """
    if not cell.programmed:
        raise DomainError("cell has not been programmed")
    p = cell.params
    sol = solve_potentials(cell, v_read)
    scratch = PcmCell.__new__(PcmCell)
    scratch.__dict__.update(cell.__dict__)
    scratch.temperature = cell.temperature.copy()
    for _ in range(settle_steps):
        _thermal_step(scratch, sol.power, min(dt, p.max_stable_dt()))
    if scratch.temperature.max() >= p.t_melt:
        raise DomainError(f"read voltage {v_read} V would melt the cell")
    bit = 0 if sol.i_left < sol.i_right else 1
    contrast = _contrast(sol)
    if check_contrast and contrast < p.contrast_min:
        raise WeakCellError(f"read contrast {contrast:.3g} below {p.contrast_min}", bit, contrast)
    return bit


def read_word(cells: Sequence[PcmCell], v_read: float = V_READ) -> BitString:
    bits = []
    for i, c in enumerate(cells):
        try:
            bits.append(read_bit(c, v_read))
        except WeakCellError as exc:
            raise WeakCellError(f"cell {i}: {exc}", exc.bit, exc.contrast, index=i) from exc
    return BitString(bits)
