"""Resistor-network solves: conductance-weighted graph Laplacian with Dirichlet nodes.

Two entry points:

* :func:`solve_network` works on an arbitrary edge list and is the reference
  path used for small hand-checkable circuits.
* :class:`GridNetwork` is the 4-neighbour rectangular grid used by the PCM
  cell. Nodes are ordered column-major so the reduced system is banded with
  half-bandwidth ``rows``, and it is factorized with banded Cholesky.

Both report the relative KCL residual ``||A v - b|| / ||b||`` of the reduced
system and raise :class:`~pokforge.errors.SolverError` when it exceeds the
tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import DomainError, SolverError

TOL_KCL = 1e-8


def laplacian(n_nodes: int, edges, conductances) -> sp.csr_matrix:
    """Weighted graph Laplacian ``L = D - W`` for an undirected edge list."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    g = np.asarray(conductances, dtype=float)
    if g.shape[0] != edges.shape[0]:
        raise DomainError("one conductance per edge required")
    if np.any(~np.isfinite(g)) or np.any(g <= 0):
        raise DomainError("conductances must be finite and positive")
    i, j = edges[:, 0], edges[:, 1]
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    vals = np.concatenate([-g, -g, g, g])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()


@dataclass
class NetworkSolution:
    potentials: np.ndarray
    # net current injected into the network at each fixed node
    injected: dict
    residual: float
    iterations: int = 0


def solve_network(n_nodes: int, edges, conductances, fixed: Mapping[int, float],
                  method: str = "direct", tol: float = TOL_KCL) -> NetworkSolution:
    """Node potentials of a resistor network with some node voltages held fixed.

    ``method`` is ``"direct"`` (sparse LU with iterative refinement) or ``"cg"`` (conjugate gradient,
    at most ``10 * n_free`` iterations). Every free node must be connected to
    at least one fixed node, otherwise the reduced system is singular.
    """
    if not fixed:
        raise DomainError("at least one Dirichlet node is required")
    L = laplacian(n_nodes, edges, conductances)
    fixed_idx = np.array(sorted(fixed), dtype=np.int64)
    fixed_val = np.array([fixed[k] for k in fixed_idx], dtype=float)
    free = np.setdiff1d(np.arange(n_nodes), fixed_idx)

    v = np.zeros(n_nodes)
    v[fixed_idx] = fixed_val
    iterations = 0
    residual = 0.0
    if free.size:
        A = L[free][:, free].tocsc()
        b = -(L[free][:, fixed_idx] @ fixed_val)
        bnorm = np.linalg.norm(b)
        if method == "direct":
            lu = spla.splu(A)
            x = lu.solve(b)
            # two rounds of iterative refinement recover accuracy lost to wide conductance ranges
            for _ in range(2):
                x = x + lu.solve(b - A @ x)
        elif method == "cg":
            counter = {"n": 0}

            def _count(_):
                counter["n"] += 1

            # restart on the true residual, since CG's recurrence residual can drift from it
            x = np.zeros(free.size)
            budget = 10 * free.size
            while counter["n"] < budget:
                r = b - A @ x
                if np.linalg.norm(r) <= tol * bnorm:
                    break
                dx, _ = spla.cg(A, r, rtol=tol * bnorm / np.linalg.norm(r), atol=0.0,
                                maxiter=budget - counter["n"], callback=_count)
                x = x + dx
            iterations = counter["n"]
        else:
            raise ValueError(f"unknown method {method!r}")
        if bnorm > 0:
            residual = float(np.linalg.norm(A @ x - b) / bnorm)
        else:
            residual = float(np.linalg.norm(A @ x))
        if not np.isfinite(residual) or residual > tol:
            raise SolverError(f"KCL residual {residual:.3e} exceeds {tol:.1e}", residual=residual)
        v[free] = x
    net = L @ v
    injected = {int(k): float(net[k]) for k in fixed_idx}
    return NetworkSolution(potentials=v, injected=injected, residual=residual, iterations=iterations)


def harmonic_edge(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Series conductance of two unit half-cells."""
    return 2.0 * a * b / (a + b)


@dataclass
class GridSolution:
    potentials: np.ndarray      # (rows, cols)
    v_top: float
    i_top: float
    i_left: float
    i_right: float
    residual: float
    # Joule power dissipated in each cell, (rows, cols)
    power: np.ndarray


class GridNetwork:
    """Rectangular 4-neighbour resistor grid with three edge contacts.

    Each cell is a node at the centre of a unit square with conductivity
    ``sigma``. Neighbouring nodes are joined by two half-cells in series.
    Cells outside the optional ``active`` mask are insulator: they carry no
    current and their potential is reported as 0.
    Contact cells connect to their electrode through one half-cell
    (conductance ``2 * sigma``). The top electrode sits on row 0, the two
    bottom electrodes on the last row; contacts are given as boolean masks
    over columns.
    """

    def __init__(self, rows: int, cols: int, top_cols: np.ndarray,
                 left_cols: np.ndarray, right_cols: np.ndarray, tol: float = TOL_KCL,
                 active: np.ndarray = None):
        self.rows, self.cols = rows, cols
        if active is None:
            active = np.ones((rows, cols), dtype=bool)
        self.active = np.asarray(active, dtype=bool)
        self.top_cols = np.asarray(top_cols, dtype=bool)
        self.left_cols = np.asarray(left_cols, dtype=bool)
        self.right_cols = np.asarray(right_cols, dtype=bool)
        if np.any(self.left_cols & self.right_cols):
            raise DomainError("bottom contacts overlap")
        if not (self.top_cols.any() and self.left_cols.any() and self.right_cols.any()):
            raise DomainError("every contact needs at least one cell")
        if not (self.active[0, self.top_cols].all() and self.active[-1, self.left_cols].all()
                and self.active[-1, self.right_cols].all()):
            raise DomainError("contacts must touch active cells only")
        self.tol = tol

    def conductances(self, sigma: np.ndarray):
        a = self.active
        gx = np.where(a[:, :-1] & a[:, 1:], harmonic_edge(sigma[:, :-1], sigma[:, 1:]), 0.0)
        gy = np.where(a[:-1, :] & a[1:, :], harmonic_edge(sigma[:-1, :], sigma[1:, :]), 0.0)
        gt = np.where(self.top_cols, 2.0 * sigma[0], 0.0)
        gl = np.where(self.left_cols, 2.0 * sigma[-1], 0.0)
        gr = np.where(self.right_cols, 2.0 * sigma[-1], 0.0)
        return gx, gy, gt, gl, gr

    def _diagonal(self, gx, gy, gt, gl, gr):
        d = np.zeros((self.rows, self.cols))
        d[:, :-1] += gx
        d[:, 1:] += gx
        d[:-1, :] += gy
        d[1:, :] += gy
        d[0] += gt
        d[-1] += gl + gr
        # insulator nodes decouple into identity rows with zero right-hand side
        d[~self.active] = 1.0
        return d

    def apply(self, v: np.ndarray, gx, gy, d) -> np.ndarray:
        """Matrix-vector product of the reduced system on a (rows, cols) field."""
        out = d * v
        out[:, :-1] -= gx * v[:, 1:]
        out[:, 1:] -= gx * v[:, :-1]
        out[:-1, :] -= gy * v[1:, :]
        out[1:, :] -= gy * v[:-1, :]
        return out

    def solve(self, sigma: np.ndarray, v_top: float) -> GridSolution:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != (self.rows, self.cols):
            raise DomainError(f"sigma shape {sigma.shape} != {(self.rows, self.cols)}")
        sigma = np.where(self.active, sigma, 1.0)
        if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
            raise DomainError("conductivities must be finite and positive")
        R, C = self.rows, self.cols
        gx, gy, gt, gl, gr = self.conductances(sigma)
        d = self._diagonal(gx, gy, gt, gl, gr)
        b = np.zeros((R, C))
        b[0] += gt * v_top

        # lower banded storage, column-major node index k = c * R + r
        ab = np.zeros((R + 1, R * C))
        ab[0] = d.T.ravel()
        sub = np.zeros((R, C))
        sub[:-1, :] = -gy            # A[(r+1, c), (r, c)]
        ab[1] = sub.T.ravel()
        far = np.zeros((R, C))
        far[:, :-1] = -gx            # A[(r, c+1), (r, c)]
        ab[R] = far.T.ravel()
        try:
            x = scipy.linalg.solveh_banded(ab, b.T.ravel(), lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
        v = x.reshape(C, R).T

        bnorm = np.linalg.norm(b)
        r = self.apply(v, gx, gy, d) - b
        residual = float(np.linalg.norm(r) / bnorm) if bnorm > 0 else float(np.linalg.norm(r))
        if not np.isfinite(residual) or residual > self.tol:
            raise SolverError(f"KCL residual {residual:.3e} exceeds {self.tol:.1e}", residual=residual)

        i_top = float(np.sum(gt * (v_top - v[0])))
        i_left = float(np.sum(gl * v[-1]))
        i_right = float(np.sum(gr * v[-1]))

        # each internal edge splits its dissipation between its two cells;
        # contact half-cells dissipate entirely in the contact cell
        px = gx * (v[:, 1:] - v[:, :-1]) ** 2
        py = gy * (v[1:, :] - v[:-1, :]) ** 2
        power = np.zeros((R, C))
        power[:, :-1] += 0.5 * px
        power[:, 1:] += 0.5 * px
        power[:-1, :] += 0.5 * py
        power[1:, :] += 0.5 * py
        power[0] += gt * (v_top - v[0]) ** 2
        power[-1] += (gl + gr) * v[-1] ** 2
        return GridSolution(potentials=v, v_top=float(v_top), i_top=i_top, i_left=i_left,
                            i_right=i_right, residual=residual, power=power)

    def edge_list(self, sigma: np.ndarray):
        """Equivalent generic network: grid nodes, then top, left and right electrodes.

        Used to cross-check the banded path against :func:`solve_network`.
        """
        R, C = self.rows, self.cols
        idx = np.arange(R * C).reshape(R, C)
        top, left, right = R * C, R * C + 1, R * C + 2
        gx, gy, gt, gl, gr = self.conductances(sigma)
        edges = [np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], 1),
                 np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], 1)]
        g = [gx.ravel(), gy.ravel()]
        for mask, gvec, node, row in ((self.top_cols, gt, top, 0), (self.left_cols, gl, left, R - 1),
                                      (self.right_cols, gr, right, R - 1)):
            cols = np.flatnonzero(mask)
            edges.append(np.stack([idx[row, cols], np.full(cols.size, node)], 1))
            g.append(gvec[cols])
        edges, g = np.concatenate(edges), np.concatenate(g)
        keep = g > 0
        # insulator nodes get a unit link to a grounded electrode so the reduced
        # system stays nonsingular; they sit at 0 V and carry no current
        iso = idx[~self.active]
        edges = np.concatenate([edges[keep], np.stack([iso, np.full(iso.size, right)], 1)])
        g = np.concatenate([g[keep], np.ones(iso.size)])
        return R * C + 3, edges, g, (top, left, right)
