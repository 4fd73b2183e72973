import numpy as np
import pytest

from pokforge.pcm import PcmCell, program_pulse


def dense_dirichlet_solve(n, edges, g, fixed):
    """Reference solve: build the full Laplacian by hand and eliminate with numpy."""
    L = np.zeros((n, n))
    for (i, j), gij in zip(edges, g):
        L[i, i] += gij
        L[j, j] += gij
        L[i, j] -= gij
        L[j, i] -= gij
    fixed_idx = sorted(fixed)
    free = [k for k in range(n) if k not in fixed]
    vf = np.array([fixed[k] for k in fixed_idx], dtype=float)
    v = np.zeros(n)
    v[fixed_idx] = vf
    if free:
        A = L[np.ix_(free, free)]
        b = -L[np.ix_(free, fixed_idx)] @ vf
        v[free] = np.linalg.solve(A, b)
    return v


@pytest.fixture(scope="session")
def programmed_cells():
    """A few cells programmed with the default pulse, with their results."""
    out = []
    for seed in range(4):
        cell = PcmCell.from_seed(seed)
        out.append((seed, cell, program_pulse(cell)))
    return out


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    """Record one summary line per acceptance criterion."""
    def record(name, passed, detail):
        line = f"{name}: {'PASS' if passed else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
