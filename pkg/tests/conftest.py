import sys
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _util import DEFAULT_BOX, canonical_problem

from heisgame.game import backward_induction, make_lattice
from heisgame.grids import Grid3

BASELINE_COUNTS = (33, 33, 65)
BASELINE_STEPS = 20


@pytest.fixture(scope="session")
def canonical():
    problem, spec = canonical_problem()
    return problem, spec


@pytest.fixture(scope="session")
def baseline_lattices(canonical):
    _, spec = canonical
    return make_lattice(spec.r_y, 4, 8), make_lattice(spec.r_z, 4, 8)


@pytest.fixture(scope="session")
def baseline_solution(canonical, baseline_lattices):
    """Game-time lower value of the canonical scenario at full resolution."""
    _, spec = canonical
    y_lat, z_lat = baseline_lattices
    grid = Grid3(DEFAULT_BOX, np.zeros(BASELINE_COUNTS))
    t0 = time.monotonic()
    value = backward_induction(spec, grid, BASELINE_STEPS, y_lat, z_lat,
                               warn_costs=False)
    return SimpleNamespace(value=value, seconds=time.monotonic() - t0)


@pytest.fixture(scope="session")
def ladder_solutions(canonical, baseline_solution):
    """Three refinement levels; the finest is the shared baseline."""
    _, spec = canonical
    levels = [((9, 9, 17), 5, 1), ((17, 17, 33), 10, 2)]
    out = []
    for counts, n_steps, rings in levels:
        y_lat = make_lattice(spec.r_y, rings, 8)
        z_lat = make_lattice(spec.r_z, rings, 8)
        grid = Grid3(DEFAULT_BOX, np.zeros(counts))
        out.append(backward_induction(spec, grid, n_steps, y_lat, z_lat,
                                      warn_costs=False))
    out.append(baseline_solution.value)
    return out
