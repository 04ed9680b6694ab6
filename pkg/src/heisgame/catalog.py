"""Built-in terminal costs, Hamiltonians, and running costs for scenarios.

The CLI resolves functions by name so runs stay reproducible without an
embedded interpreter; library users can pass arbitrary callables instead.
Each builder also reports the constants the audits need.  Bounds over a
box are taken at its corners where the function is componentwise
monotone; gauge-Lipschitz constants with no closed form are estimated by
a sampled supremum ratio padded by 25 percent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .heis import Box, dist_g, eval_field, gauge

__all__ = [
    "TerminalCost",
    "HamiltonianModel",
    "RunningCostModel",
    "make_terminal",
    "make_hamiltonian",
    "make_running_cost",
    "TERMINAL_NAMES",
    "HAMILTONIAN_NAMES",
    "RUNNING_COST_NAMES",
]

TERMINAL_NAMES = ("gauge", "euclidean-norm-squared-truncated", "affine", "constant")
HAMILTONIAN_NAMES = ("norm", "component", "constant", "shifted-norm")
RUNNING_COST_NAMES = ("coupling", "constant", "custom-affine")


@dataclass(frozen=True)
class TerminalCost:
    name: str
    fn: Callable
    c2: float
    c2p: float
    h_convex: bool


@dataclass(frozen=True)
class HamiltonianModel:
    name: str
    fn: Callable
    lip_y: float
    d1p: float
    d1_of_radius: Callable[[float], float]


@dataclass(frozen=True)
class RunningCostModel:
    name: str
    fn: Callable
    c1_of_radii: Callable[[float, float], float]
    c1p: float
    coupling_base: Callable | None


def _estimated_dg_lipschitz(fn: Callable, box: Box, n: int = 8192) -> float:
    """Sampled sup of |f(x) - f(x')| / d_G(x, x') over box pairs, padded 1.25x.

    Includes nearby pairs, where the ratio of a non-horizontal function
    peaks.  Deterministic (fixed seed) so scenario constants reproduce.
    """
    rng = np.random.default_rng(12345)
    a = box.sample(n, rng)
    b = box.sample(n, rng)
    nearby = a + (b - a) * 1e-3
    xs = np.concatenate([a, a])
    ys = np.concatenate([b, nearby])
    d = dist_g(xs, ys)
    keep = d > 1e-12
    fa = eval_field(fn, xs[keep])
    fb = eval_field(fn, ys[keep])
    return 1.25 * float((np.abs(fa - fb) / d[keep]).max())


def make_terminal(name: str, params: dict | None, box: Box) -> TerminalCost:
    params = dict(params or {})
    if name == "gauge":
        c2 = float(gauge(box.corners()).max())
        return TerminalCost(name, gauge, c2, 1.0, True)
    if name == "euclidean-norm-squared-truncated":
        corners_sq = float((box.corners() ** 2).sum(-1).max())
        cap = float(params.pop("cap", corners_sq))
        _no_extra(name, params)

        def fn(x, cap=cap):
            x = np.asarray(x, dtype=float)
            return np.minimum((x * x).sum(-1), cap)

        return TerminalCost(name, fn, cap, _estimated_dg_lipschitz(fn, box), False)
    if name == "affine":
        a = np.asarray(params.pop("a", (1.0, 0.0, 0.0)), dtype=float).reshape(3)
        b = float(params.pop("b", 0.0))
        _no_extra(name, params)

        def fn(x, a=a, b=b):
            return np.asarray(x, dtype=float) @ a + b

        c2 = float(np.abs(box.corners() @ a + b).max())
        if a[2] == 0.0:
            c2p = float(np.hypot(a[0], a[1]))
        else:
            c2p = _estimated_dg_lipschitz(fn, box)
        return TerminalCost(name, fn, c2, c2p, True)
    if name == "constant":
        value = float(params.pop("value", 0.0))
        _no_extra(name, params)

        def fn(x, value=value):
            x = np.asarray(x, dtype=float)
            return np.full(x.shape[:-1], value)

        return TerminalCost(name, fn, abs(value), 0.0, True)
    raise KeyError(f"unknown terminal cost {name!r}; choose from {TERMINAL_NAMES}")


def make_hamiltonian(name: str, params: dict | None) -> HamiltonianModel:
    params = dict(params or {})
    if name == "norm":
        _no_extra(name, params)

        def fn(t, x, y):
            return np.linalg.norm(np.asarray(y, dtype=float), axis=-1)

        return HamiltonianModel(name, fn, 1.0, 0.0, lambda ry: ry)
    if name == "component":
        _no_extra(name, params)

        def fn(t, x, y):
            return np.asarray(y, dtype=float)[..., 0]

        return HamiltonianModel(name, fn, 1.0, 0.0, lambda ry: ry)
    if name == "constant":
        value = float(params.pop("value", 0.0))
        _no_extra(name, params)

        def fn(t, x, y, value=value):
            y = np.asarray(y, dtype=float)
            return np.full(y.shape[:-1], value)

        return HamiltonianModel(name, fn, 0.0, 0.0, lambda ry: abs(value))
    if name == "shifted-norm":
        shift = np.asarray(params.pop("shift", (0.0, 0.0)), dtype=float).reshape(2)
        offset = float(params.pop("offset", 0.0))
        _no_extra(name, params)

        def fn(t, x, y, shift=shift, offset=offset):
            return np.linalg.norm(np.asarray(y, dtype=float) - shift, axis=-1) + offset

        d1 = lambda ry: ry + float(np.linalg.norm(shift)) + abs(offset)
        return HamiltonianModel(name, fn, 1.0, 0.0, d1)
    raise KeyError(f"unknown Hamiltonian {name!r}; choose from {HAMILTONIAN_NAMES}")


def make_running_cost(name: str, params: dict | None) -> RunningCostModel:
    params = dict(params or {})
    if name == "coupling":
        _no_extra(name, params)

        def base(t, x, y):
            return -np.linalg.norm(np.asarray(y, dtype=float), axis=-1)

        def fn(t, x, y, z):
            y = np.asarray(y, dtype=float)
            z = np.asarray(z, dtype=float)
            return float(z @ y) - np.linalg.norm(y)

        return RunningCostModel(name, fn, lambda ry, rz: ry * rz + ry, 0.0, base)
    if name == "constant":
        value = float(params.pop("value", 0.0))
        _no_extra(name, params)

        def fn(t, x, y, z, value=value):
            return value

        return RunningCostModel(name, fn, lambda ry, rz: abs(value), 0.0, None)
    if name == "custom-affine":
        a0 = float(params.pop("a0", 0.0))
        ay = np.asarray(params.pop("ay", (0.0, 0.0)), dtype=float).reshape(2)
        az = np.asarray(params.pop("az", (0.0, 0.0)), dtype=float).reshape(2)
        _no_extra(name, params)

        def fn(t, x, y, z, a0=a0, ay=ay, az=az):
            return a0 + float(ay @ np.asarray(y, dtype=float)) \
                + float(az @ np.asarray(z, dtype=float))

        def c1(ry, rz, a0=a0, ay=ay, az=az):
            return abs(a0) + float(np.linalg.norm(ay)) * ry \
                + float(np.linalg.norm(az)) * rz

        return RunningCostModel(name, fn, c1, 0.0, None)
    raise KeyError(f"unknown running cost {name!r}; choose from {RUNNING_COST_NAMES}")


def _no_extra(name: str, params: dict):
    if params:
        raise KeyError(f"unknown parameters for {name!r}: {sorted(params)}")
