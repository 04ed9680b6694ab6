"""Zero-sum game engine: control lattices, Hamiltonians, backward induction.

The game runs on ``[0, T]`` with dynamics ``xdot = -f(x, z)``; Player I
picks ``y`` in a ball of radius ``r_y`` to maximize, Player II picks ``z``
in a ball of radius ``r_z`` to minimize the running-plus-terminal payoff.
The semi-discrete scheme steps the state with the exact one-segment flow
and resolves each step as a finite max-min (lower value, Player II reacts
per step) or min-max (upper value) over control lattices.  One-step
expansion of the lower recurrence reproduces the lower Hamiltonian
``H^-(t, x, lam) = max_y min_z (F(t, x, y, z) - lam . z)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .heis import Box, dist_g, eval_field
from .flow import Sign, exact_step
from .grids import Grid3, ValueGrid, certify_region, interp_values

__all__ = [
    "GameSpec",
    "ControlLattice",
    "AuditReport",
    "LipschitzConstants",
    "NonFiniteValueError",
    "make_lattice",
    "lower_hamiltonian",
    "upper_hamiltonian",
    "isaacs_gap",
    "IsaacsReport",
    "backward_induction",
    "brute_force_value",
    "dpp_residual",
    "DppReport",
    "lipschitz_audit",
]


class NonFiniteValueError(RuntimeError):
    """A cost or value evaluation produced a non-finite number."""


def _lipschitz_bundle(horizon, r_z, c1, c1p, c2p):
    c_hat = float(np.exp(horizon * r_z / 2.0))
    c_tilde = (1.0 + 3.0 * r_z) * c_hat
    c_sharp = c_tilde * (c1p * horizon + c2p)
    c_prime = c_sharp + c1
    return c_hat, c_tilde, c_sharp, c_prime


@dataclass(frozen=True)
class LipschitzConstants:
    """The constants entering the regularity audits."""

    horizon: float
    r_z: float
    c1: float
    c1p: float
    c2p: float

    @property
    def c_hat(self) -> float:
        return _lipschitz_bundle(self.horizon, self.r_z, self.c1, self.c1p, self.c2p)[0]

    @property
    def c_tilde(self) -> float:
        return _lipschitz_bundle(self.horizon, self.r_z, self.c1, self.c1p, self.c2p)[1]

    @property
    def c_sharp(self) -> float:
        return _lipschitz_bundle(self.horizon, self.r_z, self.c1, self.c1p, self.c2p)[2]

    @property
    def c_prime(self) -> float:
        return _lipschitz_bundle(self.horizon, self.r_z, self.c1, self.c1p, self.c2p)[3]


@dataclass
class GameSpec:
    """Full data of the zero-sum game.

    ``running_cost(t, x, y, z)`` and ``terminal_cost(x)`` take ``x`` of
    shape ``(..., 3)`` (and scalar or matching-shape ``t``) with single
    plane vectors ``y``, ``z``; they broadcast over the point batch.
    ``c1``/``c2`` bound the costs, ``c1p``/``c2p`` are their Lipschitz
    constants in the gauge distance.  When the running cost has the form
    ``base(t, x, y) + z . y``, passing ``coupling_base`` lets the solver
    take a faster path; it never changes results.
    """

    horizon: float
    r_y: float
    r_z: float
    running_cost: Callable
    terminal_cost: Callable
    c1: float
    c1p: float
    c2: float
    c2p: float
    coupling_base: Callable | None = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.r_y < 0 or self.r_z < 0:
            raise ValueError("control radii must be nonnegative")
        for name in ("c1", "c1p", "c2", "c2p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def constants(self) -> LipschitzConstants:
        return LipschitzConstants(self.horizon, self.r_z, self.c1, self.c1p, self.c2p)

    @property
    def c_hat(self) -> float:
        return self.constants.c_hat

    @property
    def c_tilde(self) -> float:
        return self.constants.c_tilde

    @property
    def c_sharp(self) -> float:
        return self.constants.c_sharp

    @property
    def c_prime(self) -> float:
        return self.constants.c_prime

    def spot_check(self, box: Box, n: int = 128, rng=None) -> list[str]:
        """Sampled check of the declared bounds; violations warn, not raise."""
        rng = rng or np.random.default_rng(0)
        pts = box.sample(n, rng)
        msgs = []
        gv = eval_field(self.terminal_cost, pts)
        if (np.abs(gv) > self.c2 * (1 + 1e-9) + 1e-12).any():
            k = int(np.argmax(np.abs(gv)))
            msgs.append(
                f"|terminal cost| = {abs(gv[k]):.6g} exceeds c2 = {self.c2:.6g} "
                f"at {pts[k]}"
            )
        for _ in range(4):
            t = rng.random() * self.horizon
            y = _ball_point(rng, self.r_y)
            z = _ball_point(rng, self.r_z)
            fv = np.asarray(self.running_cost(t, pts, y, z), dtype=float)
            fv = np.broadcast_to(fv, (n,))
            if (np.abs(fv) > self.c1 * (1 + 1e-9) + 1e-12).any():
                k = int(np.argmax(np.abs(fv)))
                msgs.append(
                    f"|running cost| = {abs(fv[k]):.6g} exceeds c1 = {self.c1:.6g} "
                    f"at t={t:.4g}, x={pts[k]}, y={y}, z={z}"
                )
        for m in msgs:
            warnings.warn(m, stacklevel=3)
        return msgs


def _ball_point(rng, radius):
    theta = rng.random() * 2 * np.pi
    r = radius * np.sqrt(rng.random())
    return np.array([r * np.cos(theta), r * np.sin(theta)])


@dataclass(frozen=True)
class ControlLattice:
    """Finite subset of a closed plane ball, with its sampled covering radius."""

    radius: float
    points: np.ndarray
    covering_radius: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("lattice needs at least one point")
        norms = np.linalg.norm(pts, axis=-1)
        if (norms > self.radius * (1 + 1e-9) + 1e-12).any():
            raise ValueError("lattice point outside the declared ball")
        object.__setattr__(self, "points", pts)


def _covering_radius(points: np.ndarray, radius: float,
                     n_radial: int = 96, n_angular: int = 384) -> float:
    if radius == 0.0:
        return 0.0
    rr = np.linspace(0.0, radius, n_radial)
    aa = np.linspace(0.0, 2 * np.pi, n_angular, endpoint=False)
    r, a = np.meshgrid(rr, aa)
    samples = np.stack([(r * np.cos(a)).ravel(), (r * np.sin(a)).ravel()], axis=-1)
    p_sq = (points ** 2).sum(-1)
    worst = 0.0
    for k in range(0, len(samples), 4096):
        s = samples[k:k + 4096]
        d_sq = (s ** 2).sum(-1)[:, None] + p_sq[None, :] - 2.0 * (s @ points.T)
        worst = max(worst, float(np.sqrt(np.maximum(d_sq, 0.0).min(axis=1)).max()))
    return worst


def make_lattice(radius: float, rings: int = 4, base_angles: int = 8) -> ControlLattice:
    """Center plus ``rings`` concentric rings at radii ``radius*j/rings``,
    ring ``j`` carrying ``base_angles*j`` equally spaced angles.

    Points are ordered center first, then rings inward to outward with
    angles ascending, which fixes the optimizer tie-break.  The covering
    radius is measured by dense sampling of the ball.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if rings < 1:
        raise ValueError("rings must be >= 1")
    if base_angles < 4:
        raise ValueError("base_angles must be >= 4")
    if radius == 0.0:
        return ControlLattice(0.0, np.zeros((1, 2)), 0.0)
    pts = [np.zeros(2)]
    for j in range(1, rings + 1):
        r = radius * j / rings
        m = base_angles * j
        ang = 2 * np.pi * np.arange(m) / m
        pts.extend(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=-1))
    points = np.asarray(pts)
    return ControlLattice(radius, points, _covering_radius(points, radius))


def _check_lattice(lattice: ControlLattice, radius: float, name: str):
    if abs(lattice.radius - radius) > 1e-9 * (1 + abs(radius)):
        raise ValueError(
            f"{name} lattice radius {lattice.radius} does not match the game's {radius}"
        )


def _as_probe_arrays(t, x, lam):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    pts = np.atleast_2d(x)
    lam = np.asarray(lam, dtype=float)
    lam = np.broadcast_to(lam, (len(pts), 2))
    t = np.asarray(t, dtype=float)
    return scalar, pts, lam, t


def _lattice_hamiltonian(spec, t, x, lam, y_lattice, z_lattice, outer_is_y):
    scalar, pts, lam2, tt = _as_probe_arrays(t, x, lam)
    n = len(pts)
    outer = y_lattice.points if outer_is_y else z_lattice.points
    inner = z_lattice.points if outer_is_y else y_lattice.points
    best = np.full(n, -np.inf if outer_is_y else np.inf)
    acc = np.empty(n)
    scratch = np.empty(n)
    for a in outer:
        first = True
        for b in inner:
            y, z = (a, b) if outer_is_y else (b, a)
            fv = np.asarray(spec.running_cost(tt, pts, y, z), dtype=float)
            if not np.isfinite(fv).all():
                raise NonFiniteValueError(
                    f"running cost non-finite at t={tt}, y={y}, z={z}"
                )
            np.subtract(np.broadcast_to(fv, (n,)), lam2 @ z, out=scratch)
            if first:
                acc[:] = scratch
                first = False
            elif outer_is_y:
                np.minimum(acc, scratch, out=acc)
            else:
                np.maximum(acc, scratch, out=acc)
        if outer_is_y:
            np.maximum(best, acc, out=best)
        else:
            np.minimum(best, acc, out=best)
    return float(best[0]) if scalar else best


def lower_hamiltonian(spec: GameSpec, t, x, lam, y_lattice, z_lattice):
    """Exact ``max_y min_z (F(t,x,y,z) - lam . z)`` over the lattices.

    Accepts batched probes: ``x`` of shape ``(n, 3)`` with ``t`` and
    ``lam`` broadcasting.  Ties resolve to the first lattice index.
    """
    _check_lattice(y_lattice, spec.r_y, "y")
    _check_lattice(z_lattice, spec.r_z, "z")
    return _lattice_hamiltonian(spec, t, x, lam, y_lattice, z_lattice, True)


def upper_hamiltonian(spec: GameSpec, t, x, lam, y_lattice, z_lattice):
    """Exact ``min_z max_y (F(t,x,y,z) - lam . z)`` over the lattices."""
    _check_lattice(y_lattice, spec.r_y, "y")
    _check_lattice(z_lattice, spec.r_z, "z")
    return _lattice_hamiltonian(spec, t, x, lam, y_lattice, z_lattice, False)


@dataclass(frozen=True)
class IsaacsReport:
    max_gap: float
    witness: tuple
    gaps: np.ndarray


def isaacs_gap(spec: GameSpec, probes, y_lattice, z_lattice) -> IsaacsReport:
    """Max of upper minus lower Hamiltonian over probe triples ``(t, x, lam)``.

    Measures only the lattice gap; a zero gap makes no claim about the
    continuum min-max condition.
    """
    t, x, lam = probes
    lo = lower_hamiltonian(spec, t, x, lam, y_lattice, z_lattice)
    hi = upper_hamiltonian(spec, t, x, lam, y_lattice, z_lattice)
    gaps = np.atleast_1d(hi - lo)
    k = int(np.argmax(gaps))
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    lam2 = np.broadcast_to(np.asarray(lam, dtype=float), (len(pts), 2))
    tt = np.broadcast_to(np.asarray(t, dtype=float), (len(pts),))
    witness = (float(tt[k]), pts[k].copy(), lam2[k].copy())
    return IsaacsReport(float(gaps[k]), witness, gaps)


def _optimize_nodes(spec, t, h, nodes, W, y_lattice, z_lattice, which):
    """One backward step on a node batch: opt-opt of ``h*F + W_z``.

    ``W[j]`` holds the continuation value after stepping with ``z_j``.
    """
    n = len(nodes)
    ypts, zpts = y_lattice.points, z_lattice.points
    if which == "lower" and spec.coupling_base is not None:
        offs = h * (zpts @ ypts.T)  # (mz, my)
        best = np.full(n, -np.inf)
        acc = np.empty(n)
        scratch = np.empty(n)
        for yi in range(len(ypts)):
            np.add(W[0], offs[0, yi], out=acc)
            for j in range(1, len(zpts)):
                np.add(W[j], offs[j, yi], out=scratch)
                np.minimum(acc, scratch, out=acc)
            base = h * np.asarray(spec.coupling_base(t, nodes, ypts[yi]), dtype=float)
            np.add(acc, base, out=acc)
            np.maximum(best, acc, out=best)
        return best

    outer_is_y = which == "lower"
    outer = ypts if outer_is_y else zpts
    inner = zpts if outer_is_y else ypts
    best = np.full(n, -np.inf if outer_is_y else np.inf)
    acc = np.empty(n)
    scratch = np.empty(n)
    for ai, a in enumerate(outer):
        first = True
        for bi, b in enumerate(inner):
            y, z, zi = (a, b, bi) if outer_is_y else (b, a, ai)
            fv = h * np.asarray(spec.running_cost(t, nodes, y, z), dtype=float)
            np.add(W[zi], fv, out=scratch)
            if first:
                acc[:] = scratch
                first = False
            elif outer_is_y:
                np.minimum(acc, scratch, out=acc)
            else:
                np.maximum(acc, scratch, out=acc)
        if outer_is_y:
            np.maximum(best, acc, out=best)
        else:
            np.minimum(best, acc, out=best)
    return best


def backward_induction(
    spec: GameSpec,
    grid: Grid3,
    n_steps: int,
    y_lattice: ControlLattice,
    z_lattice: ControlLattice,
    which: str = "lower",
    sign: Sign = "minus",
    threads: int = 0,
    warn_costs: bool = True,
) -> ValueGrid:
    """Semi-discrete dynamic programming for the lower or upper value.

    The slice at the horizon samples the terminal cost; each earlier slice
    solves, nodewise,

        lower:  V(t, x) = max_y min_z [ h*F(t, x, y, z) + V(t+h, x o (-h*z, 0)) ]
        upper:  the same with min over z outside,

    interpolating the next slice trilinearly at the stepped point.  Nodes
    whose stepped point leaves the box for some lattice ``z`` are flagged
    untrusted; ``trusted_region`` is the reach-certified sub-box.
    """
    if which not in ("lower", "upper"):
        raise ValueError(f"which must be 'lower' or 'upper', got {which!r}")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    _check_lattice(y_lattice, spec.r_y, "y")
    _check_lattice(z_lattice, spec.r_z, "z")

    box, counts = grid.box, grid.counts
    h = spec.horizon / n_steps
    times = np.linspace(0.0, spec.horizon, n_steps + 1)
    nodes = grid.node_coordinates()
    n = len(nodes)
    mz = len(z_lattice.points)

    if warn_costs:
        spec.spot_check(box)
    region = certify_region(box, spec.r_z, spec.horizon)

    g_vals = eval_field(spec.terminal_cost, nodes)
    if not np.isfinite(g_vals).all():
        k = int(np.argmax(~np.isfinite(g_vals)))
        raise NonFiniteValueError(f"terminal cost non-finite at node {nodes[k]}")

    blocks = _node_blocks(n, threads)
    inside_all = np.empty(n, dtype=bool)
    for sl in blocks:
        ok = np.ones(sl.stop - sl.start, dtype=bool)
        for z in z_lattice.points:
            stepped = exact_step(nodes[sl], z, h, sign)
            ok &= box.contains(stepped)
        inside_all[sl] = ok

    data = np.empty((n_steps + 1,) + counts)
    data[n_steps] = g_vals.reshape(counts)
    trusted = np.empty((n_steps + 1,) + counts, dtype=bool)
    trusted[n_steps] = True
    for k in range(n_steps):
        trusted[k] = inside_all.reshape(counts)

    def run_block(sl, v_next, t):
        W = np.empty((mz, sl.stop - sl.start))
        for j, z in enumerate(z_lattice.points):
            stepped = exact_step(nodes[sl], z, h, sign)
            W[j], _ = interp_values(box, v_next, stepped)
        return _optimize_nodes(spec, t, h, nodes[sl], W, y_lattice, z_lattice, which)

    executor = None
    if threads and threads > 1 and len(blocks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        executor = ThreadPoolExecutor(max_workers=threads)
    try:
        new_flat = np.empty(n)
        for k in range(n_steps - 1, -1, -1):
            t = times[k]
            v_next = data[k + 1]
            if executor is not None:
                results = executor.map(lambda sl: run_block(sl, v_next, t), blocks)
                for sl, vals in zip(blocks, results):
                    new_flat[sl] = vals
            else:
                for sl in blocks:
                    new_flat[sl] = run_block(sl, v_next, t)
            if not np.isfinite(new_flat).all():
                bad = int(np.argmax(~np.isfinite(new_flat)))
                raise NonFiniteValueError(
                    f"non-finite value at t={t:.6g}, node {nodes[bad]}"
                )
            data[k] = new_flat.reshape(counts)
    finally:
        if executor is not None:
            executor.shutdown()

    return ValueGrid(box, times, data, region, trusted)


def _node_blocks(n: int, threads: int) -> list[slice]:
    if threads and threads > 1:
        size = max(16384, -(-n // threads))
    else:
        size = 131072
    return [slice(k, min(k + size, n)) for k in range(0, n, size)]


def _alternating_value(spec, pts, t_start, steps, h, y_lattice, z_lattice,
                       which, sign, leaf):
    """Grid-free alternating expansion on a point batch; ``leaf`` ends it."""
    if steps == 0:
        return np.asarray(leaf(pts), dtype=float)
    W = np.empty((len(z_lattice.points), len(pts)))
    for j, z in enumerate(z_lattice.points):
        W[j] = _alternating_value(
            spec, exact_step(pts, z, h, sign), t_start + h, steps - 1, h,
            y_lattice, z_lattice, which, sign, leaf,
        )
    return _optimize_nodes(spec, t_start, h, pts, W, y_lattice, z_lattice, which)


def brute_force_value(
    spec: GameSpec,
    xi,
    n_steps: int,
    y_lattice: ControlLattice,
    z_lattice: ControlLattice,
    which: str = "lower",
    sign: Sign = "minus",
) -> float:
    """Alternating max/min expansion on exact states, without any grid.

    Oracle for ``backward_induction``: exact whenever ``r_z = 0`` (no
    motion, no interpolation), and equal up to interpolation error
    otherwise.  Enumeration is exponential, so ``n_steps <= 3`` and at
    most 9 points per lattice are enforced.
    """
    if n_steps > 3 or n_steps < 1:
        raise ValueError("size guard: n_steps must be between 1 and 3")
    if len(y_lattice.points) > 9 or len(z_lattice.points) > 9:
        raise ValueError("size guard: lattices must have at most 9 points")
    _check_lattice(y_lattice, spec.r_y, "y")
    _check_lattice(z_lattice, spec.r_z, "z")
    xi = np.asarray(xi, dtype=float).reshape(1, 3)
    h = spec.horizon / n_steps
    leaf = lambda pts: eval_field(spec.terminal_cost, pts)
    vals = _alternating_value(spec, xi, 0.0, n_steps, h,
                              y_lattice, z_lattice, which, sign, leaf)
    return float(vals[0])


@dataclass(frozen=True)
class DppReport:
    max_residual: float
    n_evaluated: int
    n_skipped: int
    sigma_steps: int


def dpp_residual(
    V: ValueGrid,
    spec: GameSpec,
    y_lattice: ControlLattice,
    z_lattice: ControlLattice,
    probes=64,
    sigma_steps: int = 2,
    rng=None,
    which: str = "lower",
    sign: Sign = "minus",
) -> DppReport:
    """Recomputes ``V`` at probe nodes by an exact ``sigma_steps``-step
    alternating expansion off the slice at ``t + sigma`` and reports the
    worst disagreement.

    One step reproduces the recurrence identically; two or more steps
    expose the interpolation commutation error.  Integer ``probes`` are
    sampled inside the certified region; explicit ``(k, i, j, l)`` probes
    outside it are skipped and counted.
    """
    if sigma_steps < 1 or sigma_steps > V.n_steps:
        raise ValueError("sigma_steps must be between 1 and n_steps")
    sl = V.region_index_bounds()
    h = V.dt
    if isinstance(probes, int):
        rng = rng or np.random.default_rng(0)
        ks = rng.integers(0, V.n_steps - sigma_steps + 1, probes)
        ii = rng.integers(sl[0].start, sl[0].stop, probes)
        jj = rng.integers(sl[1].start, sl[1].stop, probes)
        ll = rng.integers(sl[2].start, sl[2].stop, probes)
        probe_list = list(zip(ks.tolist(), ii.tolist(), jj.tolist(), ll.tolist()))
        n_skipped = 0
    else:
        probe_list, n_skipped = [], 0
        for (k, i, j, l) in probes:
            in_region = (sl[0].start <= i < sl[0].stop
                         and sl[1].start <= j < sl[1].stop
                         and sl[2].start <= l < sl[2].stop)
            if k <= V.n_steps - sigma_steps and in_region:
                probe_list.append((k, i, j, l))
            else:
                n_skipped += 1
    if not probe_list:
        return DppReport(0.0, 0, n_skipped, sigma_steps)

    ax = V.axes()
    worst = 0.0
    by_k: dict[int, list] = {}
    for p in probe_list:
        by_k.setdefault(p[0], []).append(p)
    for k, group in by_k.items():
        pts = np.array([[ax[0][i], ax[1][j], ax[2][l]] for (_, i, j, l) in group])
        target = V.slice(k + sigma_steps)
        leaf = lambda q, tg=target: tg.interp(q)[0]
        vals = _alternating_value(spec, pts, float(V.times[k]), sigma_steps, h,
                                  y_lattice, z_lattice, which, sign, leaf)
        stored = np.array([V.data[k, i, j, l] for (_, i, j, l) in group])
        worst = max(worst, float(np.abs(vals - stored).max()))
    return DppReport(worst, len(probe_list), n_skipped, sigma_steps)


@dataclass(frozen=True)
class AuditReport:
    quantity: str
    constant: float
    worst_ratio: float
    witness: tuple | None
    passed: bool
    slack: float

    def to_dict(self) -> dict:
        w = None
        if self.witness is not None:
            (ta, pa), (tb, pb) = self.witness
            w = [[ta, list(map(float, pa))], [tb, list(map(float, pb))]]
        return {
            "quantity": self.quantity,
            "constant": self.constant,
            "worst_ratio": self.worst_ratio,
            "witness": w,
            "passed": bool(self.passed),
            "slack": self.slack,
        }


def lipschitz_audit(
    V: ValueGrid,
    constants,
    rng=None,
    n_random_pairs: int = 20000,
    slack: float = 0.15,
) -> list[AuditReport]:
    """Empirical regularity audit of a value stack on its certified region.

    Checks the same-time spatial ratio ``|dV| / d_G`` against
    ``c_sharp = (1 + 3*r_z) * exp(T*r_z/2) * (c1p*T + c2p)`` and the
    space-time ratio ``|dV| / (|dt| + d_G)`` against
    ``c_prime = c_sharp + c1``, over all axis-adjacent node pairs, all
    time-adjacent pairs, and a random pair sample.  A slack factor covers
    the one-grid scheme error; the refinement trend is checked separately.
    """
    rng = rng or np.random.default_rng(0)
    c_sharp = constants.c_sharp
    c_prime = constants.c_prime
    sl = V.region_index_bounds()
    sub = V.data[(slice(None),) + sl]
    nt, m1, m2, m3 = sub.shape
    if m1 * m2 * m3 < 2:
        raise ValueError("fewer than 2 nodes inside the certified region")
    ax = [a[s] for a, s in zip(V.axes(), sl)]
    coords = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1)
    times = V.times

    def witness_at(flat_idx, shape, k_same, axis=None):
        idx = np.unravel_index(flat_idx, shape)
        k = idx[0]
        a = list(idx[1:])
        b = list(idx[1:])
        if axis is not None:
            b[axis] += 1
        return ((float(times[k]), coords[tuple(a)]),
                (float(times[k]), coords[tuple(b)]))

    # same-time, axis-adjacent pairs
    worst_sp, wit_sp = 0.0, None
    for axis in range(3):
        if sub.shape[axis + 1] < 2:
            continue
        dv = np.abs(np.diff(sub, axis=axis + 1))
        lead = coords.take(np.arange(coords.shape[axis] - 1), axis=axis)
        trail = coords.take(np.arange(1, coords.shape[axis]), axis=axis)
        dg = dist_g(trail, lead)
        ratios = dv / dg  # dg > 0 for distinct nodes
        k = int(np.argmax(ratios))
        if ratios.reshape(-1)[k] > worst_sp:
            worst_sp = float(ratios.reshape(-1)[k])
            wit_sp = witness_at(k, ratios.shape, None, axis=axis)

    # random same-time pairs
    def sample_idx(count):
        return tuple(rng.integers(0, s, count) for s in (m1, m2, m3))

    npr = n_random_pairs
    kk = rng.integers(0, nt, npr)
    a_idx, b_idx = sample_idx(npr), sample_idx(npr)
    pa, pb = coords[a_idx], coords[b_idx]
    dg = dist_g(pa, pb)
    keep = dg > 0
    dv = np.abs(sub[(kk,) + a_idx] - sub[(kk,) + b_idx])
    if keep.any():
        r = dv[keep] / dg[keep]
        k = int(np.argmax(r))
        if r[k] > worst_sp:
            worst_sp = float(r[k])
            sel = np.nonzero(keep)[0][k]
            tsel = float(times[kk[sel]])
            wit_sp = ((tsel, pa[sel]), (tsel, pb[sel]))

    # time-adjacent pairs at fixed nodes
    worst_st, wit_st = 0.0, None
    if nt >= 2:
        dvt = np.abs(np.diff(sub, axis=0)) / V.dt
        k = int(np.argmax(dvt))
        worst_st = float(dvt.reshape(-1)[k])
        idx = np.unravel_index(k, dvt.shape)
        p = coords[idx[1:]]
        wit_st = ((float(times[idx[0]]), p), (float(times[idx[0] + 1]), p))

    # random space-time pairs
    ka = rng.integers(0, nt, npr)
    kb = rng.integers(0, nt, npr)
    a_idx, b_idx = sample_idx(npr), sample_idx(npr)
    pa, pb = coords[a_idx], coords[b_idx]
    denom = np.abs(times[ka] - times[kb]) + dist_g(pa, pb)
    keep = denom > 0
    dv = np.abs(sub[(ka,) + a_idx] - sub[(kb,) + b_idx])
    if keep.any():
        r = dv[keep] / denom[keep]
        k = int(np.argmax(r))
        if r[k] > worst_st:
            worst_st = float(r[k])
            sel = np.nonzero(keep)[0][k]
            wit_st = ((float(times[ka[sel]]), pa[sel]), (float(times[kb[sel]]), pb[sel]))
    # spatial pairs are space-time pairs with dt = 0
    if worst_sp > worst_st:
        worst_st = worst_sp
        wit_st = wit_sp

    return [
        AuditReport(
            "spatial_ratio_vs_c_sharp", c_sharp, worst_sp, wit_sp,
            worst_sp <= c_sharp * (1 + slack) + 1e-12, slack,
        ),
        AuditReport(
            "space_time_ratio_vs_c_prime", c_prime, worst_st, wit_st,
            worst_st <= c_prime * (1 + slack) + 1e-12, slack,
        ),
    ]
