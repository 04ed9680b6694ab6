"""Heisenberg group operations and the Koranyi gauge metric.

Points are array-likes with three components ``(x1, x2, x3)``.  Every
operation broadcasts over leading axes, so a whole grid of points can be
pushed through the group law in one call.  The group product is

    a o b = (a1 + b1, a2 + b2, a3 + b3 + (a1*b2 - b1*a2) / 2),

with identity ``e = (0, 0, 0)`` and inverse ``x^{-1} = -x``.  The left
invariant distance is ``d_G(x, y) = ||y^{-1} o x||_G`` where the gauge is
``||x||_G = ((x1^2 + x2^2)^2 + x3^2)^{1/4}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "IDENTITY",
    "Box",
    "group_mul",
    "inverse",
    "dilate",
    "gauge",
    "dist_g",
    "horizontal_gradient",
    "eval_field",
    "euclid_gauge_sandwich",
    "SandwichReport",
    "h_convexity_check",
    "ConvexityReport",
]

IDENTITY = np.zeros(3)


def _pts(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (3,):
        raise ValueError(f"expected points with 3 components, got shape {x.shape}")
    return x


def group_mul(a, b) -> np.ndarray:
    """Group product ``a o b``."""
    a, b = _pts(a), _pts(b)
    a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2]
    b1, b2, b3 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack(
        [a1 + b1, a2 + b2, a3 + b3 + 0.5 * (a1 * b2 - b1 * a2)], axis=-1
    )


def inverse(x) -> np.ndarray:
    """Group inverse, the componentwise negation."""
    return -_pts(x)


def dilate(lam: float, x) -> np.ndarray:
    """Anisotropic dilation ``(lam*x1, lam*x2, lam^2*x3)``; ``lam`` must be > 0."""
    lam = float(lam)
    if not lam > 0.0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    x = _pts(x)
    return np.stack(
        [lam * x[..., 0], lam * x[..., 1], lam * lam * x[..., 2]], axis=-1
    )


def gauge(x) -> np.ndarray:
    """Koranyi gauge ``((x1^2 + x2^2)^2 + x3^2)^{1/4}``.

    Evaluated as two nested square roots (with ``hypot`` for the inner
    sum) so that coordinates up to ~1e70 do not overflow.
    """
    x = _pts(x)
    r2 = x[..., 0] * x[..., 0] + x[..., 1] * x[..., 1]
    return np.sqrt(np.hypot(r2, x[..., 2]))


def dist_g(x, y) -> np.ndarray:
    """Left invariant gauge distance ``||y^{-1} o x||_G``."""
    return gauge(group_mul(inverse(y), x))


@dataclass(frozen=True)
class Box:
    """Axis-aligned region ``[lo1,hi1] x [lo2,hi2] x [lo3,hi3]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if not (lo < hi).all():
            raise ValueError(f"box needs lo < hi on every axis, got lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, p) -> np.ndarray:
        p = _pts(p)
        return ((p >= self.lo) & (p <= self.hi)).all(axis=-1)

    def clip(self, p) -> np.ndarray:
        return np.clip(_pts(p), self.lo, self.hi)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.lo + rng.random((n, 3)) * self.extent

    def corners(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        out = np.empty((8, 3))
        for k in range(8):
            out[k] = [hi[i] if (k >> i) & 1 else lo[i] for i in range(3)]
        return out


def eval_field(f: Callable, pts: np.ndarray) -> np.ndarray:
    """Evaluate a scalar field on an ``(n, 3)`` batch of points.

    Vectorized fields are called once; scalar-only callables fall back
    to a per-point loop.
    """
    pts = _pts(pts)
    try:
        vals = np.asarray(f(pts), dtype=float)
    except Exception:
        vals = None
    if vals is None or vals.shape != pts.shape[:-1]:
        vals = np.asarray([float(f(p)) for p in pts.reshape(-1, 3)], dtype=float)
        vals = vals.reshape(pts.shape[:-1])
    return vals


def horizontal_gradient(f: Callable, x, step: float | None = None) -> np.ndarray:
    """Numerical horizontal gradient ``(X1 f, X2 f)`` at a single point.

    Centered Euclidean partials with step ``1e-5 * (1 + ||x||)`` are
    composed with the frame ``X1 = d1 - (x2/2) d3``, ``X2 = d2 + (x1/2) d3``.
    """
    x = _pts(x).reshape(3)
    h = step if step is not None else 1e-5 * (1.0 + np.linalg.norm(x))
    probes = np.repeat(x[None, :], 6, axis=0)
    for i in range(3):
        probes[2 * i, i] += h
        probes[2 * i + 1, i] -= h
    v = eval_field(f, probes)
    if not np.isfinite(v).all():
        bad = probes[int(np.argmax(~np.isfinite(v)))]
        raise ValueError(f"field returned a non-finite value near {bad}")
    d1 = (v[0] - v[1]) / (2 * h)
    d2 = (v[2] - v[3]) / (2 * h)
    d3 = (v[4] - v[5]) / (2 * h)
    return np.array([d1 - 0.5 * x[1] * d3, d2 + 0.5 * x[0] * d3])


@dataclass(frozen=True)
class SandwichReport:
    """Empirical constants for the Euclidean/gauge comparison on a box."""

    c_low: float
    c_high: float
    witness_low: np.ndarray | None
    witness_high: np.ndarray | None
    n_used: int

    @property
    def degenerate(self) -> bool:
        return self.n_used == 0


def euclid_gauge_sandwich(
    box: Box,
    samples: int = 10_000,
    rng: np.random.Generator | None = None,
    points: np.ndarray | None = None,
) -> SandwichReport:
    """Smallest empirical ``C_low``, ``C_high`` with ``||x|| <= C_low*||x||_G``
    and ``||x||_G <= C_high*||x||^{1/2}`` over a sample of the box.

    ``points`` overrides random sampling.  Points at the origin give 0/0
    ratios and are skipped; if nothing remains the constants are reported
    as 0 with empty witnesses.
    """
    if points is None:
        if samples < 1:
            raise ValueError("samples must be >= 1")
        rng = rng or np.random.default_rng(0)
        points = box.sample(int(samples), rng)
    pts = _pts(points).reshape(-1, 3)
    enorm = np.linalg.norm(pts, axis=-1)
    gnorm = gauge(pts)
    keep = gnorm > 0.0
    if not keep.any():
        return SandwichReport(0.0, 0.0, None, None, 0)
    pts, enorm, gnorm = pts[keep], enorm[keep], gnorm[keep]
    r_low = enorm / gnorm
    r_high = gnorm / np.sqrt(enorm)
    i, j = int(np.argmax(r_low)), int(np.argmax(r_high))
    return SandwichReport(
        float(r_low[i]), float(r_high[j]), pts[i].copy(), pts[j].copy(), len(pts)
    )


@dataclass(frozen=True)
class ConvexityReport:
    passed: bool
    worst_violation: float
    witness: tuple | None  # (base point, direction, s at the worst midpoint)


def h_convexity_check(
    g: Callable,
    box: Box,
    directions: int = 64,
    probes: int = 33,
    rng: np.random.Generator | None = None,
    tol_scale: float = 1e-9,
    s_max: float | None = None,
) -> ConvexityReport:
    """Sampled midpoint-convexity test of ``s -> g(x o (s*w1, s*w2, 0))``.

    Base points are drawn from the box and paired with unit horizontal
    directions; the first few lines are deterministic (origin with the
    coordinate directions).  On each line the interior second differences
    must be nonnegative up to ``tol_scale * (1 + |g|)``.
    """
    if directions < 1:
        raise ValueError("directions must be >= 1")
    if probes < 3:
        raise ValueError("probes must be >= 3")
    rng = rng or np.random.default_rng(0)
    if s_max is None:
        s_max = 0.5 * float(min(box.extent[0], box.extent[1]))

    lines: list[tuple[np.ndarray, np.ndarray]] = []
    fixed = [
        (IDENTITY, np.array([1.0, 0.0])),
        (IDENTITY, np.array([0.0, 1.0])),
        (IDENTITY, np.array([np.sqrt(0.5), np.sqrt(0.5)])),
    ]
    lines.extend(fixed[: int(directions)])
    while len(lines) < directions:
        base = box.sample(1, rng)[0]
        theta = rng.random() * 2 * np.pi
        lines.append((base, np.array([np.cos(theta), np.sin(theta)])))

    s = np.linspace(-s_max, s_max, int(probes))
    worst = -np.inf
    witness = None
    passed = True
    for base, w in lines:
        shifts = np.stack([s * w[0], s * w[1], np.zeros_like(s)], axis=-1)
        line_pts = group_mul(base, shifts)
        v = eval_field(g, line_pts)
        if not np.isfinite(v).all():
            bad = line_pts[int(np.argmax(~np.isfinite(v)))]
            raise ValueError(f"field returned a non-finite value at {bad}")
        viol = v[1:-1] - 0.5 * (v[:-2] + v[2:])
        tol = tol_scale * (1.0 + np.abs(v[1:-1]))
        if (viol > tol).any():
            passed = False
        k = int(np.argmax(viol))
        # keep the earliest witness among rounding-level ties
        if witness is None or viol[k] > worst + 1e-12 * (1.0 + abs(worst)):
            witness = (base.copy(), w.copy(), float(s[k + 1]))
        worst = max(worst, float(viol[k]))
    return ConvexityReport(passed, worst, witness)
