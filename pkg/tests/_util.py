"""Shared helpers: canonical problem builders and batched trajectory math."""

import numpy as np

from heisgame.catalog import make_hamiltonian, make_terminal
from heisgame.heis import Box
from heisgame.hji import HjiProblem, build_game, derived_radii

DEFAULT_BOX = Box([-4.0, -4.0, -8.0], [4.0, 4.0, 8.0])


def canonical_problem(box=DEFAULT_BOX, horizon=1.0):
    """Norm Hamiltonian with gauge datum: K=1, D1p=0, C2p=1."""
    ham = make_hamiltonian("norm", None)
    init = make_terminal("gauge", None, box)
    probe = HjiProblem(horizon, ham.fn, init.fn, 0.0, ham.d1p, ham.lip_y,
                       init.c2, init.c2p)
    r_y, _ = derived_radii(probe)
    problem = HjiProblem(horizon, ham.fn, init.fn, ham.d1_of_radius(r_y),
                         ham.d1p, ham.lip_y, init.c2, init.c2p)
    return problem, build_game(problem)


def ball_batch(rng, radius, shape):
    theta = rng.random(shape) * 2 * np.pi
    r = radius * np.sqrt(rng.random(shape))
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def batch_controls(rng, n, radius, segments=4, t_end=1.0):
    """Random piecewise-constant controls sharing a segment count.

    Returns breakpoints ``(n, m)`` (strictly increasing, last exactly
    ``t_end``) and values ``(n, m, 2)`` inside the radius ball.
    """
    gaps = rng.random((n, segments)) + 0.05
    cum = np.cumsum(gaps, axis=1)
    breaks = cum / cum[:, -1:] * t_end
    values = ball_batch(rng, radius, (n, segments))
    return breaks, values


def batch_trajectory(xi, breaks, values, per_segment=16, sign=1.0):
    """Exact flow of many controls at once (all start at t = 0).

    Returns sample times ``(n, k)`` and points ``(n, k, 3)`` including
    the start; per-segment sampling is uniform and includes segment ends.
    """
    from heisgame.heis import group_mul

    xi = np.asarray(xi, dtype=float)
    n, m = breaks.shape
    frac = np.linspace(0.0, 1.0, per_segment + 1)[1:]
    all_t = [np.zeros((n, 1))]
    all_p = [xi[:, None, :]]
    t_prev = np.zeros(n)
    x_prev = xi
    for j in range(m):
        seg_len = breaks[:, j] - t_prev
        h = seg_len[:, None] * frac[None, :]
        z = values[:, j]
        d1 = sign * h * z[:, None, 0]
        d2 = sign * h * z[:, None, 1]
        shift = np.stack([d1, d2, np.zeros_like(d1)], axis=-1)
        pts = group_mul(x_prev[:, None, :], shift)
        all_t.append(t_prev[:, None] + h)
        all_p.append(pts)
        x_prev = pts[:, -1]
        t_prev = breaks[:, j]
    return np.concatenate(all_t, axis=1), np.concatenate(all_p, axis=1)
