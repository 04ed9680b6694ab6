"""Verification battery: one self-contained check per structural property.

Each check returns a :class:`CheckResult` carrying the inequality or
identity it verified (as a formula string), the bound, the measured
value, and a pass flag.  The battery backs the ``verify`` CLI command;
the same checks run at larger sample sizes in the test suite.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field as dc_field

import numpy as np

from .heis import (
    dist_g,
    gauge,
    group_mul,
    h_convexity_check,
    inverse,
)
from .flow import (
    PiecewiseConstantControl,
    check_reach_bound,
    check_shifted_start_bound,
    check_translation_identity,
    integrate,
    rk4_reference,
)
from .grids import Grid3, sample_field
from .game import (
    backward_induction,
    brute_force_value,
    dpp_residual,
    isaacs_gap,
    lipschitz_audit,
    make_lattice,
)
from .hji import hamiltonian_identity_check, uniqueness_initial_trace
from .scenario import Scenario

__all__ = ["CheckResult", "run_verification", "random_control", "ball_point"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    statement: str
    constant: float
    measured: float
    passed: bool
    detail: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statement": self.statement,
            "constant": self.constant,
            "measured": self.measured,
            "passed": bool(self.passed),
            "detail": self.detail,
        }


def ball_point(rng: np.random.Generator, radius: float) -> np.ndarray:
    theta = rng.random() * 2 * np.pi
    r = radius * np.sqrt(rng.random())
    return np.array([r * np.cos(theta), r * np.sin(theta)])


def ball_points(rng: np.random.Generator, radius: float, n: int) -> np.ndarray:
    theta = rng.random(n) * 2 * np.pi
    r = radius * np.sqrt(rng.random(n))
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def random_control(
    rng: np.random.Generator,
    radius: float,
    t0: float = 0.0,
    t_end: float = 1.0,
    max_segments: int = 5,
) -> PiecewiseConstantControl:
    m = int(rng.integers(1, max_segments + 1))
    while True:
        cuts = np.sort(t0 + (t_end - t0) * rng.random(m - 1))
        bp = np.concatenate([cuts, [t_end]])
        if (np.diff(np.concatenate(([t0], bp))) > 0).all():
            break
    return PiecewiseConstantControl(t0, bp, ball_points(rng, radius, m))


# ---------------------------------------------------------------------------
# individual checks
# ---------------------------------------------------------------------------

def check_group_axioms(n: int, rng: np.random.Generator) -> list[CheckResult]:
    a, b, c = (rng.uniform(-5, 5, (n, 3)) for _ in range(3))
    lhs = group_mul(group_mul(a, b), c)
    rhs = group_mul(a, group_mul(b, c))
    assoc = float(np.linalg.norm(lhs - rhs, axis=-1).max())

    x = rng.uniform(-5, 5, (n, 3))
    ident = float(np.abs(group_mul(x, np.zeros(3)) - x).max())
    inv = float(gauge(group_mul(inverse(x), x)).max())

    y = rng.uniform(-5, 5, (n, 3))
    d_plain = dist_g(x, y)
    d_moved = dist_g(group_mul(a, x), group_mul(a, y))
    left_inv = float(np.abs(d_plain - d_moved).max())

    lam = rng.uniform(0.1, 4.0, n)
    gx = gauge(x)
    dil = np.stack([lam * x[:, 0], lam * x[:, 1], lam * lam * x[:, 2]], axis=-1)
    homog = float((np.abs(gauge(dil) - lam * gx) / (1 + lam * gx)).max())

    sym = float(np.abs(gauge(x) - gauge(inverse(x))).max())
    rev_tri = float((np.abs(gauge(x) - gauge(y)) - d_plain).max())

    tol = 1e-12
    return [
        CheckResult("group_associativity", "|(a o b) o c - a o (b o c)| <= tol",
                    tol, assoc, assoc <= tol, {"n": n}),
        CheckResult("group_identity", "x o e = x exactly", tol, ident, ident <= tol),
        CheckResult("group_inverse", "||x^-1 o x||_G = 0", tol, inv, inv <= tol),
        CheckResult("dist_left_invariance", "d_G(a o x, a o y) = d_G(x, y)",
                    tol, left_inv, left_inv <= tol, {"n": n}),
        CheckResult("gauge_homogeneity",
                    "||dilate(lam, x)||_G = lam * ||x||_G (relative)",
                    tol, homog, homog <= tol),
        CheckResult("gauge_symmetry", "||x^-1||_G = ||x||_G", tol, sym, sym <= tol),
        CheckResult("gauge_reverse_triangle",
                    "| ||x||_G - ||y||_G | <= d_G(x, y) + tol",
                    tol, rev_tri, rev_tri <= tol),
    ]


def check_flow_exactness(n: int, rng: np.random.Generator,
                         substeps: int = 1000) -> CheckResult:
    # endpoint agreement in the Euclidean norm: a rounding-scale defect has
    # gauge equal to the square root of its vertical part, which no
    # float64 integrator pair can keep near machine precision
    worst = 0.0
    worst_gauge = 0.0
    for _ in range(n):
        xi = rng.uniform(-2, 2, 3)
        u = random_control(rng, 2.0)
        end_exact = integrate(xi, u).endpoint
        end_rk4 = rk4_reference(xi, u, substeps=substeps).endpoint
        worst = max(worst, float(np.linalg.norm(end_exact - end_rk4)))
        worst_gauge = max(worst_gauge, float(dist_g(end_exact, end_rk4)))
    return CheckResult(
        "flow_exactness", "|exact endpoint - RK4 endpoint| <= tol",
        1e-10, worst, worst <= 1e-10,
        {"n": n, "substeps": substeps, "gauge_distance": worst_gauge},
    )


def check_reach(n: int, rng: np.random.Generator,
                radii=(0.5, 1.0, 2.0)) -> CheckResult:
    worst = 0.0
    for i in range(n):
        r_z = radii[i % len(radii)]
        xi = rng.uniform(-2, 2, 3)
        rep = check_reach_bound(xi, random_control(rng, r_z), r_z)
        worst = max(worst, rep.worst_ratio)
    return CheckResult(
        "reach_bound", "d_G(xi, x(t)) <= 3*R_Z*(t - tau)",
        1 + 1e-9, worst, worst <= 1 + 1e-9, {"n": n, "radii": list(radii)},
    )


def check_translation(n: int, rng: np.random.Generator) -> list[CheckResult]:
    worst_dev, worst_ratio = 0.0, 0.0
    for _ in range(n):
        xi = rng.uniform(-2, 2, 3)
        xi_hat = rng.uniform(-2, 2, 3)
        rep = check_translation_identity(xi, xi_hat, random_control(rng, 1.0), r_z=1.0)
        worst_dev = max(worst_dev, rep.max_deviation)
        worst_ratio = max(worst_ratio, rep.gronwall_ratio)
    return [
        CheckResult("translation_identity", "xhat(t) = xihat o xi^-1 o x(t)",
                    1e-10, worst_dev, worst_dev <= 1e-10, {"n": n}),
        CheckResult("separation_gronwall",
                    "d_G(x(t), xhat(t)) <= exp(T*R_Z/2) * d_G(xi, xihat)",
                    1 + 1e-9, worst_ratio, worst_ratio <= 1 + 1e-9, {"n": n}),
    ]


def check_shifted_start(n: int, rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    for _ in range(n):
        xi = rng.uniform(-2, 2, 3)
        xi_tilde = rng.uniform(-2, 2, 3)
        tau = 0.0
        tau_prime = float(rng.random() * 0.9)
        u = random_control(rng, 1.0, t0=tau, t_end=1.0)
        rep = check_shifted_start_bound(xi, xi_tilde, tau, tau_prime, u, 1.0)
        worst = max(worst, rep.worst_ratio)
    return CheckResult(
        "shifted_start_bound",
        "d_G(x(t), xtilde(t)) <= (1+3*R_Z)*exp(T*R_Z/2)*(d_G + (tau' - tau))",
        1 + 1e-9, worst, worst <= 1 + 1e-9, {"n": n},
    )


# ---------------------------------------------------------------------------
# scenario-level battery
# ---------------------------------------------------------------------------

def run_verification(sc: Scenario, threads: int = 0) -> list[CheckResult]:
    """Full battery on a scenario; heavier checks reuse one baseline solve.

    Sample sizes come from the scenario's ``verify`` section, with
    defaults sized for an interactive run.
    """
    cfg = sc.verify
    rng = np.random.default_rng(sc.seed)
    results: list[CheckResult] = []

    results += check_group_axioms(int(cfg.get("group_samples", 10_000)), rng)
    results.append(check_flow_exactness(int(cfg.get("flow_controls", 200)), rng))
    results.append(check_reach(int(cfg.get("reach_instances", 2000)), rng))
    results += check_translation(int(cfg.get("translation_instances", 2000)), rng)
    results.append(check_shifted_start(int(cfg.get("shift_instances", 300)), rng))

    # horizontal convexity of the scenario's datum / terminal cost
    g_meta = sc.meta.get("initial") or sc.meta.get("terminal")
    conv = h_convexity_check(
        sc.game.terminal_cost, sc.box,
        directions=int(cfg.get("convexity_directions", 64)),
        probes=int(cfg.get("convexity_probes", 33)), rng=rng,
    )
    declared = bool(g_meta.get("h_convex", False))
    results.append(CheckResult(
        "h_convexity", "s -> g(x o (s*w, 0)) is midpoint convex",
        1e-9, conv.worst_violation,
        conv.passed if declared else True,
        {"asserted": declared, "sampled_pass": bool(conv.passed)},
    ))

    y_lat, z_lat = sc.make_lattices()
    template = Grid3(sc.box, np.zeros(sc.counts))

    # oracle equivalence, frozen dynamics (r_z = 0): grid-free recursion is exact
    frozen = dataclasses.replace(sc.game, r_z=0.0)
    coarse = Grid3(sc.box, np.zeros((9, 9, 9)))
    y_small = make_lattice(sc.game.r_y, 1, 8)
    z_zero = make_lattice(0.0)
    v_frozen = backward_induction(frozen, coarse, 3, y_small, z_zero,
                                  warn_costs=False)
    nodes = coarse.node_coordinates()
    pick = np.linspace(0, len(nodes) - 1, 27).astype(int)
    worst = 0.0
    for idx in pick:
        bf = brute_force_value(frozen, nodes[idx], 3, y_small, z_zero)
        worst = max(worst, abs(bf - float(v_frozen.data[0].reshape(-1)[idx])))
    results.append(CheckResult(
        "oracle_equivalence_frozen",
        "backward induction = grid-free recursion when R_Z = 0",
        1e-12, worst, worst <= 1e-12, {"nodes": len(pick)},
    ))

    # oracle equivalence with motion: small N, small lattices; the 5e-2
    # tolerance is calibrated at the 33x33x65 resolution, which a coarser
    # scenario can request through verify.oracle_counts
    y9 = make_lattice(sc.game.r_y, 1, 8)
    z9 = make_lattice(sc.game.r_z, 1, 8)
    oracle_counts = tuple(cfg.get("oracle_counts", sc.counts))
    v3 = backward_induction(sc.game, Grid3(sc.box, np.zeros(oracle_counts)),
                            3, y9, z9, warn_costs=False, threads=threads)
    sl = v3.region_index_bounds()
    ax = v3.axes()
    n_nodes = int(cfg.get("oracle_nodes", 12))
    worst = 0.0
    for _ in range(n_nodes):
        i = rng.integers(sl[0].start, sl[0].stop)
        j = rng.integers(sl[1].start, sl[1].stop)
        l = rng.integers(sl[2].start, sl[2].stop)
        p = np.array([ax[0][i], ax[1][j], ax[2][l]])
        bf = brute_force_value(sc.game, p, 3, y9, z9)
        worst = max(worst, abs(bf - float(v3.data[0, i, j, l])))
    results.append(CheckResult(
        "oracle_equivalence_small_n",
        "|backward induction - grid-free recursion| <= interpolation tolerance",
        5e-2, worst, worst <= 5e-2, {"nodes": n_nodes, "time_steps": 3},
    ))

    # the baseline solve feeds the dynamic-programming and regularity audits
    audited = backward_induction(sc.game, template, sc.n_steps, y_lat, z_lat,
                                 warn_costs=False, threads=threads)
    value = audited.reversed_time() if sc.kind == "hji" else audited

    dpp = dpp_residual(audited, sc.game, y_lat, z_lat,
                       probes=int(cfg.get("dpp_probes", 48)), sigma_steps=2,
                       rng=np.random.default_rng(sc.seed + 1))
    results.append(CheckResult(
        "dpp_residual",
        "two-step alternating recomputation matches the stored value",
        5e-2, dpp.max_residual, dpp.max_residual <= 5e-2,
        {"probes": dpp.n_evaluated, "sigma_steps": dpp.sigma_steps},
    ))

    for rep in lipschitz_audit(
        audited, sc.game.constants,
        rng=np.random.default_rng(sc.seed + 2),
        n_random_pairs=int(cfg.get("random_pairs", 20000)),
    ):
        results.append(CheckResult(
            "lipschitz_" + rep.quantity,
            "|dV| ratio <= constant * (1 + slack)",
            rep.constant * (1 + rep.slack), rep.worst_ratio, rep.passed,
            {"constant": rep.constant, "slack": rep.slack},
        ))

    # lattice min-max gap
    n_probes = int(cfg.get("isaacs_probes", 200))
    pr = np.random.default_rng(sc.seed + 3)
    pts = sc.box.sample(n_probes, pr)
    ts = pr.random(n_probes) * sc.horizon
    lams = ball_points(pr, sc.game.r_y, n_probes)
    gap = isaacs_gap(sc.game, (ts, pts, lams), y_lat, z_lat)
    cov = y_lat.covering_radius + z_lat.covering_radius
    if sc.kind == "hji":
        k_lip = sc.problem.lip_y
        gap_bound = 2 * ((k_lip + 1) * z_lat.covering_radius
                         + (k_lip + sc.game.r_z) * y_lat.covering_radius)
        asserted = True
    elif sc.meta.get("running_cost", {}).get("name") == "coupling":
        gap_bound = 2 * cov
        asserted = True
    else:
        gap_bound = float("inf")
        asserted = False
    results.append(CheckResult(
        "isaacs_lattice_gap", "min-max minus max-min over the lattices",
        gap_bound, gap.max_gap,
        gap.max_gap <= gap_bound if asserted else True,
        {"probes": n_probes, "asserted": asserted},
    ))

    if sc.kind == "hji":
        n_id = int(cfg.get("identity_probes", 1000))
        pr = np.random.default_rng(sc.seed + 4)
        pts = sc.box.sample(n_id, pr)
        ts = pr.random(n_id) * sc.horizon
        lams = ball_points(pr, sc.game.r_y, n_id)
        rep = hamiltonian_identity_check(sc.problem, sc.game, y_lat, z_lat,
                                         (ts, pts, lams))
        bound = 2 * (y_lat.covering_radius + z_lat.covering_radius) \
            * (1 + sc.problem.lip_y)
        results.append(CheckResult(
            "hamiltonian_identity",
            "H_minus(T - t, x, lam) = -Ham(t, x, lam) on the y-ball",
            bound, rep.max_error, rep.max_error <= bound,
            {"probes": n_id, "expected_bound": rep.expected_bound},
        ))

        trace = uniqueness_initial_trace(value, sc.game)
        results.append(CheckResult(
            "uniqueness_initial_trace",
            "sup |U(dt, .) - U(0, .)| <= (C1 + 3*R_Z*C2p) * dt * (1 + slack)",
            trace.bound, trace.sup_gap, trace.ok, {"dt": trace.dt},
        ))

        datum = sample_field(sc.problem.initial, sc.box, sc.counts)
        gap0 = float(np.abs(value.data[0] - datum.values).max())
        results.append(CheckResult(
            "initial_slice_matches_datum", "U(0, .) equals the sampled datum",
            1e-15, gap0, gap0 <= 1e-15,
        ))

    return results
