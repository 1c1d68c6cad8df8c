"""Acceptance suite: one test per criterion, printed pass lines included.

Each test pins the tolerance stated in the project contract; the printed
line summarizes the measured quantity so a log shows one verdict per
criterion.  Geometry for the rate experiments is chosen so that at least
three ladder rows carry signal above the measurement floor (wider
cross-sections slow the exponential end-effect decay; the window is
always the fixed (-1,1) x interior rectangle).
"""

import math

import numpy as np
import pytest

from plaplab import (BlowupData, FiniteData, GridFunction, Nonlinearity,
                     SolverConfig, SweepSpec, Window, blowup_radius,
                     build_grid, check_a2, energy, energy_gradient, fit_rate,
                     psi_p, solve_blowup, solve_cross_finite, solve_dirichlet,
                     solve_large_1d, sweep_ell, verify_barrier,
                     verify_caccioppoli, verify_comparison,
                     verify_monotone_in_ell)

POWER23 = Nonlinearity.power(2, 3)
LINEAR = Nonlinearity.power(1, 1)

RADIUS_ORACLE = 1.311028777146060  # mpmath tanh-sinh value, 15 digits


def report(criterion, passed, detail):
    line = f"[acceptance {criterion}] {'PASS' if passed else 'FAIL'}: {detail}"
    print(line)
    assert passed, line


def psi_power_closed_form(c, q, p, r):
    return ((p - 1) / p) ** (1 / p) * ((q + 1) / c) ** (1 / p) \
        * p / (q + 1 - p) * r ** (-(q + 1 - p) / p)


def test_criterion_1_keller_osserman_oracle():
    worst = 0.0
    for p in (1.5, 2.0, 3.0):
        for q in (2.0, 3.0, 5.0):
            if q + 1 <= p:
                continue
            nl = Nonlinearity.power(1.0, q)
            for r in (0.5, 1.0, 2.0):
                expected = psi_power_closed_form(1.0, q, p, r)
                worst = max(worst, abs(psi_p(nl, p, r) / expected - 1.0))
    for r in (0.5, 1.0, 2.0, 4.0):
        worst = max(worst, abs(psi_p(POWER23, 2.0, r) * r - 1.0))
    report(1, worst <= 1e-7,
           f"psi_p vs closed form, worst relative error {worst:.2e} "
           "(tolerance 1e-7)")


def test_criterion_2_one_dimensional_large_solution():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 25
    oracle = float(mp.quad(lambda s: 1 / mp.sqrt(s ** 4 - 1), [1, 2, mp.inf]))
    assert abs(oracle - RADIUS_ORACLE) < 1e-13
    radius_err = abs(blowup_radius(POWER23, 2.0, 1.0) - oracle)
    round_trip = 0.0
    residual = 0.0
    for p in (1.5, 2.0, 3.0):
        sol = solve_large_1d(POWER23, p, 1.0)
        round_trip = max(round_trip,
                         abs(blowup_radius(POWER23, p, sol.a) - 1.0))
        residual = max(residual, float(sol.first_integral_residual().max()))
    passed = radius_err <= 1e-6 and round_trip <= 1e-8 and residual <= 1e-8
    report(2, passed,
           f"radius vs quadrature oracle {radius_err:.2e} (tol 1e-6), "
           f"radius round-trip {round_trip:.2e} (tol 1e-8), "
           f"first-integral residual {residual:.2e} (tol 1e-8)")


def test_criterion_3_linear_benchmark():
    prof = solve_cross_finite(LINEAR, 2.0, (0.0, 1.0), 1.0, 1.0, 401)
    mid_err = abs(prof.value_at(0.5) - 1.0 / math.cosh(0.5))
    grid = build_grid(8.0, (0.0, 1.0), 257, 65)
    res = solve_dirichlet(grid, LINEAR, SolverConfig(p=2.0), 1.0)
    mid_col = res.solution.as_rows()[:, 128]
    exact = np.cosh(grid.y - 0.5) / np.cosh(0.5)
    err_2d = float(np.max(np.abs(mid_col - exact)))
    passed = mid_err <= 1e-4 and err_2d <= 1e-3
    report(3, passed,
           f"cross solver u(1/2) error {mid_err:.2e} (tol 1e-4), "
           f"2D mid-cylinder error {err_2d:.2e} (tol 1e-3)")


FINITE_RATE_CASES = [
    # (nl, p, cross, window): window is (-1,1) x interior throughout
    (LINEAR, 2.0, (0.0, 2.0), Window(-1.0, 1.0, 0.5, 1.5)),
    (POWER23, 1.5, (0.0, 2.0), Window(-1.0, 1.0, 0.5, 1.5)),
    (POWER23, 3.0, (0.0, 4.0), Window(-1.0, 1.0, 1.0, 3.0)),
]


@pytest.mark.parametrize("nl,p,cross,window", FINITE_RATE_CASES,
                         ids=["linear-p2", "power23-p1.5", "power23-p3"])
def test_criterion_4_rate_finite_data(nl, p, cross, window):
    spec = SweepSpec(nl=nl, p=p, cross=cross, regime=FiniteData(1.0),
                     ells=(2.0, 4.0, 8.0, 16.0), window=window, ny=17,
                     tol=1e-11)
    rows, floor, _ = sweep_ell(spec)
    rep = fit_rate(rows, p, floor)
    used = sum(1 for r in rep.rows if r.used_in_fit)
    report(4, rep.passed and used >= 3,
           f"finite data {nl.describe()}, p={p}: slope {rep.slope:.3f} <= "
           f"{-1.0 / p:.3f} + 0.1 with {used} rows above floor "
           f"{rep.floor:.2e}")


@pytest.mark.parametrize("p", [1.5, 2.0], ids=["p1.5", "p2"])
def test_criterion_5_rate_blowup(p):
    spec = SweepSpec(nl=POWER23, p=p, cross=(-2.0, 2.0),
                     regime=BlowupData((10.0, 100.0, 1000.0, 10000.0)),
                     ells=(2.0, 4.0, 8.0, 16.0),
                     window=Window(-1.0, 1.0, -1.0, 1.0), ny=33, tol=1e-11)
    rows, floor, extras = sweep_ell(spec)
    rep = fit_rate(rows, p, floor)
    used = sum(1 for r in rep.rows if r.used_in_fit)
    stabilizing = all(
        all(a > b for a, b in zip(blow.stage_max_change,
                                  blow.stage_max_change[1:]))
        for blow in extras.values())
    report(5, rep.passed and used >= 3 and stabilizing,
           f"blow-up p={p}: slope {rep.slope:.3f} <= {-1.0 / p:.3f} + 0.1 "
           f"with {used} rows above floor {rep.floor:.2e}; windowed "
           f"M-stabilization residual decreasing: {stabilizing}")


COMPARISON_MATRIX = [(POWER23, 1.5), (POWER23, 2.0), (POWER23, 3.0),
                     (LINEAR, 2.0)]


@pytest.fixture(scope="module")
def blowup_solves():
    """Matched-M blow-up solves on (-2,2), transverse spacing 1/8."""
    cfg = SolverConfig(p=2.0)
    out = {}
    for ell in (2.0, 4.0, 8.0):
        grid = build_grid(ell, (-2.0, 2.0), int(8 * ell) + 1, 33)
        results, _ = solve_blowup(grid, POWER23, cfg,
                                  [10.0, 100.0, 1000.0, 10000.0])
        out[ell] = results
    return out


def test_criterion_6_comparison_pairs():
    rng = np.random.default_rng(2024)
    worst = np.inf
    for nl, p in COMPARISON_MATRIX:
        grid = build_grid(1.0, (0.0, 1.0), 17, 9)
        cfg = SolverConfig(p=p)
        for _ in range(20):
            g1, g2 = np.sort(rng.uniform(0.0, 3.0, size=2))
            lo = solve_dirichlet(grid, nl, cfg, float(g1))
            hi = solve_dirichlet(grid, nl, cfg, float(g2))
            rep = verify_comparison(lo, hi)
            worst = min(worst, rep.worst)
            assert rep.passed, str(rep)
    report(6, worst >= -2e-9,
           f"comparison on 20 ordered pairs per matrix cell, worst "
           f"margin {worst:.2e} (slack 2e-9)")


def test_criterion_6_monotone_in_ell(blowup_solves):
    window = Window(-1.0, 1.0, -1.0, 1.0)
    reps = [verify_monotone_in_ell(blowup_solves[2.0][-1],
                                   blowup_solves[4.0][-1], window),
            verify_monotone_in_ell(blowup_solves[4.0][-1],
                                   blowup_solves[8.0][-1], window)]
    passed = all(r.passed for r in reps)
    report(6, passed,
           "monotonicity in ell for (2,4) and (4,8), worst margins "
           + ", ".join(f"{r.worst:.2e}" for r in reps))


def test_criterion_6_barrier_placements(blowup_solves):
    final = blowup_solves[4.0][-1]
    R = 0.8
    margins = []
    for cx in np.linspace(-2.4, 2.4, 5):
        rep = verify_barrier(final, (float(cx), 0.0), R)
        margins.append(rep.worst)
        assert rep.passed, str(rep)
    report(6, True,
           f"barrier bound at 5 ball placements (R={R}), smallest "
           f"margin {min(margins):.3f}")


def test_criterion_6_caccioppoli(blowup_solves):
    solves = [blowup_solves[4.0][-1]]
    grid = build_grid(4.0, (0.0, 1.0), 129, 33)
    solves.append(solve_dirichlet(grid, LINEAR, SolverConfig(p=2.0), 1.0))
    solves.append(solve_dirichlet(grid, POWER23, SolverConfig(p=1.5), 1.0))
    checked = 0
    for res in solves:
        y0, y1 = res.solution.grid.cross
        height = y1 - y0
        outer = Window(-1.5, 1.5, y0 + 0.2 * height, y1 - 0.2 * height)
        for shrink in (0.25, 0.4, 0.55):
            inner = Window(-1.5 + shrink, 1.5 - shrink,
                           outer.y_lo + shrink * 0.3 * height,
                           outer.y_hi - shrink * 0.3 * height)
            rep = verify_caccioppoli(res, inner, outer)
            checked += 1
            assert rep.passed, str(rep)
    report(6, True,
           f"interior gradient estimate with explicit constant on "
           f"{checked} nested window pairs across 3 solves")


def test_criterion_7_gradient_correctness():
    rng = np.random.default_rng(7)
    grid = build_grid(1.0, (0.0, 1.0), 9, 7)
    u = GridFunction(grid, 0.5 + rng.random(grid.n_nodes))
    delta = 1e-6
    worst = 0.0
    for p in (1.5, 2.0, 3.0):
        for eps in (1e-2, 1e-4):
            grad = energy_gradient(u, POWER23, p, eps)
            for _ in range(50):
                v = rng.standard_normal(grid.n_nodes)
                up = GridFunction(grid, u.values + delta * v)
                um = GridFunction(grid, u.values - delta * v)
                fd = (energy(up, POWER23, p, eps)
                      - energy(um, POWER23, p, eps)) / (2.0 * delta)
                an = float(grad @ v)
                worst = max(worst, abs(fd - an) / max(abs(fd), abs(an)))
    report(7, worst <= 1e-5,
           f"energy gradient vs central differences over 50 directions "
           f"per (p, eps), worst relative error {worst:.2e} (tol 1e-5)")


def test_criterion_8_a2_probe():
    rep = check_a2(POWER23, 2.0, beta_grid=(0.25, 0.5, 0.75), t_max=1e4)
    worst = max(abs(est * beta - 1.0) for beta, est in
                zip(rep.beta_values, rep.estimated_liminf_per_beta))
    report(8, rep.passes and worst <= 1e-4,
           f"scaling-condition probe passes with liminf estimates matching "
           f"1/beta to {worst:.2e} (tol 1e-4)")
