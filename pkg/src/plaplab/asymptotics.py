"""Cylinder-length sweeps, convergence-rate fits and structural checks.

For a fixed cross-section and a growing half-length ell, the solution of
the cylinder problem converges on any fixed interior window to the
(constantly extended) cross-sectional solution, with the windowed error

    e(ell) = || grad(u_ell - u_inf) ||_{L^p(window)}

bounded by C / ell^(1/p).  The sweep measures e(ell) against the discrete
cross-sectional reference computed on the same transverse grid (matched
discretization and, in the blow-up regime, matched truncation level M),
so that e(ell) reflects domain growth rather than resolution change.  The
fitted log-log slope is accepted when it is at most -1/p + 0.1: the bound
is one-sided, so faster empirical decay (exponential, in the benchmark
regimes) passes.

The structural checks render the comparison principle, the interior
barrier bound u <= phi(R/2) on balls, monotonicity of blow-up solutions
in ell, and the interior gradient estimate with explicit cutoff constants
as paired-solve assertions with small discretization slacks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .grid import (Window, build_grid, cutoff_function, embed_cross_section,
                   lp_norm_gradient, require_window_inside, window_node_mask)
from .nonlinearity import Nonlinearity
from .ode1d import solve_cross_finite, solve_cross_large, solve_large_1d
from .solver import SolveResult, SolverConfig, solve_blowup, solve_dirichlet

__all__ = [
    "FiniteData",
    "BlowupData",
    "SweepSpec",
    "RateRow",
    "RateReport",
    "RateUnresolvableError",
    "CheckReport",
    "sweep_ell",
    "fit_rate",
    "verify_comparison",
    "verify_monotone_in_ell",
    "verify_barrier",
    "verify_caccioppoli",
]

RATE_SLOPE_SLACK = 0.1
FLOOR_EXCLUSION_FACTOR = 3.0


class RateUnresolvableError(RuntimeError):
    """Too few sweep rows rise above the discretization floor to fit."""


@dataclass(frozen=True)
class FiniteData:
    """Dirichlet data depending on the cross coordinate only."""
    g: Union[float, Callable]

    def boundary_callable(self):
        g = self.g
        if callable(g):
            return lambda X, Y: np.asarray(g(Y), dtype=float)
        return float(g)

    def endpoint_values(self, cross):
        g = self.g
        if callable(g):
            return float(g(cross[0])), float(g(cross[1]))
        return float(g), float(g)


@dataclass(frozen=True)
class BlowupData:
    """Boundary blow-up approximated by an increasing sweep of levels."""
    m_list: tuple

    def __post_init__(self):
        ms = tuple(float(m) for m in self.m_list)
        if not ms or any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError(f"M list must be strictly increasing, got {ms}")
        object.__setattr__(self, "m_list", ms)


@dataclass(frozen=True)
class SweepSpec:
    """One rate experiment: problem data, ell ladder, window, mesh policy.

    The transverse spacing hy is fixed by ``ny`` and the x spacing is tied
    to it (hx = hy), so every ell row sees the same resolution density and
    the discrete cross-sectional reference is matched exactly.
    """

    nl: Nonlinearity
    p: float
    cross: tuple
    regime: Union[FiniteData, BlowupData]
    ells: tuple
    window: Window
    ny: int
    tol: float = 1e-11
    max_newton: int = 200

    def __post_init__(self):
        ells = tuple(float(e) for e in self.ells)
        if any(b <= a for a, b in zip(ells, ells[1:])) or not ells:
            raise ValueError(f"ell list must be strictly increasing: {ells}")
        object.__setattr__(self, "ells", ells)
        object.__setattr__(self, "cross",
                           (float(self.cross[0]), float(self.cross[1])))
        if self.ny < 3:
            raise ValueError(f"need ny >= 3, got {self.ny}")
        half = ells[0] / 2.0
        tiny = 1e-12 * (1.0 + half)
        if self.window.x_lo < -half - tiny or self.window.x_hi > half + tiny:
            raise ValueError(
                f"window {self.window} must lie inside the half-length "
                f"{half} cylinder (smallest ell / 2)")
        y0, y1 = self.cross
        if self.window.y_lo <= y0 or self.window.y_hi >= y1:
            raise ValueError(
                f"window {self.window} must be interior to the cross-section "
                f"{self.cross}")
        for ell in ells:
            if abs(2.0 * ell / self.hy - round(2.0 * ell / self.hy)) > 1e-9:
                raise ValueError(
                    f"ell={ell} is not resolvable with hx tied to "
                    f"hy={self.hy}; choose ny so that 2*ell/hy is integral")

    @property
    def hy(self) -> float:
        return (self.cross[1] - self.cross[0]) / (self.ny - 1)

    def nx_for(self, ell: float, ny: Optional[int] = None) -> int:
        hy = (self.cross[1] - self.cross[0]) / ((ny or self.ny) - 1)
        return int(round(2.0 * ell / hy)) + 1

    def solver_config(self) -> SolverConfig:
        return SolverConfig(p=self.p, tol=self.tol, max_newton=self.max_newton)


@dataclass(frozen=True)
class RateRow:
    ell: float
    error: float
    used_in_fit: Optional[bool] = None
    note: str = ""


@dataclass(frozen=True)
class RateReport:
    """Windowed-error table with fitted log-log decay."""

    rows: tuple
    slope: float
    intercept: float
    target_slope: float
    passed: bool
    floor: float

    @property
    def constant_estimate(self) -> float:
        return math.exp(self.intercept)


def _reference_profile(spec: SweepSpec, ny: int):
    y0, y1 = spec.cross
    if isinstance(spec.regime, FiniteData):
        g0, g1 = spec.regime.endpoint_values(spec.cross)
        return solve_cross_finite(spec.nl, spec.p, (y0, y1), g0, g1, ny,
                                  tol=spec.tol, max_newton=spec.max_newton)
    return solve_cross_large(spec.nl, spec.p, (y0, y1),
                             spec.regime.m_list, ny,
                             tol=spec.tol, max_newton=spec.max_newton)


def _solve_cylinder(spec: SweepSpec, ell: float, ny: int):
    grid = build_grid(ell, spec.cross, spec.nx_for(ell, ny), ny)
    cfg = spec.solver_config()
    if isinstance(spec.regime, FiniteData):
        res = solve_dirichlet(grid, spec.nl, cfg,
                              spec.regime.boundary_callable())
        return res, None
    results, report = solve_blowup(grid, spec.nl, cfg, spec.regime.m_list,
                                   window=spec.window)
    return results[-1], report


def _gradient_noise_floor(u, ref, p, w):
    """Roundoff level of the measured gradient-difference norm.

    Nodal values carry relative rounding of order machine epsilon, which
    the per-cell difference quotients amplify by 1/h; anything below this
    scale is numerical noise, not signal.
    """
    grid = u.grid
    mask = window_node_mask(grid, w)
    vmax = float(np.max(np.abs(u.values[mask]))
                 + np.max(np.abs(ref.values[mask])))
    h = min(grid.hx, grid.hy)
    return 8.0 * np.finfo(float).eps * vmax / h * w.area ** (1.0 / p)


def measure_row(spec: SweepSpec, ell: float, ny: Optional[int] = None):
    """Solve one ell; returns (error, noise_floor, result, blowup_report)."""
    ny = ny or spec.ny
    res, blow_report = _solve_cylinder(spec, ell, ny)
    prof = _reference_profile(spec, ny)
    ref = embed_cross_section(prof, res.solution.grid)
    err = lp_norm_gradient(res.solution - ref, spec.p, spec.window)
    noise = _gradient_noise_floor(res.solution, ref, spec.p, spec.window)
    return err, noise, res, blow_report


def sweep_ell(spec: SweepSpec, threads: int = 1):
    """Measure e(ell) over the ladder; returns (rows, floor, extras).

    A row whose solve fails is recorded with the failure reason instead of
    aborting the whole sweep.  The discretization floor is estimated by
    re-solving the largest ell at doubled resolution and comparing the two
    measurements; extras carries the blow-up stabilization reports keyed
    by ell.
    """
    extras = {}

    def one(ell):
        try:
            err, noise, _, blow = measure_row(spec, ell)
            return RateRow(ell=ell, error=err), noise, blow
        except Exception as exc:  # recorded, not raised
            return RateRow(ell=ell, error=float("nan"),
                           note=f"solve failed: {exc}"), 0.0, None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcome = list(pool.map(one, spec.ells))
    else:
        outcome = [one(ell) for ell in spec.ells]
    rows = []
    noise_max = 0.0
    for (row, noise, blow), ell in zip(outcome, spec.ells):
        rows.append(row)
        noise_max = max(noise_max, noise)
        if blow is not None:
            extras[ell] = blow
    ell_max = spec.ells[-1]
    coarse = next((r.error for r in rows if r.ell == ell_max), float("nan"))
    floor = float("nan")
    if math.isfinite(coarse):
        try:
            fine, noise_fine, _, _ = measure_row(spec, ell_max,
                                                 ny=2 * spec.ny - 1)
            # resolution sensitivity of the closest-to-floor row, bounded
            # below by the rounding level of the norm measurement itself
            floor = max(abs(coarse - fine), noise_max, noise_fine)
        except Exception:
            pass
    return rows, floor, extras


def fit_rate(rows, p: float, floor: float = 0.0) -> RateReport:
    """Least-squares line on (log ell, log e); one-sided pass criterion.

    Rows at or below ``FLOOR_EXCLUSION_FACTOR`` times the floor (or with
    zero/failed errors) are excluded; fewer than three usable rows raise
    :class:`RateUnresolvableError`.
    """
    if not math.isfinite(floor):
        floor = 0.0
    flagged = []
    for r in rows:
        usable = math.isfinite(r.error) and r.error > 0.0 \
            and r.error > FLOOR_EXCLUSION_FACTOR * floor
        flagged.append(RateRow(ell=r.ell, error=r.error, used_in_fit=usable,
                               note=r.note))
    used = [r for r in flagged if r.used_in_fit]
    if len(used) < 3:
        raise RateUnresolvableError(
            f"rate unresolvable at this resolution: only {len(used)} rows "
            f"above the discretization floor {floor:.3e}")
    log_l = np.log([r.ell for r in used])
    log_e = np.log([r.error for r in used])
    slope, intercept = np.polyfit(log_l, log_e, 1)
    target = -1.0 / p
    return RateReport(rows=tuple(flagged), slope=float(slope),
                      intercept=float(intercept), target_slope=target,
                      passed=bool(slope <= target + RATE_SLOPE_SLACK),
                      floor=float(floor))


# -- structural checks ------------------------------------------------------

@dataclass(frozen=True)
class CheckReport:
    """Outcome of one structural assertion."""

    name: str
    passed: bool
    worst: float
    details: dict = field(default_factory=dict)

    def __str__(self):
        state = "PASS" if self.passed else "FAIL"
        return f"[{state}] {self.name}: worst margin {self.worst:.3e}"


def verify_comparison(u: SolveResult, v: SolveResult) -> CheckReport:
    """Ordered boundary data must give ordered solutions (u <= v + 2 tol)."""
    if u.solution.grid != v.solution.grid:
        raise ValueError("comparison requires solves on the same grid")
    if u.nl != v.nl or u.p != v.p:
        raise ValueError("comparison requires the same nonlinearity and p")
    bmask = u.solution.grid.boundary_mask()
    bgap = v.solution.values[bmask] - u.solution.values[bmask]
    if np.min(bgap) < -1e-14 * max(1.0, np.max(np.abs(bgap))):
        raise ValueError("boundary data of u must not exceed that of v")
    slack = 2.0 * max(u.tol, v.tol)
    gap = v.solution.values - u.solution.values
    worst = float(np.min(gap))
    idx = int(np.argmin(gap))
    return CheckReport(name="comparison", passed=bool(worst >= -slack),
                       worst=worst,
                       details={"slack": slack, "worst_node": idx})


def verify_monotone_in_ell(shorter: SolveResult, longer: SolveResult,
                           window: Window) -> CheckReport:
    """Blow-up solutions shrink as the cylinder grows (matched final M)."""
    g1, g2 = shorter.solution.grid, longer.solution.grid
    if g1.ell > g2.ell:
        raise ValueError(f"expected ell ordering, got {g1.ell} > {g2.ell}")
    if g1.cross != g2.cross or g1.ny != g2.ny:
        raise ValueError("cross-sections and transverse grids must match")
    if shorter.boundary_mode != longer.boundary_mode:
        raise ValueError(
            f"boundary regimes differ: {shorter.boundary_mode} vs "
            f"{longer.boundary_mode}")
    require_window_inside(g1, window)
    mask = window_node_mask(g1, window)
    rows1 = shorter.solution.as_rows()
    rows2 = longer.solution.as_rows()
    resampled = np.empty_like(rows1)
    for j in range(g1.ny):
        resampled[j] = np.interp(g1.x, g2.x, rows2[j])
    gap = (rows1.ravel() - resampled.ravel())[mask]
    worst = float(np.min(gap))
    slack = 2.0 * max(shorter.tol, longer.tol)
    return CheckReport(name="monotone_in_ell", passed=bool(worst >= -slack),
                       worst=worst,
                       details={"slack": slack, "ells": (g1.ell, g2.ell)})


def verify_barrier(result: SolveResult, x0: tuple, R: float) -> CheckReport:
    """Interior bound u <= phi(R/2) on the half ball, phi the radial
    blow-up profile of radius R."""
    grid = result.solution.grid
    cx, cy = float(x0[0]), float(x0[1])
    y0, y1 = grid.cross
    if not (abs(cx) + R <= grid.ell and cy - R >= y0 and cy + R <= y1):
        raise ValueError(
            f"ball B_{R}(({cx}, {cy})) is not contained in the rectangle")
    phi = solve_large_1d(result.nl, result.p, R)
    bound = phi.value_at(R / 2.0)
    X, Y = grid.node_coords()
    ball = (X - cx) ** 2 + (Y - cy) ** 2 <= (R / 2.0) ** 2
    u_max = float(np.max(result.solution.values[ball]))
    slack = 2.0 * result.tol
    return CheckReport(name="barrier", passed=bool(u_max <= bound + slack),
                       worst=bound - u_max,
                       details={"bound": bound, "u_max": u_max,
                                "center": (cx, cy), "R": R})


def caccioppoli_constant(p: float) -> float:
    """Explicit cutoff constant 2^(2p) (p-1)^(p-1) / p^p of the interior
    gradient estimate."""
    return 2.0 ** (2.0 * p) * (p - 1.0) ** (p - 1.0) / p ** p


def verify_caccioppoli(result: SolveResult, inner: Window,
                       outer: Window) -> CheckReport:
    """Interior gradient estimate with explicit constants:

    int_inner |grad u|^p <= 2 f(L) L |outer|
                            + C(p) ||grad chi||^p_{L^p(outer)} L^p ,

    with L the sup of |u| over the outer window, chi the piecewise-linear
    cutoff, and 5 percent discretization slack.
    """
    grid = result.solution.grid
    if not outer.contains(inner) or min(inner.margins_to(outer)) <= 0:
        raise ValueError("windows must be strictly nested: inner << outer")
    p = result.p
    lhs = lp_norm_gradient(result.solution, p, inner) ** p
    lam = float(np.max(np.abs(
        result.solution.values[window_node_mask(grid, outer)])))
    chi = cutoff_function(inner, outer, grid)
    grad_chi_p = lp_norm_gradient(chi, p, outer) ** p
    rhs = (2.0 * result.nl.f(lam) * lam * outer.area
           + caccioppoli_constant(p) * grad_chi_p * lam ** p)
    slack = 0.05 * rhs
    return CheckReport(name="caccioppoli", passed=bool(lhs <= rhs + slack),
                       worst=rhs - lhs,
                       details={"lhs": lhs, "rhs": rhs, "lambda": lam,
                                "grad_chi_p": grad_chi_p})
