"""One-dimensional blow-up profiles and cross-sectional solves.

The symmetric profile phi on (-r, r) satisfying
``(|phi'|^(p-2) phi')' = f(phi)`` with ``phi -> +inf`` at both ends has
the first integral

    (1 - 1/p) |phi'(t)|^p = F(phi(t)) - F(a),      a = phi(0),

which reduces the whole problem to quadrature: the time to climb from the
center value ``a`` to a level ``v`` is

    t(v) = int_a^v [ (p/(p-1)) (F(s) - F(a)) ]^(-1/p) ds ,

and the blow-up radius is ``r(a) = t(inf)``.  ``r(a)`` is strictly
decreasing for the admissible nonlinearities, so prescribing the radius
means a one-parameter root solve for ``a``.

The integrand has an ``(s - a)^(-1/p)`` endpoint singularity; substituting
``s = a + sigma^(p/(p-1))`` makes it continuous, and the improper tail is
handled by the doubling-panel machinery of :mod:`plaplab.quadrature`.

The cross-sectional problem on an interval (finite data or blow-up data
approximated through an increasing sweep of constant boundary levels M)
is solved by the same regularized-energy Newton continuation as the 2D
solver, reduced to one dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .minimize import NonConvergenceError, default_eps_schedule, minimize_newton
from .nonlinearity import Nonlinearity, check_a1
from .quadrature import integrate_to_infinity, panel_quad

__all__ = [
    "DivergentBlowupError",
    "LargeSolution1D",
    "CrossProfile",
    "blowup_radius",
    "solve_large_1d",
    "solve_cross_finite",
    "solve_cross_large",
]


class DivergentBlowupError(ArithmeticError):
    """The blow-up quadrature diverges (Keller-Osserman condition fails)."""


def _inverse_speed(nl: Nonlinearity, p: float, a: float):
    """Integrand [ (p/(p-1)) (F(s) - F(a)) ]^(-1/p) as a function of s."""
    coeff = p / (p - 1.0)
    inv_p = 1.0 / p

    def h(s):
        gap = nl.F_gap(a, s - a)
        if gap <= 0.0:
            return float("inf")
        return (coeff * gap) ** (-inv_p)

    return h


def _near_integral(nl: Nonlinearity, p: float, a: float, b: float) -> float:
    """int_a^b of the inverse speed, with the endpoint singularity removed.

    Substituting s = a + sigma^(p/(p-1)) turns the (s-a)^(-1/p) blow-up at
    s = a into a continuous integrand for p > 1.
    """
    if b <= a:
        return 0.0
    expo = p / (p - 1.0)
    coeff = p / (p - 1.0)
    inv_p = 1.0 / p
    sigma_max = (b - a) ** (1.0 / expo)

    def integrand(sigma):
        dx = sigma ** expo
        gap = nl.F_gap(a, dx)
        if gap <= 0.0:
            return float("inf")
        return expo * sigma ** (expo - 1.0) * (coeff * gap) ** (-inv_p)

    return panel_quad(integrand, 0.0, sigma_max)


def blowup_radius(nl: Nonlinearity, p: float, a: float) -> float:
    """Blow-up radius r(a) of the symmetric profile with center value a.

    Raises :class:`DivergentBlowupError` when the quadrature diverges,
    either because the tail fails the Keller-Osserman condition or because
    F is flat immediately above ``a`` (the profile cannot leave ``a``).
    """
    if a <= 0.0:
        raise ValueError(f"center value must be positive, got a={a}")
    if p <= 1.0:
        raise ValueError(f"requires p > 1, got p={p}")
    if nl.F_gap(a, a) == 0.0:
        raise DivergentBlowupError(
            f"f vanishes on [{a}, {2 * a}]; the profile cannot leave its "
            "center value")
    near = _near_integral(nl, p, a, 2.0 * a)
    tail = integrate_to_infinity(_inverse_speed(nl, p, a), 2.0 * a,
                                 rel_tol=1e-12)
    if math.isinf(tail):
        raise DivergentBlowupError(
            "the blow-up integral diverges; the Keller-Osserman condition "
            f"fails for {nl.describe()} at p={p}")
    return near + tail


@dataclass(frozen=True, eq=False)
class LargeSolution1D:
    """Symmetric blow-up profile on (-r, r), tabulated for t >= 0.

    The samples are generated from a geometric ladder of level offsets
    ``phi - a``, so they cluster toward the blow-up end.  ``dphi`` is
    recovered from the first integral, which the tabulation therefore
    satisfies by construction; the independent consistency checks are the
    radius round-trip and the near-boundary law (tested elsewhere).
    """

    r: float
    a: float
    p: float
    nl: Nonlinearity
    t: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray

    def first_integral_residual(self) -> np.ndarray:
        """|(1 - 1/p)|phi'|^p - (F(phi) - F(a))|, relative to max(1, gap)."""
        gaps = np.array([self.nl.F_gap(self.a, v - self.a) for v in self.phi])
        lhs = (1.0 - 1.0 / self.p) * self.dphi ** self.p
        return np.abs(lhs - gaps) / np.maximum(1.0, gaps)

    def value_at(self, t: float) -> float:
        """phi(t) for |t| < r, by inverting the time-to-level map."""
        tq = abs(float(t))
        if tq >= self.r:
            raise ValueError(f"profile blows up at |t| = r = {self.r}; "
                             f"got t={t}")
        if tq == 0.0:
            return self.a
        if tq > self.t[-1]:
            raise ValueError(
                f"t={t} is within {self.r - self.t[-1]:.3e} of the blow-up "
                "end, beyond the tabulated range")
        i = int(np.searchsorted(self.t, tq))
        # bracket in level space: phi in [phi[i-1], phi[i]]
        v_lo, v_hi = float(self.phi[i - 1]), float(self.phi[i])
        t_lo = float(self.t[i - 1])
        if v_lo == v_hi:
            return v_lo

        def time_of(v):
            if i == 1:
                return _near_integral(self.nl, self.p, self.a, v) - tq
            return t_lo + panel_quad(_inverse_speed(self.nl, self.p, self.a),
                                     v_lo, v) - tq

        return float(brentq(time_of, v_lo, v_hi, rtol=1e-14, maxiter=200))

    def derivative_at(self, t: float) -> float:
        """phi'(|t|) >= 0, from the first integral."""
        v = self.value_at(t)
        gap = self.nl.F_gap(self.a, v - self.a)
        return (self.p / (self.p - 1.0) * gap) ** (1.0 / self.p)


def solve_large_1d(nl: Nonlinearity, p: float, r: float,
                   points_per_decade: int = 8,
                   level_decades: tuple = (-6.0, 9.0)) -> LargeSolution1D:
    """Profile with prescribed blow-up radius r, via root solve for a.

    The center value bracket is grown geometrically from a = 1 (r(a) is
    strictly decreasing); a non-monotone probe sequence aborts with a
    diagnostic rather than silently returning a wrong bracket.
    """
    if r <= 0.0:
        raise ValueError(f"radius must be positive, got r={r}")
    radius = lambda a: blowup_radius(nl, p, a)
    a0 = 1.0
    r0 = radius(a0)
    probes = [(a0, r0)]
    lo = hi = a0
    if r0 > r:
        # larger center value -> smaller radius
        for _ in range(60):
            lo, hi = hi, hi * 2.0
            r_hi = radius(hi)
            probes.append((hi, r_hi))
            if r_hi <= r:
                break
        else:
            raise ValueError(
                f"no center value with radius <= {r} found within 60 "
                f"doublings; probes end at {probes[-1]}")
        monotone = all(p1[1] >= p2[1] for p1, p2 in zip(probes, probes[1:]))
    else:
        for _ in range(60):
            hi, lo = lo, lo / 2.0
            r_lo = radius(lo)
            probes.append((lo, r_lo))
            if r_lo >= r:
                break
        else:
            raise ValueError(
                f"no center value with radius >= {r} found within 60 "
                f"halvings; probes end at {probes[-1]}")
        monotone = all(p1[1] <= p2[1] for p1, p2 in zip(probes, probes[1:]))
    if not monotone:
        raise ValueError(
            f"a -> r(a) is not monotone along the probe sequence {probes}; "
            "cannot bracket the center value reliably")
    a = float(brentq(lambda x: radius(x) - r, lo, hi, rtol=1e-13, maxiter=200))
    r_check = radius(a)
    if abs(r_check - r) > 1e-10 * r:
        raise ValueError(
            f"center-value root solve stalled: r({a}) = {r_check} vs "
            f"target {r}")

    lo_dec, hi_dec = level_decades
    n = int(round((hi_dec - lo_dec) * points_per_decade)) + 1
    offsets = a * np.power(10.0, np.linspace(lo_dec, hi_dec, n))
    levels = a + offsets
    # truncate the ladder where F(level) - F(a) saturates double precision
    # (fast-growing nonlinearities); the remaining climb time is below any
    # representable tolerance there
    gaps_tail = np.array([nl.F_gap(a, d) for d in offsets])
    keep = np.isfinite(gaps_tail)
    levels = levels[keep]
    n = len(levels)
    inv_speed = _inverse_speed(nl, p, a)
    panels = np.empty(n)
    panels[0] = _near_integral(nl, p, a, levels[0])
    for k in range(1, n):
        panels[k] = panel_quad(inv_speed, levels[k - 1], levels[k])
    times = np.concatenate(([0.0], np.cumsum(panels)))
    phi = np.concatenate(([a], levels))
    gaps = np.concatenate(([0.0], gaps_tail[keep]))
    dphi = (p / (p - 1.0) * gaps) ** (1.0 / p)
    return LargeSolution1D(r=float(r), a=a, p=float(p), nl=nl,
                           t=times, phi=phi, dphi=dphi)


# -- cross-sectional problem ------------------------------------------------

@dataclass(frozen=True, eq=False)
class CrossProfile:
    """Nodal solution of the cross-sectional problem on an interval.

    ``mode`` is "finite" (endpoint data ``g``) or "blowup" (final member
    of an increasing M sweep, with the stabilization residual = max nodal
    change over the last sweep step).
    """

    y: np.ndarray
    values: np.ndarray
    mode: str
    g: Optional[tuple] = None
    m_values: Optional[tuple] = None
    stabilization_residual: Optional[float] = None
    residual: float = 0.0
    tol: float = 0.0

    @property
    def interval(self) -> tuple:
        return (float(self.y[0]), float(self.y[-1]))

    def value_at(self, yq):
        return np.interp(yq, self.y, self.values)


class _CrossProblem:
    """1D regularized p-energy over piecewise-linear nodal values."""

    def __init__(self, nl, p, y, boundary):
        self.nl = nl
        self.p = p
        self.y = y
        self.h = float(y[1] - y[0])
        n = len(y)
        self.free = np.ones(n, dtype=bool)
        self.free[0] = self.free[-1] = False
        self.mass = np.full(n, self.h)
        self.mass[0] = self.mass[-1] = 0.5 * self.h
        self.boundary = boundary  # (g0, g1)

    def initial_guess(self):
        g0, g1 = self.boundary
        return np.interp(self.y, [self.y[0], self.y[-1]], [g0, g1])

    def _slopes(self, u):
        return np.diff(u) / self.h

    def objective(self, u, eps):
        s = self._slopes(u)
        s2e = s * s + eps * eps
        grad_term = self.h * np.sum((s2e ** (0.5 * self.p) - eps ** self.p)
                                    / self.p)
        f_term = float(np.sum(self.mass[self.free]
                              * self.nl.F_extended(u[self.free])))
        return grad_term + f_term

    def gradient(self, u, eps):
        s = self._slopes(u)
        sigma = (s * s + eps * eps) ** (0.5 * self.p - 1.0)
        flux = sigma * s
        g = np.zeros_like(u)
        g[:-1] -= flux
        g[1:] += flux
        fvals = self.mass * self.nl.f_extended(u)
        g += fvals
        scale = np.abs(fvals)
        scale[:-1] += np.abs(flux)
        scale[1:] += np.abs(flux)
        return g, scale

    def newton_step(self, u, eps, grad):
        s = self._slopes(u)
        s2e = s * s + eps * eps
        sigma = s2e ** (0.5 * self.p - 1.0)
        curv = (sigma + (self.p - 2.0) * s * s * s2e **
                (0.5 * self.p - 2.0)) / self.h
        diag = np.zeros_like(u)
        diag[:-1] += curv
        diag[1:] += curv
        diag += self.mass * self.nl.f_prime(u)
        idx = np.flatnonzero(self.free)
        nfree = len(idx)
        ab = np.zeros((3, nfree))
        ab[1] = diag[idx]
        off = -curv[1:-1]  # coupling between consecutive interior nodes
        ab[0, 1:] = off
        ab[2, :-1] = off
        return solve_banded((1, 1), ab, -grad[idx])


def solve_cross_finite(nl: Nonlinearity, p: float, interval, g0: float,
                       g1: float, n_nodes: int, tol: float = 1e-9,
                       max_newton: int = 200,
                       eps_schedule: Optional[tuple] = None) -> CrossProfile:
    """Finite-data cross-sectional solve on ``interval`` with n_nodes."""
    y0, y1 = float(interval[0]), float(interval[1])
    if n_nodes < 3:
        raise ValueError(f"need at least 3 nodes, got {n_nodes}")
    if y1 <= y0:
        raise ValueError(f"degenerate interval {interval}")
    y = np.linspace(y0, y1, n_nodes)
    problem = _CrossProblem(nl, p, y, (float(g0), float(g1)))
    if eps_schedule is None:
        eps_schedule = default_eps_schedule(problem.h)
    u0 = problem.initial_guess()
    u, _, info = minimize_newton(problem, u0, eps_schedule, tol, max_newton)
    return CrossProfile(y=y, values=u, mode="finite", g=(float(g0), float(g1)),
                        residual=info["residual"], tol=tol)


def solve_cross_large(nl: Nonlinearity, p: float, interval, M_list,
                      n_nodes: int, tol: float = 1e-9, max_newton: int = 200,
                      eps_schedule: Optional[tuple] = None) -> CrossProfile:
    """Blow-up data approximated by an increasing sweep of constant levels.

    Solves the finite problem with g0 = g1 = M for each M, warm-starting,
    and reports the final member together with the stabilization residual
    (max nodal change over the last step).  The interior values must be
    nondecreasing along the sweep (comparison principle); a violation
    beyond twice the solver tolerance aborts.
    """
    M_list = [float(M) for M in M_list]
    if not M_list:
        raise ValueError("M_list must not be empty")
    if any(m2 <= m1 for m1, m2 in zip(M_list, M_list[1:])):
        raise ValueError(f"M_list must be strictly increasing, got {M_list}")
    if not check_a1(nl, p):
        raise ValueError(f"no large solution exists: {nl.describe()} fails "
                         f"the Keller-Osserman condition at p={p}")
    y0, y1 = float(interval[0]), float(interval[1])
    y = np.linspace(y0, y1, n_nodes)
    prev = None
    change = None
    for M in M_list:
        problem = _CrossProblem(nl, p, y, (M, M))
        if eps_schedule is None:
            schedule = default_eps_schedule(problem.h)
        else:
            schedule = eps_schedule
        u0 = problem.initial_guess() if prev is None else prev.copy()
        u0[0] = u0[-1] = M
        u, _, info = minimize_newton(problem, u0, schedule, tol, max_newton)
        if prev is not None:
            diff = u[1:-1] - prev[1:-1]
            worst = float(np.min(diff))
            if worst < -2.0 * tol:
                raise NonConvergenceError(
                    f"M sweep lost monotonicity at M={M}: interior value "
                    f"dropped by {-worst:.3e}")
            change = float(np.max(np.abs(diff)))
        prev = u
    return CrossProfile(y=y, values=prev, mode="blowup",
                        m_values=tuple(M_list), stabilization_residual=change,
                        residual=info["residual"], tol=tol)
