"""Structured triangulated rectangles and piecewise-linear nodal fields.

A cylinder section (-ell, ell) x (y0, y1) carries a uniform node lattice;
every rectangular cell is split along its southwest-northeast diagonal
into two triangles, so the gradient of the affine interpolant is constant
per triangle and exactly reproduces affine data.  Windowed L^p norms of
the gradient weight triangles by their exact overlap area with the
window, which removes the O(h) staircase noise a containment threshold
would inject into convergence-rate measurements.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .ode1d import CrossProfile

__all__ = [
    "RectGrid",
    "GridFunction",
    "Window",
    "build_grid",
    "gradient_per_cell",
    "lp_norm_gradient",
    "embed_cross_section",
    "cutoff_function",
    "write_grid_function",
]


@dataclass(frozen=True)
class RectGrid:
    """Uniform node lattice on (-ell, ell) x (y0, y1) with SW-NE split cells.

    Node (i, j) has index ``j * nx + i`` (row-major over y rows).
    """

    ell: float
    cross: tuple
    nx: int
    ny: int

    def __post_init__(self):
        if self.ell <= 0:
            raise ValueError(f"half-length must be positive, got ell={self.ell}")
        y0, y1 = self.cross
        if y1 <= y0:
            raise ValueError(f"degenerate cross-section {self.cross}")
        if self.nx < 3 or self.ny < 3:
            raise ValueError(
                f"need at least 3 nodes per axis, got nx={self.nx}, ny={self.ny}")

    @property
    def hx(self) -> float:
        return 2.0 * self.ell / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.cross[1] - self.cross[0]) / (self.ny - 1)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def n_triangles(self) -> int:
        return 2 * (self.nx - 1) * (self.ny - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.ell, self.ell, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.cross[0], self.cross[1], self.ny)

    def node_coords(self):
        """(X, Y) arrays of length nx*ny in node-index order."""
        X, Y = np.meshgrid(self.x, self.y)  # Y rows
        return X.ravel(), Y.ravel()

    def triangles(self) -> np.ndarray:
        """(n_triangles, 3) node indices; cell (i,j) yields the lower
        triangle (n00, n10, n11) and the upper triangle (n00, n11, n01)."""
        i = np.arange(self.nx - 1)
        j = np.arange(self.ny - 1)
        J, I = np.meshgrid(j, i, indexing="ij")
        n00 = (J * self.nx + I).ravel()
        n10 = n00 + 1
        n01 = n00 + self.nx
        n11 = n01 + 1
        lower = np.stack([n00, n10, n11], axis=1)
        upper = np.stack([n00, n11, n01], axis=1)
        return np.concatenate([lower, upper], axis=0)

    def triangle_area(self) -> float:
        return 0.5 * self.hx * self.hy

    def gradient_coefficients(self) -> np.ndarray:
        """(n_triangles, 3, 2) coefficients b with grad u|_T = sum_k u_k b_k."""
        hx, hy = self.hx, self.hy
        b_lower = np.array([[-1.0 / hx, 0.0],
                            [1.0 / hx, -1.0 / hy],
                            [0.0, 1.0 / hy]])
        b_upper = np.array([[0.0, -1.0 / hy],
                            [1.0 / hx, 0.0],
                            [-1.0 / hx, 1.0 / hy]])
        half = (self.nx - 1) * (self.ny - 1)
        out = np.empty((2 * half, 3, 2))
        out[:half] = b_lower
        out[half:] = b_upper
        return out

    def lumped_mass(self) -> np.ndarray:
        """Per-node lumped area (each triangle spreads area/3 to its nodes)."""
        tri = self.triangles()
        third = self.triangle_area() / 3.0
        return np.bincount(tri.ravel(), minlength=self.n_nodes) * third

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros((self.ny, self.nx), dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask.ravel()

    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask()


def build_grid(ell: float, cross, nx: int, ny: int) -> RectGrid:
    """Structured triangulated mesh on (-ell, ell) x cross."""
    return RectGrid(ell=float(ell), cross=(float(cross[0]), float(cross[1])),
                    nx=int(nx), ny=int(ny))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Piecewise-linear nodal field over a RectGrid."""

    grid: RectGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"expected {self.grid.n_nodes} nodal values, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("nodal values must be finite")
        object.__setattr__(self, "values", vals)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        if other.grid != self.grid:
            raise ValueError("grid mismatch in GridFunction arithmetic")
        return GridFunction(self.grid, self.values - other.values)

    def as_rows(self) -> np.ndarray:
        """Values reshaped to (ny, nx)."""
        return self.values.reshape(self.grid.ny, self.grid.nx)

    @classmethod
    def from_callable(cls, grid: RectGrid, fn) -> "GridFunction":
        X, Y = grid.node_coords()
        return cls(grid, np.asarray(fn(X, Y), dtype=float))

    @classmethod
    def constant(cls, grid: RectGrid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.n_nodes, float(c)))


@dataclass(frozen=True)
class Window:
    """Axis-aligned measurement rectangle, strictly inside the grid."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi):
            raise ValueError(f"degenerate window {self}")

    @property
    def area(self) -> float:
        return (self.x_hi - self.x_lo) * (self.y_hi - self.y_lo)

    def contains(self, other: "Window") -> bool:
        return (self.x_lo <= other.x_lo and other.x_hi <= self.x_hi and
                self.y_lo <= other.y_lo and other.y_hi <= self.y_hi)

    def margins_to(self, outer: "Window") -> tuple:
        """(left, right, bottom, top) gaps from self inside outer."""
        return (self.x_lo - outer.x_lo, outer.x_hi - self.x_hi,
                self.y_lo - outer.y_lo, outer.y_hi - self.y_hi)


def require_window_inside(grid: RectGrid, w: Window):
    """Window boundary must keep at least one cell of margin to the grid."""
    tiny = 1e-12 * max(grid.hx, grid.hy)
    if not (w.x_lo >= -grid.ell + grid.hx - tiny and
            w.x_hi <= grid.ell - grid.hx + tiny and
            w.y_lo >= grid.cross[0] + grid.hy - tiny and
            w.y_hi <= grid.cross[1] - grid.hy + tiny):
        raise ValueError(
            f"window {w} is not at least one cell inside the grid "
            f"(ell={grid.ell}, cross={grid.cross}, hx={grid.hx}, hy={grid.hy})")


def gradient_per_cell(u: GridFunction) -> np.ndarray:
    """Constant gradient of the affine interpolant, per triangle (T, 2)."""
    grid = u.grid
    tri = grid.triangles()
    b = grid.gradient_coefficients()
    return np.einsum("tk,tkd->td", u.values[tri], b)


def _clip_polygon_halfplane(poly, axis, bound, keep_below):
    """Sutherland-Hodgman clip of polygon against one half-plane."""
    out = []
    n = len(poly)
    for k in range(n):
        cur = poly[k]
        nxt = poly[(k + 1) % n]
        cur_in = (cur[axis] <= bound) if keep_below else (cur[axis] >= bound)
        nxt_in = (nxt[axis] <= bound) if keep_below else (nxt[axis] >= bound)
        if cur_in:
            out.append(cur)
        if cur_in != nxt_in:
            t = (bound - cur[axis]) / (nxt[axis] - cur[axis])
            out.append((cur[0] + t * (nxt[0] - cur[0]),
                        cur[1] + t * (nxt[1] - cur[1])))
    return out


def _polygon_area(poly) -> float:
    if len(poly) < 3:
        return 0.0
    area = 0.0
    n = len(poly)
    for k in range(n):
        x0, y0 = poly[k]
        x1, y1 = poly[(k + 1) % n]
        area += x0 * y1 - x1 * y0
    return 0.5 * abs(area)


def _triangle_window_overlap(coords, w: Window) -> float:
    """Exact overlap area of one triangle with the window rectangle."""
    poly = [tuple(pt) for pt in coords]
    for axis, bound, keep_below in ((0, w.x_hi, True), (0, w.x_lo, False),
                                    (1, w.y_hi, True), (1, w.y_lo, False)):
        poly = _clip_polygon_halfplane(poly, axis, bound, keep_below)
        if not poly:
            return 0.0
    return _polygon_area(poly)


def triangle_window_weights(grid: RectGrid, w: Window) -> np.ndarray:
    """Overlap area with the window, per triangle.

    Fully inside and fully outside triangles are classified from bounding
    boxes; only the boundary band is clipped exactly.
    """
    tri = grid.triangles()
    X, Y = grid.node_coords()
    tx = X[tri]
    ty = Y[tri]
    xmin, xmax = tx.min(axis=1), tx.max(axis=1)
    ymin, ymax = ty.min(axis=1), ty.max(axis=1)
    inside = ((xmin >= w.x_lo) & (xmax <= w.x_hi) &
              (ymin >= w.y_lo) & (ymax <= w.y_hi))
    outside = ((xmax <= w.x_lo) | (xmin >= w.x_hi) |
               (ymax <= w.y_lo) | (ymin >= w.y_hi))
    weights = np.zeros(len(tri))
    weights[inside] = grid.triangle_area()
    band = ~inside & ~outside
    for t in np.flatnonzero(band):
        weights[t] = _triangle_window_overlap(
            np.stack([tx[t], ty[t]], axis=1), w)
    return weights


def lp_norm_gradient(u: GridFunction, p: float, w: Window) -> float:
    """|| grad u ||_{L^p(w)} with exact partial-cell area weighting."""
    require_window_inside(u.grid, w)
    weights = triangle_window_weights(u.grid, w)
    g = gradient_per_cell(u)
    mag = np.hypot(g[:, 0], g[:, 1])
    return float(np.sum(weights * mag ** p) ** (1.0 / p))


def window_node_mask(grid: RectGrid, w: Window) -> np.ndarray:
    """Boolean mask of nodes lying in the closed window."""
    X, Y = grid.node_coords()
    tiny = 1e-12 * max(grid.hx, grid.hy)
    return ((X >= w.x_lo - tiny) & (X <= w.x_hi + tiny) &
            (Y >= w.y_lo - tiny) & (Y <= w.y_hi + tiny))


def embed_cross_section(prof: "CrossProfile", g: RectGrid) -> GridFunction:
    """Extend a cross-sectional profile constantly along the cylinder axis.

    The profile interval must coincide with the grid cross-section; nodal
    ordinates that differ from the profile's grid are filled by linear
    interpolation.
    """
    y0, y1 = prof.interval
    gy0, gy1 = g.cross
    if abs(y0 - gy0) > 1e-12 * (1 + abs(gy0)) or \
            abs(y1 - gy1) > 1e-12 * (1 + abs(gy1)):
        raise ValueError(
            f"profile interval ({y0}, {y1}) does not match the grid "
            f"cross-section {g.cross}")
    column = np.interp(g.y, prof.y, prof.values)
    return GridFunction(g, np.repeat(column, g.nx))


def cutoff_function(inner: Window, outer: Window, g: RectGrid) -> GridFunction:
    """Piecewise-linear cutoff: 1 on inner, 0 outside outer.

    Nodal values sample the ramp ``min over sides of (distance to the
    outer side) / (margin of that side)``, clipped to [0, 1]; the
    interpolant's gradient is bounded by 2/gap, where gap is the smallest
    margin (the exact ramp slope is 1/margin per side, and triangles
    straddling the two anti-diagonal ramp corners reach sqrt(2) times
    that).
    """
    if not outer.contains(inner) or inner == outer:
        raise ValueError("inner window must be strictly inside outer")
    margins = inner.margins_to(outer)
    if min(margins) <= 0:
        raise ValueError(
            f"inner window must be strictly inside outer; margins {margins}")
    require_window_inside(g, outer)
    ml, mr, mb, mt = margins
    X, Y = g.node_coords()
    ramp = np.minimum.reduce([(X - outer.x_lo) / ml, (outer.x_hi - X) / mr,
                              (Y - outer.y_lo) / mb, (outer.y_hi - Y) / mt])
    return GridFunction(g, np.clip(ramp, 0.0, 1.0))


def write_grid_function(u: GridFunction, path, sidecar_path=None):
    """CSV (x, y, value) in row-major node order, plus a JSON sidecar."""
    X, Y = u.grid.node_coords()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "value"])
        for x, y, v in zip(X, Y, u.values):
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
    if sidecar_path is not None:
        meta = {"ell": u.grid.ell, "cross": list(u.grid.cross),
                "nx": u.grid.nx, "ny": u.grid.ny}
        with open(sidecar_path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
