"""Zeros of the induced metric: detection, classification, kinematics.

The cusp locus is where the determinant-like combination of transport matrix
entries vanishes.  Detection thresholds the squared combination (scale-free in
kappa), flood-fills connected lattice regions, and classifies each region as a
point-like event or a finite-duration diamond; for diamonds the degenerate
light-like segment is verified directly on the reconstructed embedding.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .transport import null_vector
from .worldsheet import WorldSheetGrid, combination_grid, minkowski_dot

DEFAULT_CUSP_TOL = 1e-10
DIAMOND_FILL_MIN = 0.5


class CuspTrackError(ValueError):
    """A cusp trajectory cannot be tracked over enough time slices."""


@dataclass
class DiamondDescriptor:
    """Fitted light-cone diamond enclosing a two-dimensional zero region."""

    center_s: float
    half_width: float
    t_start: float
    t_end: float
    xi_plus_range: tuple[float, float]
    xi_minus_range: tuple[float, float]

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass
class CuspEvent:
    kind: str                                  # "isolated" | "stable_diamond"
    t: Optional[float] = None                  # refined location (isolated)
    s: Optional[float] = None
    diamond: Optional[DiamondDescriptor] = None
    null_direction: Optional[np.ndarray] = None
    residual: float = 0.0                      # max |metric| over the zero set
    fill_fraction: Optional[float] = None
    cells: int = 0
    cell_indices: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "cells": self.cells, "residual": self.residual}
        if self.kind == "isolated":
            out["t"] = self.t
            out["s"] = self.s
        else:
            d = self.diamond
            out.update({
                "center_s": d.center_s, "half_width": d.half_width,
                "t_start": d.t_start, "t_end": d.t_end, "duration": d.duration,
                "fill_fraction": self.fill_fraction,
                "null_direction": list(self.null_direction),
            })
        return out


def _flood_fill_labels(mask: np.ndarray):
    """4-connected component labels of a boolean lattice (BFS)."""
    labels = np.full(mask.shape, -1, dtype=int)
    regions = []
    nt, ns = mask.shape
    for i0, j0 in zip(*np.nonzero(mask)):
        if labels[i0, j0] >= 0:
            continue
        label = len(regions)
        cells = []
        queue = deque([(i0, j0)])
        labels[i0, j0] = label
        while queue:
            i, j = queue.popleft()
            cells.append((i, j))
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = i + di, j + dj
                if 0 <= a < nt and 0 <= b < ns and mask[a, b] and labels[a, b] < 0:
                    labels[a, b] = label
                    queue.append((a, b))
        regions.append(np.array(cells))
    return regions


def _parabolic_vertex(y_minus: float, y_center: float, y_plus: float) -> float:
    """Sub-grid offset of the parabola vertex through three samples, in cells."""
    denom = y_minus - 2.0 * y_center + y_plus
    if denom <= 0 or not np.isfinite(denom):
        return 0.0
    off = 0.5 * (y_minus - y_plus) / denom
    return float(np.clip(off, -0.5, 0.5))


def _refine_isolated(c2: np.ndarray, i: int, j: int, t_grid, s_grid):
    h = t_grid[1] - t_grid[0] if len(t_grid) > 1 else s_grid[1] - s_grid[0]
    t_ref = t_grid[i]
    s_ref = s_grid[j]
    if 0 < i < c2.shape[0] - 1:
        t_ref += h * _parabolic_vertex(c2[i - 1, j], c2[i, j], c2[i + 1, j])
    if 0 < j < c2.shape[1] - 1:
        s_ref += h * _parabolic_vertex(c2[i, j - 1], c2[i, j], c2[i, j + 1])
    return float(t_ref), float(s_ref)


def detect(tplus, tminus, grid: WorldSheetGrid,
           tol: float = DEFAULT_CUSP_TOL) -> list[CuspEvent]:
    """All maximal connected lattice regions where the metric vanishes.

    A region is flagged where |combination|^2 <= tol (equivalently
    |metric| <= tol * kappa^2 / 2, independent of kappa).  Point-like regions
    are refined sub-grid; extended regions with two-dimensional extent and a
    well-filled enclosing light-cone diamond are reported as finite-duration
    events.  Thin extended regions (moving zero curves) are reported as
    point-like events at their deepest cell.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    t_grid, s_grid = grid.t_grid, grid.s_grid
    h = grid.spacing
    c = combination_grid(tplus, tminus, t_grid, s_grid)
    c2 = np.abs(c) ** 2
    mask = c2 <= tol
    events = []
    for cells in _flood_fill_labels(mask):
        ii, jj = cells[:, 0], cells[:, 1]
        u = t_grid[ii] + s_grid[jj]
        v = s_grid[jj] - t_grid[ii]
        du = float(u.max() - u.min())
        dv = float(v.max() - v.min())
        residual = 0.5 * grid.kappa ** 2 * float(c2[ii, jj].max())

        fill = None
        if du >= 2.0 * h - 1e-9 * h and dv >= 2.0 * h - 1e-9 * h:
            u_all = t_grid[:, None] + s_grid[None, :]
            v_all = s_grid[None, :] - t_grid[:, None]
            in_box = ((u_all >= u.min() - 1e-9 * h) & (u_all <= u.max() + 1e-9 * h)
                      & (v_all >= v.min() - 1e-9 * h) & (v_all <= v.max() + 1e-9 * h))
            fill = float(len(cells)) / float(in_box.sum())

        if fill is not None and fill >= DIAMOND_FILL_MIN:
            u_mid = 0.5 * float(u.min() + u.max())
            v_mid = 0.5 * float(v.min() + v.max())
            bu = 0.5 * du
            bv = 0.5 * dv
            desc = DiamondDescriptor(
                center_s=0.5 * (u_mid + v_mid),
                half_width=0.5 * (bu + bv),
                t_start=0.5 * (float(u.min()) - float(v.max())),
                t_end=0.5 * (float(u.max()) - float(v.min())),
                xi_plus_range=(float(u.min()), float(u.max())),
                xi_minus_range=(float(v.min()), float(v.max())),
            )
            direction = null_vector(tplus.at(_nearest_on_grid(tplus, u_mid)), "+")
            events.append(CuspEvent(kind="stable_diamond", diamond=desc,
                                    null_direction=direction, residual=residual,
                                    fill_fraction=fill, cells=len(cells),
                                    cell_indices=cells))
        else:
            k = int(np.argmin(c2[ii, jj]))
            t_ref, s_ref = _refine_isolated(c2, int(ii[k]), int(jj[k]), t_grid, s_grid)
            events.append(CuspEvent(kind="isolated", t=t_ref, s=s_ref,
                                    residual=residual, cells=len(cells),
                                    cell_indices=cells))
    events.sort(key=lambda e: e.t if e.t is not None else e.diamond.t_start)
    return events


def _nearest_on_grid(solution, xi: float) -> float:
    k = int(round((xi - solution.grid_start) / solution.grid_step))
    k = max(0, min(len(solution.samples) - 1, k))
    return solution.grid_start + k * solution.grid_step


@dataclass
class SegmentCheck:
    name: str
    max_deviation: float
    tolerance: float
    location: Optional[tuple[float, float]]

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance


@dataclass
class DegenerateSegmentReport:
    checks: list[SegmentCheck]
    segment_null_norm: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "segment_null_norm": self.segment_null_norm,
            "checks": [{"name": c.name, "max_deviation": c.max_deviation,
                        "tolerance": c.tolerance, "passed": c.passed,
                        "location": c.location} for c in self.checks],
        }


def verify_degenerate_segment(event: CuspEvent, grid: WorldSheetGrid,
                              line_tol: Optional[float] = None,
                              dxds_tol: Optional[float] = None,
                              null_tol: Optional[float] = None) -> DegenerateSegmentReport:
    """Check that a diamond region collapses to a light-like line segment.

    (i)  X(t, s) stays on the line X_ref + kappa (t - t_ref) * 2e over the
         open interior (e is the common frame vector, time component 1/2);
    (ii) dX/ds vanishes there (the s-parametrization is degenerate);
    (iii) the reported direction is light-like.

    Default tolerances scale with the grid step squared.
    """
    if event.kind != "stable_diamond":
        raise ValueError("degenerate-segment check applies to diamond events")
    h = grid.spacing
    kappa = grid.kappa
    if line_tol is None:
        line_tol = 10.0 * h * h * kappa
    if dxds_tol is None:
        dxds_tol = 10.0 * h * h * kappa
    if null_tol is None:
        null_tol = 1e-12

    d = event.diamond
    t_grid, s_grid = grid.t_grid, grid.s_grid
    u_all = t_grid[:, None] + s_grid[None, :]
    v_all = s_grid[None, :] - t_grid[:, None]
    interior = ((u_all > d.xi_plus_range[0] + 0.5 * h)
                & (u_all < d.xi_plus_range[1] - 0.5 * h)
                & (v_all > d.xi_minus_range[0] + 0.5 * h)
                & (v_all < d.xi_minus_range[1] - 0.5 * h))

    e = event.null_direction
    null_norm = float(abs(minkowski_dot(e, e)))

    ii, jj = np.nonzero(interior)
    if ii.size == 0:
        raise ValueError("diamond interior contains no lattice points; refine the grid")
    t_c = 0.5 * (d.t_start + d.t_end)
    k_ref = int(np.argmin((t_grid[ii] - t_c) ** 2 + (s_grid[jj] - d.center_s) ** 2))
    i_ref, j_ref = int(ii[k_ref]), int(jj[k_ref])
    x_ref = grid.x[i_ref, j_ref]
    predicted = (x_ref[None, :]
                 + kappa * (t_grid[ii] - t_grid[i_ref])[:, None] * (2.0 * e)[None, :])
    dev_line = np.linalg.norm(grid.x[ii, jj] - predicted, axis=1)
    k_worst = int(np.argmax(dev_line))
    line_check = SegmentCheck(
        name="on_light_like_line", max_deviation=float(dev_line.max()),
        tolerance=line_tol,
        location=(float(t_grid[ii[k_worst]]), float(s_grid[jj[k_worst]])))

    # dX/ds by central differences, restricted so both neighbors stay in the
    # closed diamond (boundary excluded from the open-interior claim)
    can = interior.copy()
    can[:, 0] = False
    can[:, -1] = False
    ii2, jj2 = np.nonzero(can)
    dxds = (grid.x[ii2, jj2 + 1] - grid.x[ii2, jj2 - 1]) / (2.0 * h)
    norms = np.linalg.norm(dxds, axis=1)
    k_worst = int(np.argmax(norms)) if norms.size else 0
    ds_check = SegmentCheck(
        name="degenerate_s_parametrization",
        max_deviation=float(norms.max()) if norms.size else 0.0,
        tolerance=dxds_tol,
        location=(float(t_grid[ii2[k_worst]]), float(s_grid[jj2[k_worst]]))
        if norms.size else None)

    null_check = SegmentCheck(name="null_direction", max_deviation=null_norm,
                              tolerance=null_tol, location=None)

    # light-likeness of the swept segment end to end
    order = np.lexsort((s_grid[jj], t_grid[ii]))
    dx_seg = grid.x[ii[order[-1]], jj[order[-1]]] - grid.x[ii[order[0]], jj[order[0]]]
    seg_norm = float(abs(minkowski_dot(dx_seg, dx_seg)))

    return DegenerateSegmentReport(checks=[line_check, ds_check, null_check],
                                   segment_null_norm=seg_norm)


def cusp_speed(event: CuspEvent, grid: WorldSheetGrid) -> float:
    """Spatial speed of the tracked cusp in units of c.

    Per time slice the cusp sits at the argmin of the squared combination
    (parabolic sub-grid refinement); the speed is the median of centered
    differences of the spatial position against the physical time X0.
    """
    c = combination_grid(grid.transport_plus, grid.transport_minus,
                         grid.t_grid, grid.s_grid)
    c2 = np.abs(c) ** 2
    t_grid, s_grid = grid.t_grid, grid.s_grid
    h = grid.spacing

    if event.kind == "stable_diamond":
        t_lo, t_hi = event.diamond.t_start + h, event.diamond.t_end - h
    else:
        cells = event.cell_indices
        if cells is None or len(cells) == 0:
            raise CuspTrackError("event carries no lattice cells to track")
        t_lo, t_hi = t_grid[cells[:, 0].min()], t_grid[cells[:, 0].max()]
    rows = np.nonzero((t_grid >= t_lo - 1e-9 * h) & (t_grid <= t_hi + 1e-9 * h))[0]
    if len(rows) < 3:
        raise CuspTrackError(
            f"cusp trackable on {len(rows)} time slices; need at least 3")

    if event.kind == "stable_diamond":
        s_lo, s_hi = (event.diamond.center_s - event.diamond.half_width - h,
                      event.diamond.center_s + event.diamond.half_width + h)
    else:
        s_lo = s_grid[event.cell_indices[:, 1].min()] - h
        s_hi = s_grid[event.cell_indices[:, 1].max()] + h
    cols = np.nonzero((s_grid >= s_lo) & (s_grid <= s_hi))[0]

    positions = []
    times = []
    for i in rows:
        row = c2[i, cols]
        j_loc = int(np.argmin(row))
        j = int(cols[j_loc])
        off = 0.0
        if 0 < j < len(s_grid) - 1:
            off = _parabolic_vertex(c2[i, j - 1], c2[i, j], c2[i, j + 1])
        if off >= 0 and j + 1 < len(s_grid):
            x = (1 - off) * grid.x[i, j] + off * grid.x[i, j + 1]
        elif j > 0:
            x = (1 + off) * grid.x[i, j] + (-off) * grid.x[i, j - 1]
        else:
            x = grid.x[i, j]
        positions.append(x[1:])
        times.append(x[0])
    positions = np.asarray(positions)
    times = np.asarray(times)
    speeds = (np.linalg.norm(positions[2:] - positions[:-2], axis=1)
              / (times[2:] - times[:-2]))
    return float(np.median(speeds))


@dataclass
class PlanarRegion:
    """Planarity assessment of the spatial tangent directions over a domain."""

    t_range: tuple[float, float]
    s_range: tuple[float, float]
    singular_values: np.ndarray
    rank: int
    planar: bool
    normal: Optional[np.ndarray]

    def to_dict(self) -> dict:
        return {
            "t_range": list(self.t_range), "s_range": list(self.s_range),
            "singular_values": [float(x) for x in self.singular_values],
            "rank": self.rank, "planar": self.planar,
            "normal": list(self.normal) if self.normal is not None else None,
        }


def detect_planar_region(tplus, tminus, grid: WorldSheetGrid,
                         tol: float = 1e-10) -> list[PlanarRegion]:
    """Assess whether the spatial tangents over the grid span only a 2-plane.

    Stacks the spatial parts of both chiral frame vectors over the cone ranges
    the grid touches and reports the singular-value spectrum; the third
    singular value vanishes exactly when the sheet is planar (for purely real
    profiles the transport stays in the real rotation subgroup and the second
    spatial component of every tangent is identically zero).
    """
    from .transport import null_vectors

    t_grid, s_grid = grid.t_grid, grid.s_grid
    u_lo, u_hi = t_grid[0] + s_grid[0], t_grid[-1] + s_grid[-1]
    v_lo, v_hi = s_grid[0] - t_grid[-1], s_grid[-1] - t_grid[0]
    ep = null_vectors(tplus)
    em = null_vectors(tminus)
    sel_p = (tplus.xi_grid >= u_lo - 1e-12) & (tplus.xi_grid <= u_hi + 1e-12)
    sel_m = (tminus.xi_grid >= v_lo - 1e-12) & (tminus.xi_grid <= v_hi + 1e-12)
    tangents = np.vstack([ep[sel_p][:, 1:], em[sel_m][:, 1:]])
    _, sing, vt = np.linalg.svd(tangents, full_matrices=False)
    sing = np.pad(sing, (0, max(0, 3 - len(sing))))
    rank = int(np.sum(sing > tol))
    planar = sing[2] <= tol
    normal = vt[2] if planar and vt.shape[0] >= 3 else None
    return [PlanarRegion(
        t_range=(float(t_grid[0]), float(t_grid[-1])),
        s_range=(float(s_grid[0]), float(s_grid[-1])),
        singular_values=sing[:3], rank=rank, planar=planar, normal=normal)]
