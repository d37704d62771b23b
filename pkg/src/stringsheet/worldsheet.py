"""World-sheet assembly and the fundamental forms.

The embedding is rebuilt from the two chiral frame vectors by cumulative
trapezoid integration along the cone variables,

    X(t, s) = X0 + kappa * (int_0^{s+t} e_plus - int_0^{s-t} e_minus),

with the orientation fixed so dX/dt points forward in time and the time
component obeys X0(t, s) = X0 + kappa * t exactly.  The induced-metric
coefficient dX_plus . dX_minus is evaluated in closed form from the transport
matrix entries; its zeros are the cusp locus.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transport import TransportSolution, null_vectors, xi_index_grids

ETA = np.array([1.0, -1.0, -1.0, -1.0])


class PhaseUndefinedError(ValueError):
    """A curvature-form phase was requested where it is not defined."""


def minkowski_dot(x, y):
    """Minkowski inner product with signature (+,-,-,-) on the last axis."""
    return (np.asarray(x) * np.asarray(y)) @ ETA


@dataclass
class WorldSheetGrid:
    """Embedding samples on a rectangular (t, s) lattice.

    Carries the scale kappa, the base point x0, and references to the
    transport solutions it was built from (read-only provenance used by
    downstream queries such as cusp tracking).
    """

    kappa: float
    x0: np.ndarray                # (4,)
    t_grid: np.ndarray
    s_grid: np.ndarray
    x: np.ndarray                 # (nt, ns, 4)
    transport_plus: TransportSolution
    transport_minus: TransportSolution

    @property
    def spacing(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0]) if len(self.t_grid) > 1 \
            else float(self.s_grid[1] - self.s_grid[0])

    def index_of(self, t: float, s: float):
        h = self.spacing
        i = int(round((t - self.t_grid[0]) / h))
        j = int(round((s - self.s_grid[0]) / h))
        if not (0 <= i < len(self.t_grid) and 0 <= j < len(self.s_grid)):
            raise IndexError(f"(t, s) = ({t}, {s}) outside the lattice")
        return i, j


def _cumulative_frame_integral(solution: TransportSolution) -> np.ndarray:
    """Prefix trapezoid integral of the frame vectors from the grid start."""
    e = null_vectors(solution)
    h = solution.grid_step
    inc = 0.5 * h * (e[1:] + e[:-1])
    out = np.zeros_like(e)
    np.cumsum(inc, axis=0, out=out[1:])
    return out


def reconstruct(tplus: TransportSolution, tminus: TransportSolution,
                kappa: float, x0, t_grid, s_grid) -> WorldSheetGrid:
    """Assemble X(t, s) on the lattice by cumulative frame integration.

    Composite trapezoid with prefix sums per chirality (O(grid) work); the
    lattice must map exactly onto the xi samples.  The time component is set
    exactly from the gauge; the minus-chirality integral enters with a minus
    sign so dX/dt = kappa * (e_plus + e_minus) is future-directed.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (4,):
        raise ValueError("x0 must be a 4-vector")
    t_grid = np.asarray(t_grid, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    idx_plus, idx_minus = xi_index_grids(tplus, tminus, t_grid, s_grid)
    kp0 = tplus.index_of(0.0)
    km0 = tminus.index_of(0.0)
    cum_plus = _cumulative_frame_integral(tplus)
    cum_minus = _cumulative_frame_integral(tminus)
    x = x0 + kappa * ((cum_plus[idx_plus] - cum_plus[kp0])
                      - (cum_minus[idx_minus] - cum_minus[km0]))
    # the two time integrands are both exactly 1/2, so the gauge is exact
    x[..., 0] = x0[0] + kappa * t_grid[:, None]
    return WorldSheetGrid(kappa=float(kappa), x0=x0.copy(), t_grid=t_grid,
                          s_grid=s_grid, x=x,
                          transport_plus=tplus, transport_minus=tminus)


def combination_grid(tplus: TransportSolution, tminus: TransportSolution,
                     t_grid, s_grid) -> np.ndarray:
    """Determinant-like combination t11+ t22- - t12+ t21- on the lattice."""
    idx_plus, idx_minus = xi_index_grids(tplus, tminus, t_grid, s_grid)
    p11, p12, _, _ = tplus.entries()
    _, _, m21, m22 = tminus.entries()
    return p11[idx_plus] * m22[idx_minus] - p12[idx_plus] * m21[idx_minus]


def combination(tplus: TransportSolution, tminus: TransportSolution,
                t: float, s: float) -> complex:
    tp = tplus.at(s + t)
    tm = tminus.at(s - t)
    return complex(tp[0, 0] * tm[1, 1] - tp[0, 1] * tm[1, 0])


def metric_coefficient(tplus: TransportSolution, tminus: TransportSolution,
                       t: float, s: float, kappa: float = 1.0) -> float:
    """Induced-metric coefficient dX+ . dX- = -kappa^2/2 |combination|^2."""
    c = combination(tplus, tminus, t, s)
    return -0.5 * kappa ** 2 * abs(c) ** 2


def metric_grid(tplus: TransportSolution, tminus: TransportSolution,
                t_grid, s_grid, kappa: float = 1.0) -> np.ndarray:
    c = combination_grid(tplus, tminus, t_grid, s_grid)
    return -0.5 * kappa ** 2 * np.abs(c) ** 2


@dataclass
class ConstraintResiduals:
    max_null_plus: float
    max_null_minus: float
    max_wave: float
    spacing: float


def constraint_residuals(grid: WorldSheetGrid) -> ConstraintResiduals:
    """Finite-difference residuals of the null constraints and wave equation.

    Light-cone derivatives are one-cell diagonal differences (second order at
    the cell midpoints); the mixed derivative uses the standard cross stencil.
    """
    x = grid.x
    if x.shape[0] < 3 or x.shape[1] < 3:
        raise ValueError("need at least 3 lattice points per axis")
    h = grid.spacing
    dplus = (x[1:, 1:] - x[:-1, :-1]) / (2.0 * h)
    dminus = (x[:-1, 1:] - x[1:, :-1]) / (2.0 * h)
    null_plus = np.abs(minkowski_dot(dplus, dplus))
    null_minus = np.abs(minkowski_dot(dminus, dminus))
    cross = (x[1:-1, 2:] + x[1:-1, :-2] - x[2:, 1:-1] - x[:-2, 1:-1]) / (4.0 * h * h)
    wave = np.linalg.norm(cross, axis=-1)
    return ConstraintResiduals(
        max_null_plus=float(null_plus.max()),
        max_null_minus=float(null_minus.max()),
        max_wave=float(wave.max()),
        spacing=h,
    )


@dataclass
class SecondFormSample:
    """Coefficient data of the pair of curvature forms at one lattice point."""

    modulus_plus: float
    modulus_minus: float
    phase_plus: float
    phase_minus: float
    beta: float
    chi: float


def second_forms(tplus: TransportSolution, tminus: TransportSolution,
                 fields, beta: float, t: float, s: float,
                 kappa: float = 1.0) -> SecondFormSample:
    """Curvature-form moduli kappa*|rho(xi)| and phases beta +- chi.

    chi = (Im phi + arg rho_plus + arg rho_minus)/2, with phi taken from the
    decomposed fields; undefined on the singular mask and at profile zeros.
    """
    from .transport import profile_values

    rho_p = complex(profile_values(tplus.profile, np.asarray(s + t))[()])
    rho_m = complex(profile_values(tminus.profile, np.asarray(s - t))[()])
    if rho_p == 0 or rho_m == 0:
        raise PhaseUndefinedError(
            f"phase undefined: chiral profile vanishes at (t, s) = ({t}, {s})")
    phi = fields.phi_at(t, s)   # raises PhaseUndefinedError on the mask
    chi = 0.5 * (phi.imag + np.angle(rho_p) + np.angle(rho_m))
    return SecondFormSample(
        modulus_plus=kappa * abs(rho_p),
        modulus_minus=kappa * abs(rho_m),
        phase_plus=beta + chi,
        phase_minus=beta - chi,
        beta=float(beta),
        chi=float(chi),
    )
