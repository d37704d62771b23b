"""Separable short-range potential sourced by the string at fixed time.

One momentum-space matrix element is

    coupling * chi(p) * chi(p') * integral e^{-i (p - p') . x(t, s)} g(s) ds,

with a hard momentum cutoff chi(q) = 1 for |q| <= 1/cutoff_scale and a smooth
form factor g that is exactly 1 on a plateau [-R, R] and decays to 0 through
C-infinity tails of prescribed width.  Quadrature is composite Simpson on a
uniform refinement of the lattice s-samples, fine enough to resolve both the
oscillation of the phase and the form-factor tails; the string position is
linearly interpolated between lattice columns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .worldsheet import WorldSheetGrid

OSCILLATION_POINTS = 20  # quadrature points per phase period


@dataclass(frozen=True)
class KernelConfig:
    coupling: float           # < 0
    cutoff_scale: float       # a > 0; momenta pass for |p| <= 1/a
    plateau_half_width: float  # R
    tail_width: float          # decay width of g beyond the plateau

    def __post_init__(self):
        if not self.coupling < 0:
            raise ValueError(f"coupling must be negative, got {self.coupling}")
        if not self.cutoff_scale > 0:
            raise ValueError(f"cutoff scale must be positive, got {self.cutoff_scale}")
        if not self.plateau_half_width > 0:
            raise ValueError(
                f"plateau half-width must be positive, got {self.plateau_half_width}")
        if not self.tail_width > 0:
            raise ValueError(f"tail width must be positive, got {self.tail_width}")

    @property
    def support_half_width(self) -> float:
        return self.plateau_half_width + self.tail_width


def _smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity transition from 1 at u <= 0 to 0 at u >= 1."""
    out = np.zeros_like(u)
    out[u <= 0.0] = 1.0
    mid = (u > 0.0) & (u < 1.0)
    if np.any(mid):
        um = u[mid]
        a = np.exp(-1.0 / um)
        b = np.exp(-1.0 / (1.0 - um))
        out[mid] = b / (a + b)
    return out


def form_factor(s, cfg: KernelConfig):
    """g(s): 1 on the plateau, C-infinity tails, 0 beyond; 0 <= g <= 1."""
    s_arr = np.asarray(s, dtype=float)
    u = (np.abs(s_arr) - cfg.plateau_half_width) / cfg.tail_width
    g = _smooth_step(u)
    return float(g[()]) if s_arr.ndim == 0 else g


def momentum_passes(p, cfg: KernelConfig) -> bool:
    return float(np.linalg.norm(np.asarray(p, dtype=float))) <= 1.0 / cfg.cutoff_scale


def _simpson(y: np.ndarray, dx: float) -> complex:
    """Composite Simpson rule on a uniform grid with an even interval count."""
    n = len(y) - 1
    if n % 2 != 0:
        raise ValueError("Simpson rule needs an even number of intervals")
    return complex(dx / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def matrix_element(p, p_prime, t: float, grid: WorldSheetGrid,
                   cfg: KernelConfig, max_step: float | None = None) -> complex:
    """One matrix element of the separable potential at lattice time t.

    The lattice s-range must cover the support of g; t must lie on the grid.
    `max_step` overrides the automatic quadrature step (refinement studies).
    """
    p = np.asarray(p, dtype=float)
    q = p - np.asarray(p_prime, dtype=float)
    if not (momentum_passes(p, cfg) and momentum_passes(p_prime, cfg)):
        return 0.0 + 0.0j

    half = cfg.support_half_width
    s_grid = grid.s_grid
    if s_grid[0] > -half + 1e-12 or s_grid[-1] < half - 1e-12:
        raise ValueError(
            f"lattice s-range [{s_grid[0]:.6g}, {s_grid[-1]:.6g}] does not cover "
            f"the form-factor support [-{half:.6g}, {half:.6g}]")
    h = grid.spacing
    i = int(round((t - grid.t_grid[0]) / h))
    if not (0 <= i < len(grid.t_grid)) or abs(grid.t_grid[i] - t) > 1e-9 * (1.0 + abs(t)):
        raise ValueError(f"t = {t} does not lie on the lattice time grid")

    qnorm = float(np.linalg.norm(q))
    step = h
    if qnorm > 0:
        step = min(step, 2.0 * np.pi / qnorm / OSCILLATION_POINTS)
    step = min(step, cfg.tail_width / 4.0)
    if max_step is not None:
        step = min(step, float(max_step))
    n = int(np.ceil(2.0 * half / step))
    if n % 2 == 1:
        n += 1
    s = np.linspace(-half, half, n + 1)
    dx = s[1] - s[0]

    x_row = grid.x[i, :, 1:]  # spatial components along the slice
    phase = np.zeros_like(s)
    for comp in range(3):
        if q[comp] != 0.0:
            phase += q[comp] * np.interp(s, s_grid, x_row[:, comp])
    integrand = np.exp(-1.0j * phase) * form_factor(s, cfg)
    return cfg.coupling * _simpson(integrand, dx)


def matrix_element_table(momenta, t: float, grid: WorldSheetGrid,
                         cfg: KernelConfig) -> list[tuple[np.ndarray, np.ndarray, complex]]:
    """All ordered pairs from a momentum list; rows (p, p_prime, value)."""
    momenta = [np.asarray(p, dtype=float) for p in momenta]
    out = []
    for p in momenta:
        for p_prime in momenta:
            out.append((p, p_prime, matrix_element(p, p_prime, t, grid, cfg)))
    return out
