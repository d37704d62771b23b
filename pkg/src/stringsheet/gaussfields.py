"""Scalar fields from the frame-relating matrix field and their PDE system.

The SU(2)-valued field K(t, s) = T_plus(s+t) @ T_minus(s-t)^-1 relates the two
null frames.  Its triangular (Gauss) factorization defines complex scalars
(phi, alpha_plus, alpha_minus) through

    K = [[1, 0], [-alpha_plus, 1]] @ diag(e^{-phi/2}, e^{phi/2}) @ [[1, alpha_minus], [0, 1]],

undefined where the principal minor K11 vanishes (the cusp locus).  The
scalars satisfy the hyperbolic system

    d+ d- phi        = 2 rho_plus rho_minus e^phi,
    d-+ rho_-+       = 0,
    d+- alpha_-+     = rho_+- e^phi,

which this module checks by finite differences and also solves independently
as a characteristic-grid problem with data on the two axes xi_plus = 0 and
xi_minus = 0, giving a second route to the fields for cross-validation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .transport import (TransportSolution, profile_values, q_matrix,
                        xi_index_grids)
from .worldsheet import PhaseUndefinedError, combination_grid

DEFAULT_SINGULAR_THRESHOLD = 1e-6
OVERFLOW_GUARD = 200.0


class SingularMinorError(ValueError):
    """Triangular factorization requested where the principal minor vanishes."""


class GoursatBlowupError(RuntimeError):
    """The characteristic solver hit a blow-up of the source term."""

    def __init__(self, message, u=None, v=None):
        super().__init__(message)
        self.u = u
        self.v = v


def k_field(tplus: TransportSolution, tminus: TransportSolution,
            t: float, s: float) -> np.ndarray:
    """K(t, s) = T_plus(s+t) @ T_minus(s-t)^-1 (det-1, here unitary)."""
    tp = tplus.at(s + t)
    tm = tminus.at(s - t)
    inv = np.array([[tm[1, 1], -tm[0, 1]], [-tm[1, 0], tm[0, 0]]])
    return tp @ inv


def k_entry_grids(tplus: TransportSolution, tminus: TransportSolution,
                  t_grid, s_grid):
    """Entry arrays (K11, K12, K21, K22) over the (t, s) lattice."""
    idx_plus, idx_minus = xi_index_grids(tplus, tminus, t_grid, s_grid)
    p11, p12, p21, p22 = tplus.entries()
    m11, m12, m21, m22 = tminus.entries()
    a11, a12, a21, a22 = (m22[idx_minus], -m12[idx_minus],
                          -m21[idx_minus], m11[idx_minus])
    k11 = p11[idx_plus] * a11 + p12[idx_plus] * a21
    k12 = p11[idx_plus] * a12 + p12[idx_plus] * a22
    k21 = p21[idx_plus] * a11 + p22[idx_plus] * a21
    k22 = p21[idx_plus] * a12 + p22[idx_plus] * a22
    return k11, k12, k21, k22


def gauss_decompose(k: np.ndarray, branch_anchor: complex = 0.0,
                    threshold: float = DEFAULT_SINGULAR_THRESHOLD):
    """Triangular factorization of one det-1 matrix.

    Returns (phi, alpha_plus, alpha_minus) with phi = -2 log(K11) on the
    branch nearest `branch_anchor`; raises SingularMinorError when
    |K11| <= threshold (a cusp-adjacent point).
    """
    k = np.asarray(k, dtype=complex)
    k11 = k[0, 0]
    if abs(k11) <= threshold:
        raise SingularMinorError(f"principal minor |K11| = {abs(k11):.3e} <= {threshold}")
    phi = -2.0 * np.log(k11)
    branch = round((complex(branch_anchor).imag - phi.imag) / (4.0 * np.pi))
    phi = phi + 4.0j * np.pi * branch
    return complex(phi), complex(-k[1, 0] / k11), complex(k[0, 1] / k11)


def gauss_factors(phi: complex, alpha_plus: complex, alpha_minus: complex):
    """The three factor matrices (lower, diagonal, upper) of the decomposition."""
    lower = np.array([[1.0, 0.0], [-alpha_plus, 1.0]], dtype=complex)
    diag = np.array([[np.exp(-phi / 2.0), 0.0], [0.0, np.exp(phi / 2.0)]], dtype=complex)
    upper = np.array([[1.0, alpha_minus], [0.0, 1.0]], dtype=complex)
    return lower, diag, upper


# ---------------------------------------------------------------------------
# continued complex logarithm on lattices
# ---------------------------------------------------------------------------

def _fill_nan_1d(a: np.ndarray) -> np.ndarray:
    out = a.copy()
    bad = np.isnan(out)
    if not bad.any():
        return out
    idx = np.where(bad, 0, np.arange(len(out)))
    np.maximum.accumulate(idx, out=idx)
    out = out[idx]
    bad = np.isnan(out)
    if bad.any():
        rev = out[::-1]
        idx = np.where(np.isnan(rev), 0, np.arange(len(rev)))
        np.maximum.accumulate(idx, out=idx)
        out = rev[idx][::-1]
    return np.where(np.isnan(out), 0.0, out)


def _fill_nan_rows(a: np.ndarray) -> np.ndarray:
    """Forward/backward fill of nan entries along axis 1."""
    out = a.copy()
    n_rows, n_cols = out.shape
    cols = np.arange(n_cols)[None, :]
    rows = np.arange(n_rows)[:, None]
    bad = np.isnan(out)
    if bad.any():
        idx = np.where(bad, 0, cols + np.zeros((n_rows, 1), dtype=int))
        np.maximum.accumulate(idx, axis=1, out=idx)
        out = out[rows, idx]
    bad = np.isnan(out)
    if bad.any():
        rev = out[:, ::-1]
        idx = np.where(np.isnan(rev), 0, cols + np.zeros((n_rows, 1), dtype=int))
        np.maximum.accumulate(idx, axis=1, out=idx)
        out = rev[rows, idx][:, ::-1]
    return np.where(np.isnan(out), 0.0, out)


def _continued_phase_2d(k11: np.ndarray, mask: np.ndarray):
    """Phase of k11 continued along lattice rows from the (0, 0) anchor.

    Masked cells are bridged by nearest-neighbor filling before unwrapping;
    cells where the continuation still jumps by more than pi/2 between
    neighbors are flagged as branch-jump cells.
    """
    phase = np.where(mask, np.nan, np.angle(k11))
    filled = _fill_nan_rows(phase)
    filled[:, 0] = np.unwrap(_fill_nan_1d(phase[:, 0].copy()))
    cont = np.unwrap(filled, axis=1)
    jumps = np.zeros(mask.shape, dtype=bool)
    dj = np.abs(np.diff(cont, axis=1)) > 0.5 * np.pi
    jumps[:, 1:] |= dj
    jumps[:, :-1] |= dj
    di = np.abs(np.diff(cont, axis=0)) > 0.5 * np.pi
    jumps[1:, :] |= di
    jumps[:-1, :] |= di
    # cells touching the mask inherit the flag: the continuation across a
    # bridged gap is not trusted for residual stencils
    for shift, axis in ((1, 0), (-1, 0), (1, 1), (-1, 1)):
        jumps |= np.roll(mask, shift, axis=axis)
    jumps &= ~mask
    return cont, jumps


def _decompose_lattice(k11, k12, k21, threshold):
    absk = np.abs(k11)
    mask = absk <= threshold
    cont_phase, jumps = _continued_phase_2d(k11, mask)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_abs = np.log(absk)
        phi = -2.0 * (log_abs + 1.0j * cont_phase)
        alpha_plus = -k21 / k11
        alpha_minus = k12 / k11
    phi[mask] = np.nan
    alpha_plus[mask] = np.nan
    alpha_minus[mask] = np.nan
    return phi, alpha_plus, alpha_minus, mask, jumps


@dataclass
class GaussFields:
    """Decomposed scalars sampled on the (t, s) lattice."""

    t_grid: np.ndarray
    s_grid: np.ndarray
    phi: np.ndarray             # (nt, ns) complex, nan on the mask
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray
    singular_mask: np.ndarray   # (nt, ns) bool
    branch_jump_mask: np.ndarray
    threshold: float

    @property
    def spacing(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0]) if len(self.t_grid) > 1 \
            else float(self.s_grid[1] - self.s_grid[0])

    def index_of(self, t: float, s: float):
        h = self.spacing
        i = int(round((t - self.t_grid[0]) / h))
        j = int(round((s - self.s_grid[0]) / h))
        if not (0 <= i < len(self.t_grid) and 0 <= j < len(self.s_grid)):
            raise IndexError(f"(t, s) = ({t}, {s}) outside the field lattice")
        return i, j

    def phi_at(self, t: float, s: float) -> complex:
        i, j = self.index_of(t, s)
        if self.singular_mask[i, j]:
            raise PhaseUndefinedError(
                f"phase undefined: (t, s) = ({t}, {s}) lies on the singular mask")
        return complex(self.phi[i, j])


def sample_fields(tplus: TransportSolution, tminus: TransportSolution,
                  t_grid, s_grid,
                  threshold: float = DEFAULT_SINGULAR_THRESHOLD) -> GaussFields:
    """Decompose K over the lattice with row-continued branches."""
    t_grid = np.asarray(t_grid, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    k11, k12, k21, _ = k_entry_grids(tplus, tminus, t_grid, s_grid)
    phi, ap, am, mask, jumps = _decompose_lattice(k11, k12, k21, threshold)
    return GaussFields(t_grid=t_grid, s_grid=s_grid, phi=phi, alpha_plus=ap,
                       alpha_minus=am, singular_mask=mask,
                       branch_jump_mask=jumps, threshold=threshold)


# ---------------------------------------------------------------------------
# finite-difference residuals of the hyperbolic system on the (t, s) lattice
# ---------------------------------------------------------------------------

@dataclass
class PdeResiduals:
    source: float        # d+ d- phi - 2 rho+ rho- e^phi
    chirality: float     # d-+ of the recovered rho+-
    gradient: float      # d+- alpha_-+ - rho_+- e^phi
    spacing: float
    points: int


def _valid_for_stencil(ok: np.ndarray) -> np.ndarray:
    """Interior points whose full 8-neighborhood (and center) is usable."""
    v = ok[1:-1, 1:-1].copy()
    v &= ok[2:, 1:-1] & ok[:-2, 1:-1] & ok[1:-1, 2:] & ok[1:-1, :-2]
    v &= ok[2:, 2:] & ok[:-2, :-2] & ok[2:, :-2] & ok[:-2, 2:]
    return v


def _dplus(f: np.ndarray, h: float) -> np.ndarray:
    """Light-cone derivative d/d(xi_plus) on interior lattice points."""
    return (f[2:, 2:] - f[:-2, :-2]) / (4.0 * h)


def _dminus(f: np.ndarray, h: float) -> np.ndarray:
    return (f[:-2, 2:] - f[2:, :-2]) / (4.0 * h)


def _cross(f: np.ndarray, h: float) -> np.ndarray:
    """Mixed light-cone second derivative d+ d- on interior points."""
    return (f[1:-1, 2:] + f[1:-1, :-2] - f[2:, 1:-1] - f[:-2, 1:-1]) / (4.0 * h * h)


def pde_residuals(fields: GaussFields, rho_plus, rho_minus) -> PdeResiduals:
    """Max finite-difference residuals of the three field equations.

    Evaluated off the singular mask and away from branch-jump cells; the
    chirality residual uses the rho recovered from the fields themselves, so
    it measures how exactly the recovered data split into single-variable
    functions.
    """
    h = fields.spacing
    u = fields.s_grid[None, :] + fields.t_grid[:, None]
    v = fields.s_grid[None, :] - fields.t_grid[:, None]
    rp = profile_values(rho_plus, u)
    rm = profile_values(rho_minus, v)
    ok = ~(fields.singular_mask | fields.branch_jump_mask)
    valid = _valid_for_stencil(ok)
    interior = (slice(1, -1), slice(1, -1))

    with np.errstate(invalid="ignore", over="ignore"):
        ephi = np.exp(fields.phi)
        res_a = np.abs(_cross(fields.phi, h)
                       - 2.0 * rp[interior] * rm[interior] * ephi[interior])
        res_c_plus = np.abs(_dplus(fields.alpha_minus, h) - rp[interior] * ephi[interior])
        res_c_minus = np.abs(_dminus(fields.alpha_plus, h) - rm[interior] * ephi[interior])

        rho_p_hat = np.full(fields.phi.shape, np.nan + 0j)
        rho_m_hat = np.full(fields.phi.shape, np.nan + 0j)
        rho_p_hat[interior] = _dplus(fields.alpha_minus, h) * np.exp(-fields.phi[interior])
        rho_m_hat[interior] = _dminus(fields.alpha_plus, h) * np.exp(-fields.phi[interior])
        res_b_plus = np.abs(_dminus(rho_p_hat, h))
        res_b_minus = np.abs(_dplus(rho_m_hat, h))

    valid_b = _valid_for_stencil(np.pad(valid, 1, constant_values=False))

    def vmax(arr, mask):
        vals = arr[mask]
        vals = vals[np.isfinite(vals)]
        return float(vals.max()) if vals.size else 0.0

    return PdeResiduals(
        source=vmax(res_a, valid),
        chirality=max(vmax(res_b_plus, valid_b), vmax(res_b_minus, valid_b)),
        gradient=max(vmax(res_c_plus, valid), vmax(res_c_minus, valid)),
        spacing=h,
        points=int(valid.sum()),
    )


def recovered_profile_error(fields: GaussFields, rho_plus, rho_minus) -> float:
    """Max deviation of (d+- alpha_-+) e^{-phi} from the input profiles."""
    h = fields.spacing
    u = fields.s_grid[None, :] + fields.t_grid[:, None]
    v = fields.s_grid[None, :] - fields.t_grid[:, None]
    rp = profile_values(rho_plus, u)
    rm = profile_values(rho_minus, v)
    ok = ~(fields.singular_mask | fields.branch_jump_mask)
    valid = _valid_for_stencil(ok)
    interior = (slice(1, -1), slice(1, -1))
    with np.errstate(invalid="ignore", over="ignore"):
        dev_p = np.abs(_dplus(fields.alpha_minus, h) * np.exp(-fields.phi[interior])
                       - rp[interior])
        dev_m = np.abs(_dminus(fields.alpha_plus, h) * np.exp(-fields.phi[interior])
                       - rm[interior])
    vals = np.concatenate([dev_p[valid], dev_m[valid]])
    vals = vals[np.isfinite(vals)]
    return float(vals.max()) if vals.size else 0.0


# ---------------------------------------------------------------------------
# matrix-field identities (defining relations and the chiral conservation law)
# ---------------------------------------------------------------------------

@dataclass
class KFieldResiduals:
    connection_plus: float    # -(d+ K) K^-1 vs the plus connection
    connection_minus: float   # K^-1 (d- K) vs the minus connection
    conservation: float       # d+ (K^-1 d- K)
    spacing: float


def k_field_residuals(tplus: TransportSolution, tminus: TransportSolution,
                      t_grid, s_grid) -> KFieldResiduals:
    """Finite-difference check of the two defining relations of K and of the
    conservation law d+ (K^-1 d- K) = 0."""
    t_grid = np.asarray(t_grid, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    h = float(t_grid[1] - t_grid[0])
    k11, k12, k21, k22 = k_entry_grids(tplus, tminus, t_grid, s_grid)
    k = np.stack([np.stack([k11, k12], axis=-1),
                  np.stack([k21, k22], axis=-1)], axis=-2)   # (nt, ns, 2, 2)
    kinv = np.empty_like(k)
    kinv[..., 0, 0] = k[..., 1, 1]
    kinv[..., 0, 1] = -k[..., 0, 1]
    kinv[..., 1, 0] = -k[..., 1, 0]
    kinv[..., 1, 1] = k[..., 0, 0]

    u = s_grid[None, :] + t_grid[:, None]
    v = s_grid[None, :] - t_grid[:, None]
    rp = profile_values(tplus.profile, u)
    rm = profile_values(tminus.profile, v)

    def q_grid(rho, chirality):
        q = np.zeros(rho.shape + (2, 2), dtype=complex)
        if chirality == "+":
            q[..., 0, 1] = -rho
            q[..., 1, 0] = np.conj(rho)
        else:
            q[..., 0, 1] = np.conj(rho)
            q[..., 1, 0] = -rho
        return q

    interior = (slice(1, -1), slice(1, -1))
    dk_plus = _dplus(k, h)
    dk_minus = _dminus(k, h)
    res_plus = -(dk_plus @ kinv[interior]) - q_grid(rp[interior], "+")
    res_minus = kinv[interior] @ dk_minus - q_grid(rm[interior], "-")
    w_full = np.full(k.shape, np.nan + 0j)
    w_full[interior] = kinv[interior] @ dk_minus
    conservation = _dplus(w_full, h)
    cons_vals = np.linalg.norm(conservation, axis=(-2, -1))
    cons_vals = cons_vals[np.isfinite(cons_vals)]
    return KFieldResiduals(
        connection_plus=float(np.linalg.norm(res_plus, axis=(-2, -1)).max()),
        connection_minus=float(np.linalg.norm(res_minus, axis=(-2, -1)).max()),
        conservation=float(cons_vals.max()) if cons_vals.size else 0.0,
        spacing=h,
    )


# ---------------------------------------------------------------------------
# independent characteristic-grid solver (data on the two axes)
# ---------------------------------------------------------------------------

@dataclass
class GoursatBoundary:
    """Field data on the axes xi_minus = 0 (over u) and xi_plus = 0 (over v)."""

    phi_u: np.ndarray           # phi(u, 0)
    phi_v: np.ndarray           # phi(0, v)
    alpha_plus_u: np.ndarray    # alpha_plus(u, 0)
    alpha_minus_v: np.ndarray   # alpha_minus(0, v)


@dataclass
class GoursatFields:
    """Fields sampled on a cone-variable rectangle u_grid x v_grid."""

    u_grid: np.ndarray
    v_grid: np.ndarray
    phi: np.ndarray
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray
    singular_mask: Optional[np.ndarray] = None


def _grid_zero_index(grid: np.ndarray, name: str) -> int:
    k = int(np.argmin(np.abs(grid)))
    if abs(grid[k]) > 1e-9 * (1.0 + float(np.max(np.abs(grid)))):
        raise ValueError(f"{name} must contain 0 (data is prescribed on the axes)")
    return k


def _solve_phi_quadrant(phi_q, u_vals, v_vals, rho_plus, rho_minus, guard):
    """March the phi recurrence over one quadrant view.

    phi_q[0, :] and phi_q[:, 0] hold the axis data; coordinates may run in
    either direction (signed steps are taken from the arrays themselves).
    """
    nu, nv = phi_q.shape
    if nu < 2 or nv < 2:
        return
    du = np.diff(u_vals)
    dv = np.diff(v_vals)
    u_mid = 0.5 * (u_vals[1:] + u_vals[:-1])
    v_mid = 0.5 * (v_vals[1:] + v_vals[:-1])
    coef_u = 2.0 * du * profile_values(rho_plus, u_mid)
    coef_v = dv * profile_values(rho_minus, v_mid)
    for d in range(2, nu + nv - 1):
        i = np.arange(max(1, d - (nv - 1)), min(nu - 1, d - 1) + 1)
        if i.size == 0:
            continue
        j = d - i
        s_term = phi_q[i - 1, j] + phi_q[i, j - 1] - phi_q[i - 1, j - 1]
        base = 0.25 * (phi_q[i - 1, j] + phi_q[i, j - 1] + phi_q[i - 1, j - 1])
        coef = coef_u[i - 1] * coef_v[j - 1]
        x = s_term.copy()
        converged = False
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(50):
                x_new = s_term + coef * np.exp(base + 0.25 * x)
                if not np.all(np.isfinite(x_new)) or np.max(x_new.real) > guard:
                    bad = (~np.isfinite(x_new)) | (x_new.real > guard)
                    kbad = int(np.argmax(bad))
                    raise GoursatBlowupError(
                        "field blow-up during the characteristic sweep near "
                        f"(xi+, xi-) = ({u_vals[i[kbad]]:.6g}, {v_vals[j[kbad]]:.6g})",
                        u=float(u_vals[i[kbad]]), v=float(v_vals[j[kbad]]))
                delta = float(np.max(np.abs(x_new - x)))
                x = x_new
                if delta <= 1e-14 * (1.0 + float(np.max(np.abs(x)))):
                    converged = True
                    break
        if not converged:
            kbad = int(np.argmax(np.abs(x)))
            raise GoursatBlowupError(
                "cell update failed to converge (source too stiff) near "
                f"(xi+, xi-) = ({u_vals[i[kbad]]:.6g}, {v_vals[j[kbad]]:.6g})",
                u=float(u_vals[i[kbad]]), v=float(v_vals[j[kbad]]))
        phi_q[i, j] = x


def goursat_solve(rho_plus, rho_minus, boundary: GoursatBoundary,
                  u_grid, v_grid,
                  overflow_guard: float = OVERFLOW_GUARD) -> GoursatFields:
    """Second-order characteristic solver for the field system.

    Cell rule for phi: the exact cell identity
    phi_P - phi_W - phi_N + phi_O = integral of the source over the cell,
    with the source evaluated at the cell center (corner average, solved by
    fixed point).  alpha_minus then marches along u and alpha_plus along v by
    trapezoid quadrature of their gradient equations.  Axis data is reproduced
    exactly; blow-up of Re(phi) beyond `overflow_guard` aborts with location.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    v_grid = np.asarray(v_grid, dtype=float)
    iu0 = _grid_zero_index(u_grid, "u_grid")
    iv0 = _grid_zero_index(v_grid, "v_grid")
    phi_u = np.asarray(boundary.phi_u, dtype=complex)
    phi_v = np.asarray(boundary.phi_v, dtype=complex)
    if phi_u.shape != u_grid.shape or phi_v.shape != v_grid.shape:
        raise ValueError("boundary arrays must match the grids")
    corner_gap = abs(phi_u[iu0] - phi_v[iv0])
    if corner_gap > 1e-9 * (1.0 + abs(phi_u[iu0])):
        raise ValueError(f"boundary data inconsistent at the corner (gap {corner_gap:.3e})")

    nu, nv = len(u_grid), len(v_grid)
    phi = np.empty((nu, nv), dtype=complex)
    phi[:, iv0] = phi_u
    phi[iu0, :] = phi_v
    for u_slice in (slice(iu0, None), slice(iu0, None, -1)):
        for v_slice in (slice(iv0, None), slice(iv0, None, -1)):
            _solve_phi_quadrant(phi[u_slice, v_slice], u_grid[u_slice],
                                v_grid[v_slice], rho_plus, rho_minus,
                                overflow_guard)

    with np.errstate(over="ignore"):
        ephi = np.exp(phi)
    rp = profile_values(rho_plus, u_grid)
    rm = profile_values(rho_minus, v_grid)

    alpha_minus = np.empty_like(phi)
    alpha_minus[iu0, :] = np.asarray(boundary.alpha_minus_v, dtype=complex)
    for i in range(iu0 + 1, nu):
        du = u_grid[i] - u_grid[i - 1]
        alpha_minus[i, :] = alpha_minus[i - 1, :] + 0.5 * du * (
            rp[i - 1] * ephi[i - 1, :] + rp[i] * ephi[i, :])
    for i in range(iu0 - 1, -1, -1):
        du = u_grid[i] - u_grid[i + 1]
        alpha_minus[i, :] = alpha_minus[i + 1, :] + 0.5 * du * (
            rp[i + 1] * ephi[i + 1, :] + rp[i] * ephi[i, :])

    alpha_plus = np.empty_like(phi)
    alpha_plus[:, iv0] = np.asarray(boundary.alpha_plus_u, dtype=complex)
    for j in range(iv0 + 1, nv):
        dv = v_grid[j] - v_grid[j - 1]
        alpha_plus[:, j] = alpha_plus[:, j - 1] + 0.5 * dv * (
            rm[j - 1] * ephi[:, j - 1] + rm[j] * ephi[:, j])
    for j in range(iv0 - 1, -1, -1):
        dv = v_grid[j] - v_grid[j + 1]
        alpha_plus[:, j] = alpha_plus[:, j + 1] + 0.5 * dv * (
            rm[j + 1] * ephi[:, j + 1] + rm[j] * ephi[:, j])

    return GoursatFields(u_grid=u_grid, v_grid=v_grid, phi=phi,
                         alpha_plus=alpha_plus, alpha_minus=alpha_minus)


def _cone_indices(solution: TransportSolution, grid: np.ndarray) -> np.ndarray:
    idx = np.rint((grid - solution.grid_start) / solution.grid_step).astype(int)
    recon = solution.grid_start + idx * solution.grid_step
    if (idx.min() < 0 or idx.max() >= len(solution.samples)
            or np.max(np.abs(recon - grid)) > 1e-9 * (1.0 + np.max(np.abs(grid)))):
        raise ValueError("cone grid must lie on the transport sample grid")
    return idx


def transport_cone_fields(tplus: TransportSolution, tminus: TransportSolution,
                          u_grid, v_grid,
                          threshold: float = DEFAULT_SINGULAR_THRESHOLD) -> GoursatFields:
    """Fields on a cone rectangle obtained from the transport route."""
    u_grid = np.asarray(u_grid, dtype=float)
    v_grid = np.asarray(v_grid, dtype=float)
    ip = _cone_indices(tplus, u_grid)
    im = _cone_indices(tminus, v_grid)
    p11, p12, p21, p22 = tplus.entries()
    m11, m12, m21, m22 = tminus.entries()
    a11, a12 = m22[im][None, :], -m12[im][None, :]
    a21, a22 = -m21[im][None, :], m11[im][None, :]
    k11 = p11[ip][:, None] * a11 + p12[ip][:, None] * a21
    k12 = p11[ip][:, None] * a12 + p12[ip][:, None] * a22
    k21 = p21[ip][:, None] * a11 + p22[ip][:, None] * a21
    phi, ap, am, mask, _ = _decompose_lattice(k11, k12, k21, threshold)
    return GoursatFields(u_grid=u_grid, v_grid=v_grid, phi=phi,
                         alpha_plus=ap, alpha_minus=am, singular_mask=mask)


def _unwrap_from(values: np.ndarray, anchor: int) -> np.ndarray:
    out = values.astype(float).copy()
    out[anchor:] = np.unwrap(values[anchor:])
    out[:anchor + 1] = np.unwrap(values[anchor::-1])[::-1]
    return out


def extract_goursat_boundary(tplus: TransportSolution, tminus: TransportSolution,
                             u_grid, v_grid,
                             threshold: float = DEFAULT_SINGULAR_THRESHOLD) -> GoursatBoundary:
    """Axis data for the characteristic solver taken from the transport route."""
    u_grid = np.asarray(u_grid, dtype=float)
    v_grid = np.asarray(v_grid, dtype=float)
    iu0 = _grid_zero_index(u_grid, "u_grid")
    iv0 = _grid_zero_index(v_grid, "v_grid")
    ip = _cone_indices(tplus, u_grid)
    im = _cone_indices(tminus, v_grid)
    p11, p12, p21, p22 = tplus.entries()
    m11, m12, m21, m22 = tminus.entries()

    tm0 = tminus.samples[im[iv0]]
    k11_u = p11[ip] * tm0[1, 1] - p12[ip] * tm0[1, 0]
    k21_u = p21[ip] * tm0[1, 1] - p22[ip] * tm0[1, 0]
    tp0 = tplus.samples[ip[iu0]]
    k11_v = tp0[0, 0] * m22[im] - tp0[0, 1] * m21[im]
    k12_v = -tp0[0, 0] * m12[im] + tp0[0, 1] * m11[im]
    if np.min(np.abs(k11_u)) <= threshold or np.min(np.abs(k11_v)) <= threshold:
        raise SingularMinorError("axis data crosses the singular locus; "
                                 "choose axes away from cusps")
    phi_u = -2.0 * (np.log(np.abs(k11_u)) + 1.0j * _unwrap_from(np.angle(k11_u), iu0))
    phi_v = -2.0 * (np.log(np.abs(k11_v)) + 1.0j * _unwrap_from(np.angle(k11_v), iv0))
    return GoursatBoundary(phi_u=phi_u, phi_v=phi_v,
                           alpha_plus_u=-k21_u / k11_u,
                           alpha_minus_v=k12_v / k11_v)


def cone_pde_residuals(fields: GoursatFields, rho_plus, rho_minus) -> PdeResiduals:
    """Residuals of the field system on a cone rectangle (axis-aligned stencils)."""
    hu = float(fields.u_grid[1] - fields.u_grid[0])
    hv = float(fields.v_grid[1] - fields.v_grid[0])
    phi, ap, am = fields.phi, fields.alpha_plus, fields.alpha_minus
    rp = profile_values(rho_plus, fields.u_grid)[:, None]
    rm = profile_values(rho_minus, fields.v_grid)[None, :]
    interior = (slice(1, -1), slice(1, -1))
    with np.errstate(invalid="ignore", over="ignore"):
        ephi = np.exp(phi)
        cross = (phi[2:, 2:] - phi[2:, :-2] - phi[:-2, 2:] + phi[:-2, :-2]) / (4 * hu * hv)
        res_a = np.abs(cross - 2.0 * (rp * rm * ephi)[interior])
        du_am = (am[2:, 1:-1] - am[:-2, 1:-1]) / (2 * hu)
        dv_ap = (ap[1:-1, 2:] - ap[1:-1, :-2]) / (2 * hv)
        res_c = np.maximum(np.abs(du_am - (rp * ephi)[interior]),
                           np.abs(dv_ap - (rm * ephi)[interior]))
        rho_p_hat = np.full(phi.shape, np.nan + 0j)
        rho_m_hat = np.full(phi.shape, np.nan + 0j)
        rho_p_hat[interior] = du_am * np.exp(-phi[interior])
        rho_m_hat[interior] = dv_ap * np.exp(-phi[interior])
        res_b = np.maximum(
            np.abs((rho_p_hat[1:-1, 2:] - rho_p_hat[1:-1, :-2]) / (2 * hv)),
            np.abs((rho_m_hat[2:, 1:-1] - rho_m_hat[:-2, 1:-1]) / (2 * hu)))

    if fields.singular_mask is not None:
        ok = ~fields.singular_mask
        valid = _valid_for_stencil(ok)
        valid_b = _valid_for_stencil(np.pad(valid, 1, constant_values=False))
    else:
        valid = np.ones(res_a.shape, dtype=bool)
        valid_b = np.ones(res_b.shape, dtype=bool)

    def vmax(arr, mask):
        vals = arr[mask]
        vals = vals[np.isfinite(vals)]
        return float(vals.max()) if vals.size else 0.0

    return PdeResiduals(source=vmax(res_a, valid),
                        chirality=vmax(res_b, valid_b),
                        gradient=vmax(res_c, valid),
                        spacing=max(hu, hv),
                        points=int(valid.sum()))


def compare_cone_fields(a: GoursatFields, b: GoursatFields):
    """Max absolute field differences (phi, alpha_plus, alpha_minus) off masks."""
    if a.phi.shape != b.phi.shape:
        raise ValueError("field rectangles differ in shape")
    ok = np.ones(a.phi.shape, dtype=bool)
    for f in (a, b):
        if f.singular_mask is not None:
            ok &= ~f.singular_mask

    def dmax(x, y):
        d = np.abs(x - y)[ok]
        d = d[np.isfinite(d)]
        return float(d.max()) if d.size else 0.0

    return (dmax(a.phi, b.phi), dmax(a.alpha_plus, b.alpha_plus),
            dmax(a.alpha_minus, b.alpha_minus))


# ---------------------------------------------------------------------------
# cross-validation of the two routes to the induced metric
# ---------------------------------------------------------------------------

@dataclass
class CrossCheck:
    max_rel_dev: float
    points: int


def cross_validate(tplus: TransportSolution, tminus: TransportSolution,
                   fields: GaussFields) -> CrossCheck:
    """Compare e^{-Re phi} against the squared determinant combination."""
    c = combination_grid(tplus, tminus, fields.t_grid, fields.s_grid)
    target = np.abs(c) ** 2
    ok = ~fields.singular_mask
    with np.errstate(invalid="ignore", over="ignore"):
        via_phi = np.exp(-fields.phi.real)
        rel = np.abs(via_phi - target) / np.where(target > 0, target, 1.0)
    vals = rel[ok]
    vals = vals[np.isfinite(vals)]
    return CrossCheck(max_rel_dev=float(vals.max()) if vals.size else 0.0,
                      points=int(ok.sum()))


# ---------------------------------------------------------------------------
# the invariance group of the field system
# ---------------------------------------------------------------------------

def _zero(_xi):
    return 0.0


@dataclass
class GaugeElement:
    """One element of the invariance group of the field system.

    f/g are complex-valued functions of one cone variable; a_plus/a_minus are
    monotone reparametrizations (identity when None) with derivatives supplied
    alongside.
    """

    f_plus: Callable = _zero
    f_minus: Callable = _zero
    g_plus: Callable = _zero
    g_minus: Callable = _zero
    a_plus: Optional[Callable] = None
    a_minus: Optional[Callable] = None
    a_plus_deriv: Optional[Callable] = None
    a_minus_deriv: Optional[Callable] = None

    @property
    def reparametrizes(self) -> bool:
        return self.a_plus is not None or self.a_minus is not None


def _check_monotone(a, a_deriv, lo, hi, name):
    if a is None:
        return
    if a_deriv is None:
        raise ValueError(f"{name} requires its derivative alongside")
    xs = np.linspace(lo, hi, 257)
    dv = np.asarray([float(np.real(a_deriv(x))) for x in xs])
    if np.any(dv == 0.0) or np.any(np.sign(dv) != np.sign(dv[0])):
        raise ValueError(f"{name} must be monotone on [{lo:.6g}, {hi:.6g}]")


def _bilinear(t_grid, s_grid, values, tq, sq):
    """Bilinear interpolation on the lattice; returns (vals, valid)."""
    h_t = t_grid[1] - t_grid[0]
    h_s = s_grid[1] - s_grid[0]
    fi = (tq - t_grid[0]) / h_t
    fj = (sq - s_grid[0]) / h_s
    i0 = np.clip(np.floor(fi).astype(int), 0, len(t_grid) - 2)
    j0 = np.clip(np.floor(fj).astype(int), 0, len(s_grid) - 2)
    wi = fi - i0
    wj = fj - j0
    inside = (fi >= 0) & (fi <= len(t_grid) - 1) & (fj >= 0) & (fj <= len(s_grid) - 1)
    c00 = values[i0, j0]
    c01 = values[i0, j0 + 1]
    c10 = values[i0 + 1, j0]
    c11 = values[i0 + 1, j0 + 1]
    out = ((1 - wi) * (1 - wj) * c00 + (1 - wi) * wj * c01
           + wi * (1 - wj) * c10 + wi * wj * c11)
    valid = inside & np.isfinite(c00) & np.isfinite(c01) & np.isfinite(c10) & np.isfinite(c11)
    return out, valid


def apply_gauge(fields: GaussFields, rho_plus, rho_minus, gauge: GaugeElement):
    """Transform (phi, rho, alpha) by a group element.

    Returns (new_fields, new_rho_plus, new_rho_minus); the new profiles are
    callables.  For identity reparametrizations the transform is pointwise
    exact; otherwise fields are resampled by bilinear interpolation (second
    order, consistent with the finite-difference residual order).
    """
    t_grid, s_grid = fields.t_grid, fields.s_grid
    u = s_grid[None, :] + t_grid[:, None]
    v = s_grid[None, :] - t_grid[:, None]
    u_lo, u_hi = float(u.min()), float(u.max())
    v_lo, v_hi = float(v.min()), float(v.max())
    _check_monotone(gauge.a_plus, gauge.a_plus_deriv, u_lo, u_hi, "a_plus")
    _check_monotone(gauge.a_minus, gauge.a_minus_deriv, v_lo, v_hi, "a_minus")

    fp = np.vectorize(lambda x: complex(gauge.f_plus(x)))(u)
    fm = np.vectorize(lambda x: complex(gauge.f_minus(x)))(v)
    gp = np.vectorize(lambda x: complex(gauge.g_plus(x)))(u)
    gm = np.vectorize(lambda x: complex(gauge.g_minus(x)))(v)

    if not gauge.reparametrizes:
        phi = fields.phi + fp + fm
        ap = fields.alpha_plus * np.exp(fp) + gp
        am = fields.alpha_minus * np.exp(fm) + gm
        mask = fields.singular_mask.copy()
        jumps = fields.branch_jump_mask.copy()
    else:
        a_p = gauge.a_plus if gauge.a_plus is not None else (lambda x: x)
        a_m = gauge.a_minus if gauge.a_minus is not None else (lambda x: x)
        au = np.vectorize(lambda x: float(np.real(a_p(x))))(u)
        av = np.vectorize(lambda x: float(np.real(a_m(x))))(v)
        tq = 0.5 * (au - av)
        sq = 0.5 * (au + av)
        phi0, ok0 = _bilinear(t_grid, s_grid, fields.phi, tq, sq)
        ap0, ok1 = _bilinear(t_grid, s_grid, fields.alpha_plus, tq, sq)
        am0, ok2 = _bilinear(t_grid, s_grid, fields.alpha_minus, tq, sq)
        valid = ok0 & ok1 & ok2
        phi = np.where(valid, phi0, np.nan) + fp + fm
        ap = np.where(valid, ap0, np.nan) * np.exp(fp) + gp
        am = np.where(valid, am0, np.nan) * np.exp(fm) + gm
        mask = ~valid
        jumps = np.zeros_like(mask)

    new_fields = GaussFields(t_grid=t_grid, s_grid=s_grid, phi=phi,
                             alpha_plus=ap, alpha_minus=am,
                             singular_mask=mask, branch_jump_mask=jumps,
                             threshold=fields.threshold)

    def transformed(rho, a, a_deriv, f):
        if a is None:
            def new_rho(xi):
                xi_arr = np.asarray(xi, dtype=float)
                vals = profile_values(rho, xi_arr)
                fac = np.vectorize(lambda x: complex(f(x)))(xi_arr)
                out = vals * np.exp(-fac)
                return complex(out[()]) if xi_arr.ndim == 0 else out
        else:
            def new_rho(xi):
                xi_arr = np.asarray(xi, dtype=float)
                axi = np.vectorize(lambda x: float(np.real(a(x))))(xi_arr)
                dv = np.vectorize(lambda x: complex(a_deriv(x)))(xi_arr)
                fac = np.vectorize(lambda x: complex(f(x)))(xi_arr)
                out = profile_values(rho, axi) * dv * np.exp(-fac)
                return complex(out[()]) if xi_arr.ndim == 0 else out
        return new_rho

    new_rho_plus = transformed(rho_plus, gauge.a_plus, gauge.a_plus_deriv, gauge.f_plus)
    new_rho_minus = transformed(rho_minus, gauge.a_minus, gauge.a_minus_deriv, gauge.f_minus)
    return new_fields, new_rho_plus, new_rho_minus
