"""SU(2) transport of light-like frames along the cone variables.

Each chirality carries a linear system T'(xi) + Q(xi) T(xi) = 0 with the
gauge-fixed off-diagonal connection

    Q_plus(xi)  = [[0, -rho(xi)], [conj(rho(xi)), 0]],
    Q_minus(xi) = [[0, conj(rho(xi))], [-rho(xi), 0]],

built from the chiral profile of that cone variable.  Integration uses the
exponential midpoint rule with the closed-form SU(2) exponential, so every
sample is unitary with unit determinant to roundoff and the frame vectors
derived from matrix rows are exactly light-like.  On subintervals where the
profile vanishes the step multiplier is the identity and samples are copied
bit-exactly, so transport matrices freeze on profile gaps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTITY = np.eye(2, dtype=complex)
SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
# Frame-matching initial matrix for the finite-duration cusp construction.
MINUS_I_SIGMA2 = np.array([[0.0, -1.0], [1.0, 0.0]], dtype=complex)

CHIRALITIES = ("+", "-")


class XiRangeError(ValueError):
    """A requested cone coordinate lies outside (or off) the sampled grid."""


def _check_chirality(chirality: str) -> None:
    if chirality not in CHIRALITIES:
        raise ValueError(f"chirality must be '+' or '-', got {chirality!r}")


def q_matrix(rho: complex, chirality: str = "+") -> np.ndarray:
    """Reduced connection matrix for one profile value.

    Anti-Hermitian and traceless for either chirality; the minus chirality
    swaps the off-diagonal roles (rho -> -conj(rho)).
    """
    _check_chirality(chirality)
    rho = complex(rho)
    if chirality == "+":
        return np.array([[0.0, -rho], [np.conj(rho), 0.0]])
    return np.array([[0.0, np.conj(rho)], [-rho, 0.0]])


def su2_exp_offdiag(b: complex) -> np.ndarray:
    """Closed-form exp of the traceless anti-Hermitian matrix [[0, b], [-conj(b), 0]]."""
    b = complex(b)
    theta = abs(b)
    c = np.cos(theta)
    s = np.sinc(theta / np.pi)  # sin(theta)/theta, exactly 1 at 0
    return np.array([[c, s * b], [-s * np.conj(b), c]])


def unitarity_defect(matrix: np.ndarray) -> float:
    """Frobenius norm of T^dagger T - I."""
    return float(np.linalg.norm(matrix.conj().T @ matrix - IDENTITY))


def det_defect(matrix: np.ndarray) -> float:
    return float(abs(matrix[0, 0] * matrix[1, 1] - matrix[0, 1] * matrix[1, 0] - 1.0))


def is_special_unitary(matrix: np.ndarray, tol: float = 1e-10) -> bool:
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (2, 2):
        return False
    return unitarity_defect(matrix) <= tol and det_defect(matrix) <= tol


def inv_unimodular(matrix: np.ndarray) -> np.ndarray:
    """Inverse of a det-1 matrix via the adjugate (no division)."""
    return np.array([[matrix[1, 1], -matrix[0, 1]],
                     [-matrix[1, 0], matrix[0, 0]]])


def profile_values(profile, xi) -> np.ndarray:
    """Evaluate a profile-like object (ChiralProfile or callable) on an array."""
    xi = np.asarray(xi, dtype=float)
    try:
        vals = np.asarray(profile(xi), dtype=complex)
    except (TypeError, ValueError):
        vals = np.array([complex(profile(float(x))) for x in xi.ravel()],
                        dtype=complex).reshape(xi.shape)
    if vals.shape != xi.shape:
        if vals.ndim == 0:
            vals = np.full(xi.shape, complex(vals))
        else:
            raise ValueError("profile returned an array of unexpected shape")
    return vals


@dataclass
class TransportSolution:
    """Sampled SU(2)-valued solution of one chiral transport system.

    `samples[k]` holds T(grid_start + k*grid_step); `initial` is the matrix
    imposed at the anchor sample (anchor_index), by default the one at xi = 0.
    """

    chirality: str
    grid_start: float
    grid_step: float
    samples: np.ndarray           # (n+1, 2, 2) complex
    initial: np.ndarray           # (2, 2)
    anchor_index: int
    profile: object               # profile-like, kept for downstream queries

    @property
    def xi_grid(self) -> np.ndarray:
        return self.grid_start + self.grid_step * np.arange(len(self.samples))

    @property
    def xi_end(self) -> float:
        return self.grid_start + self.grid_step * (len(self.samples) - 1)

    def index_of(self, xi: float) -> int:
        """Index of the sample at xi; the grid must hit xi exactly."""
        k = int(round((xi - self.grid_start) / self.grid_step))
        if k < 0 or k >= len(self.samples):
            raise XiRangeError(
                f"xi = {xi} outside sampled range "
                f"[{self.grid_start}, {self.xi_end}] for chirality "
                f"{self.chirality!r}; missing "
                f"{'[' + format(xi, '.6g') + ', ' + format(self.grid_start, '.6g') + ')' if k < 0 else '(' + format(self.xi_end, '.6g') + ', ' + format(xi, '.6g') + ']'}"
            )
        if abs(self.grid_start + k * self.grid_step - xi) > 1e-9 * (1.0 + abs(xi)):
            raise XiRangeError(
                f"xi = {xi} does not lie on the sample grid "
                f"(start {self.grid_start}, step {self.grid_step})")
        return k

    def at(self, xi: float) -> np.ndarray:
        return self.samples[self.index_of(xi)]

    def entries(self):
        """Entry arrays (t11, t12, t21, t22) over all samples."""
        s = self.samples
        return s[:, 0, 0], s[:, 0, 1], s[:, 1, 0], s[:, 1, 1]

    def max_unitarity_defect(self) -> float:
        prod = np.einsum("kji,kjl->kil", self.samples.conj(), self.samples)
        return float(np.max(np.linalg.norm(prod - IDENTITY, axis=(1, 2))))

    def max_det_defect(self) -> float:
        det = (self.samples[:, 0, 0] * self.samples[:, 1, 1]
               - self.samples[:, 0, 1] * self.samples[:, 1, 0])
        return float(np.max(np.abs(det - 1.0)))


def integrate_transport(profile, xi_range, step: float, initial=None,
                        chirality: str = "+", anchor: float = 0.0) -> TransportSolution:
    """Integrate T' + Q T = 0 over xi_range with T(anchor) = initial.

    Exponential midpoint rule: each step multiplies by the closed-form SU(2)
    exponential of -step * Q at the midpoint (second order, structure
    preserving).  The anchor must lie on the sample grid; integration runs
    forward and backward from it.
    """
    _check_chirality(chirality)
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    lo, hi = float(xi_range[0]), float(xi_range[1])
    if not hi > lo:
        raise ValueError(f"empty xi range [{lo}, {hi}]")
    n = int(round((hi - lo) / step))
    if n < 1 or abs(lo + n * step - hi) > 1e-9 * (1.0 + abs(hi)):
        raise ValueError(f"range [{lo}, {hi}] is not an integer number of steps {step}")
    if initial is None:
        initial = IDENTITY
    initial = np.asarray(initial, dtype=complex)
    if not is_special_unitary(initial):
        raise ValueError("initial matrix must be special unitary (2x2, T^H T = I, det = 1)")
    ka = int(round((anchor - lo) / step))
    if ka < 0 or ka > n or abs(lo + ka * step - anchor) > 1e-9 * (1.0 + abs(anchor)):
        raise ValueError(f"anchor {anchor} must lie on the sample grid of [{lo}, {hi}]")

    mids = profile_values(profile, lo + (np.arange(n) + 0.5) * step)
    if chirality == "+":
        bs = step * mids
    else:
        bs = -step * np.conj(mids)

    samples = np.empty((n + 1, 2, 2), dtype=complex)
    samples[ka] = initial
    for k in range(ka, n):
        b = bs[k]
        if b == 0:
            samples[k + 1] = samples[k]
        else:
            samples[k + 1] = su2_exp_offdiag(b) @ samples[k]
    for k in range(ka, 0, -1):
        b = bs[k - 1]
        if b == 0:
            samples[k - 1] = samples[k]
        else:
            # inverse step: exact closed-form inverse of the step multiplier
            samples[k - 1] = su2_exp_offdiag(-b) @ samples[k]

    return TransportSolution(chirality=chirality, grid_start=lo, grid_step=step,
                             samples=samples, initial=initial.copy(),
                             anchor_index=ka, profile=profile)


def null_vector(matrix: np.ndarray, chirality: str) -> np.ndarray:
    """Light-like frame vector read off one matrix row.

    Row 1 for chirality '+', row 2 for '-'; the time component is 1/2 in the
    fixed time gauge, and the spatial part is built from the row entries so
    the Minkowski norm vanishes identically for unit rows.
    """
    _check_chirality(chirality)
    row = matrix[0] if chirality == "+" else matrix[1]
    a, b = row
    ab = a * np.conj(b)
    return np.array([0.5, -ab.real, -ab.imag, 0.5 * (abs(b) ** 2 - abs(a) ** 2)])


def null_vectors(solution: TransportSolution) -> np.ndarray:
    """(n+1, 4) frame vectors at all samples of a transport solution."""
    rows = solution.samples[:, 0, :] if solution.chirality == "+" else solution.samples[:, 1, :]
    a, b = rows[:, 0], rows[:, 1]
    ab = a * np.conj(b)
    out = np.empty((len(rows), 4))
    out[:, 0] = 0.5
    out[:, 1] = -ab.real
    out[:, 2] = -ab.imag
    out[:, 3] = 0.5 * (np.abs(b) ** 2 - np.abs(a) ** 2)
    return out


def xi_index_grids(tplus: TransportSolution, tminus: TransportSolution,
                   t_grid, s_grid):
    """Sample indices (idx_plus, idx_minus) for every (t, s) lattice point.

    The lattice must share the transport step and hit the xi samples exactly
    (xi_plus = s + t, xi_minus = s - t); raises XiRangeError otherwise.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    h = tplus.grid_step
    for sol in (tplus, tminus):
        if abs(sol.grid_step - h) > 1e-12 * h:
            raise XiRangeError("transport solutions must share one xi step")
    for g in (t_grid, s_grid):
        if len(g) > 1:
            dg = np.diff(g)
            if np.max(np.abs(dg - h)) > 1e-9 * h:
                raise XiRangeError("(t, s) lattice step must equal the transport xi step")
    ip00 = tplus.index_of(s_grid[0] + t_grid[0])
    im00 = tminus.index_of(s_grid[0] - t_grid[0])
    nt, ns = len(t_grid), len(s_grid)
    # corners suffice: index maps are linear in (i, j)
    tplus.index_of(s_grid[-1] + t_grid[-1])
    tminus.index_of(s_grid[-1] - t_grid[0])
    tminus.index_of(s_grid[0] - t_grid[-1])
    ii, jj = np.meshgrid(np.arange(nt), np.arange(ns), indexing="ij")
    idx_plus = ip00 + ii + jj
    idx_minus = im00 + jj - ii
    return idx_plus, idx_minus
