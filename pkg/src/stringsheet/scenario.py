"""Declarative scenario files: one JSON document drives a full run.

Schema (all lengths in the same units as kappa; see README for a worked
example):

    {
      "rho_plus":  [{"center": 0.0, "width": 1.0, "re": 1.0, "im": 0.0}, ...],
      "rho_minus": [...],
      "initial_plus":  "identity" | [[[re, im], [re, im]], [[re, im], [re, im]]],
      "initial_minus": "identity" | "minus_i_sigma2" | matrix,
      "kappa": 1.0,
      "x0": [0.0, 0.0, 0.0, 0.0],
      "grid": {"t_min": -2, "t_max": 2, "s_min": -2, "s_max": 2, "step": 0.05},
      "cusp_tol": 1e-10,
      "beta": 0.0,
      "singular_threshold": 1e-6,
      "planar_tol": 1e-10,
      "verify": {"coefficient": 100.0},
      "kernel": {"coupling": -1.0, "cutoff_scale": 0.1,
                 "plateau_half_width": 1.0, "tail_width": 0.0001,
                 "time": 0.0, "momenta": [[0, 0, 1.0], ...]},
      "output_dir": "out"
    }

Grid ranges must be integer multiples of the step; the cone grids are derived
from them and always extended to contain 0, where the transport initial data
is anchored.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .potential import KernelConfig
from .profiles import ChiralProfile, profile_from_dicts, profile_to_dicts
from .transport import IDENTITY, MINUS_I_SIGMA2, is_special_unitary

NAMED_MATRICES = {
    "identity": IDENTITY,
    "minus_i_sigma2": MINUS_I_SIGMA2,
}


class ScenarioError(ValueError):
    """A scenario file failed to parse or validate."""


@dataclass
class GridSpec:
    t_min: float
    t_max: float
    s_min: float
    s_max: float
    step: float

    def validate(self):
        if not self.step > 0:
            raise ScenarioError(f"grid step must be positive, got {self.step}")
        for name, lo, hi in (("t", self.t_min, self.t_max),
                             ("s", self.s_min, self.s_max)):
            if not hi > lo:
                raise ScenarioError(f"{name} range [{lo}, {hi}] is empty")
            for v in (lo, hi):
                k = round(v / self.step)
                if abs(k * self.step - v) > 1e-9 * (1.0 + abs(v)):
                    raise ScenarioError(
                        f"{name} bound {v} is not an integer multiple of step {self.step}")

    def axes(self):
        """(t_grid, s_grid) with exact multiples of the step."""
        nt = int(round((self.t_max - self.t_min) / self.step))
        ns = int(round((self.s_max - self.s_min) / self.step))
        t_grid = self.t_min + self.step * np.arange(nt + 1)
        s_grid = self.s_min + self.step * np.arange(ns + 1)
        return t_grid, s_grid

    def cone_ranges(self):
        """xi ranges needed by the lattice, extended to contain the anchor 0."""
        u_lo = min(self.s_min + self.t_min, 0.0)
        u_hi = max(self.s_max + self.t_max, 0.0)
        v_lo = min(self.s_min - self.t_max, 0.0)
        v_hi = max(self.s_max - self.t_min, 0.0)
        return (u_lo, u_hi), (v_lo, v_hi)

    def to_dict(self):
        return {"t_min": self.t_min, "t_max": self.t_max,
                "s_min": self.s_min, "s_max": self.s_max, "step": self.step}


@dataclass
class KernelSpec:
    config: KernelConfig
    time: float
    momenta: list


@dataclass
class Scenario:
    rho_plus: ChiralProfile
    rho_minus: ChiralProfile
    initial_plus: np.ndarray
    initial_minus: np.ndarray
    kappa: float
    x0: np.ndarray
    grid: GridSpec
    cusp_tol: float = 1e-10
    beta: float = 0.0
    singular_threshold: float = 1e-6
    planar_tol: float = 1e-10
    verify_coefficient: float = 100.0
    kernel: Optional[KernelSpec] = None
    output_dir: Optional[str] = None
    debug: dict = field(default_factory=dict)

    def describe(self) -> dict:
        """Deterministic echo of the configuration for metadata files."""
        out = {
            "rho_plus": profile_to_dicts(self.rho_plus),
            "rho_minus": profile_to_dicts(self.rho_minus),
            "initial_plus": _matrix_to_json(self.initial_plus),
            "initial_minus": _matrix_to_json(self.initial_minus),
            "kappa": self.kappa,
            "x0": list(self.x0),
            "grid": self.grid.to_dict(),
            "cusp_tol": self.cusp_tol,
            "beta": self.beta,
            "singular_threshold": self.singular_threshold,
            "planar_tol": self.planar_tol,
            "verify_coefficient": self.verify_coefficient,
        }
        if self.kernel is not None:
            out["kernel"] = {
                "coupling": self.kernel.config.coupling,
                "cutoff_scale": self.kernel.config.cutoff_scale,
                "plateau_half_width": self.kernel.config.plateau_half_width,
                "tail_width": self.kernel.config.tail_width,
                "time": self.kernel.time,
                "momenta": [list(map(float, p)) for p in self.kernel.momenta],
            }
        return out


def _matrix_from_json(value, name: str) -> np.ndarray:
    if isinstance(value, str):
        try:
            return NAMED_MATRICES[value].copy()
        except KeyError:
            raise ScenarioError(
                f"{name}: unknown matrix name {value!r}; "
                f"expected one of {sorted(NAMED_MATRICES)}") from None
    try:
        arr = np.array([[complex(value[i][j][0], value[i][j][1])
                         for j in range(2)] for i in range(2)])
    except (TypeError, IndexError, ValueError):
        raise ScenarioError(
            f"{name}: expected a 2x2 nested [re, im] list or a matrix name") from None
    if not is_special_unitary(arr):
        raise ScenarioError(f"{name}: matrix is not special unitary")
    return arr


def _matrix_to_json(matrix: np.ndarray):
    return [[[matrix[i, j].real, matrix[i, j].imag] for j in range(2)]
            for i in range(2)]


def scenario_from_dict(data: dict) -> Scenario:
    try:
        rho_plus = profile_from_dicts(data.get("rho_plus", []))
        rho_minus = profile_from_dicts(data.get("rho_minus", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad profile description: {exc}") from exc

    initial_plus = _matrix_from_json(data.get("initial_plus", "identity"),
                                     "initial_plus")
    initial_minus = _matrix_from_json(data.get("initial_minus", "identity"),
                                      "initial_minus")

    kappa = float(data.get("kappa", 1.0))
    if not kappa > 0:
        raise ScenarioError(f"kappa must be positive, got {kappa}")
    x0 = np.asarray(data.get("x0", [0.0, 0.0, 0.0, 0.0]), dtype=float)
    if x0.shape != (4,):
        raise ScenarioError("x0 must be a 4-vector")

    gd = data.get("grid")
    if not isinstance(gd, dict):
        raise ScenarioError("scenario must carry a 'grid' object")
    try:
        grid = GridSpec(t_min=float(gd["t_min"]), t_max=float(gd["t_max"]),
                        s_min=float(gd["s_min"]), s_max=float(gd["s_max"]),
                        step=float(gd["step"]))
    except KeyError as exc:
        raise ScenarioError(f"grid is missing field {exc}") from exc
    grid.validate()

    cusp_tol = float(data.get("cusp_tol", 1e-10))
    if not cusp_tol > 0:
        raise ScenarioError(f"cusp_tol must be positive, got {cusp_tol}")

    kernel = None
    kd = data.get("kernel")
    if kd is not None:
        try:
            cfg = KernelConfig(coupling=float(kd["coupling"]),
                               cutoff_scale=float(kd["cutoff_scale"]),
                               plateau_half_width=float(kd["plateau_half_width"]),
                               tail_width=float(kd["tail_width"]))
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"bad kernel config: {exc}") from exc
        momenta = [np.asarray(p, dtype=float) for p in kd.get("momenta", [])]
        for p in momenta:
            if p.shape != (3,):
                raise ScenarioError("kernel momenta must be 3-vectors")
        kernel = KernelSpec(config=cfg, time=float(kd.get("time", 0.0)),
                            momenta=momenta)

    verify = data.get("verify", {})
    coefficient = float(verify.get("coefficient", 100.0)) if isinstance(verify, dict) else 100.0

    return Scenario(
        rho_plus=rho_plus, rho_minus=rho_minus,
        initial_plus=initial_plus, initial_minus=initial_minus,
        kappa=kappa, x0=x0, grid=grid,
        cusp_tol=cusp_tol,
        beta=float(data.get("beta", 0.0)),
        singular_threshold=float(data.get("singular_threshold", 1e-6)),
        planar_tol=float(data.get("planar_tol", 1e-10)),
        verify_coefficient=coefficient,
        kernel=kernel,
        output_dir=data.get("output_dir"),
        debug=dict(data.get("debug", {})),
    )


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario file must contain a JSON object")
    return scenario_from_dict(data)
