"""String world-sheets from chiral data.

Pipeline: chiral profiles -> SU(2) frame transport along the cone variables
-> exact light-cone reconstruction of the embedding -> induced-metric zeros
(cusps), including finite-duration ones -> scalar-field decomposition with an
independent characteristic-grid solver for cross-validation -> separable
potential matrix elements along the string.
"""

from .cusps import (CuspEvent, CuspTrackError, DiamondDescriptor,
                    PlanarRegion, cusp_speed, detect, detect_planar_region,
                    verify_degenerate_segment)
from .gaussfields import (GaugeElement, GaussFields, GoursatBlowupError,
                          GoursatBoundary, GoursatFields, SingularMinorError,
                          apply_gauge, cross_validate, extract_goursat_boundary,
                          gauss_decompose, goursat_solve, k_field,
                          pde_residuals, sample_fields, transport_cone_fields)
from .potential import KernelConfig, form_factor, matrix_element
from .profiles import (BumpTerm, ChiralProfile, evaluate, make_bump,
                       make_gapped_pair)
from .scenario import Scenario, ScenarioError, load_scenario
from .transport import (MINUS_I_SIGMA2, TransportSolution, XiRangeError,
                        integrate_transport, null_vector, q_matrix)
from .worldsheet import (PhaseUndefinedError, WorldSheetGrid,
                         constraint_residuals, metric_coefficient,
                         minkowski_dot, reconstruct, second_forms)

__version__ = "0.1.0"

__all__ = [
    "BumpTerm", "ChiralProfile", "CuspEvent", "CuspTrackError",
    "DiamondDescriptor", "GaugeElement", "GaussFields", "GoursatBlowupError",
    "GoursatBoundary", "GoursatFields", "KernelConfig", "MINUS_I_SIGMA2",
    "PhaseUndefinedError", "PlanarRegion", "Scenario", "ScenarioError",
    "SingularMinorError", "TransportSolution", "WorldSheetGrid",
    "XiRangeError", "apply_gauge", "constraint_residuals", "cross_validate",
    "cusp_speed", "detect", "detect_planar_region", "evaluate",
    "extract_goursat_boundary", "form_factor", "gauss_decompose",
    "goursat_solve", "integrate_transport", "k_field", "load_scenario",
    "make_bump", "make_gapped_pair", "matrix_element", "metric_coefficient",
    "minkowski_dot", "null_vector", "pde_residuals", "q_matrix",
    "reconstruct", "sample_fields", "second_forms", "transport_cone_fields",
    "verify_degenerate_segment",
]
