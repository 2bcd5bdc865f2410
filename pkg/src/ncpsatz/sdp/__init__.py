from .factor import IndefiniteError, psd_factor
from .ipm import (INACCURATE, INFEASIBLE, ITERATION_LIMIT, OPTIMAL, SdpOptions, SdpSolution,
                  check_solution, project_affine, solve)
from .problem import Realified, SdpProblem, realify, realify_matrix, unrealify_matrix
from .sdpa import export_sdpa, import_sdpa, parse_sdpa, sdpa_text

__all__ = [
    "INACCURATE", "INFEASIBLE", "ITERATION_LIMIT", "OPTIMAL", "IndefiniteError", "Realified",
    "SdpOptions", "SdpProblem", "SdpSolution", "check_solution", "export_sdpa", "import_sdpa",
    "parse_sdpa", "project_affine", "psd_factor", "realify", "realify_matrix", "sdpa_text",
    "solve", "unrealify_matrix",
]
