"""matweight: a numerical laboratory for matrix-weighted harmonic
analysis and degenerate elliptic systems.

Subpackages cover dyadic geometry, matrix A_p / A_{p,q} characteristics
and reducing operators, stopping-time (sparse) families, weighted
maximal and fractional integral operators, Poincare/Sobolev inequality
verifiers, and Q1 Galerkin solvers with local-regularity diagnostics.
"""

__version__ = "0.1.0"

from .dyadic import Cube, CubeFamily, midpoint_nodes, shifted_cover
from .errors import MatweightError
from .grid import GridFunction, read_matw1, write_matw1
from .kernels import BACKEND
from .weight import (MatrixWeight, ReducingPair, Characteristic,
                     a2_trace, ap_characteristic, apq_characteristic,
                     apq_lattice, average_weight, blm_is_a2, dual_weight,
                     matrix_power, reducing_pair)
from .sparse import (HeavyFunction, SparseFamily, heavy_function,
                     heavy_integral_check, stopping_children,
                     stopping_family)
from .operators import (OperatorReport, aux_maximal, fks_local_bound,
                        maximal, operator_ratio, riesz,
                        riesz_dyadic_surrogate, weak_type_check)
from .analysis import (InequalityReport, annulus_mean_comparison,
                       annulus_poincare, default_eps, global_sobolev_ratio,
                       jacobian, poincare_ratio, representation_check,
                       sobolev_ratio)
from .pde import (DiscreteSolution, EllipticProblem, assemble_linear,
                  caccioppoli_check, decay_check, ellipticity_check,
                  holder_modulus, meyers_exponent, solve_linear,
                  solve_plaplace)

__all__ = [
    "__version__",
    "BACKEND",
    "Cube", "CubeFamily", "midpoint_nodes", "shifted_cover",
    "MatweightError",
    "GridFunction", "read_matw1", "write_matw1",
    "MatrixWeight", "ReducingPair", "Characteristic",
    "a2_trace", "ap_characteristic", "apq_characteristic", "apq_lattice",
    "average_weight", "blm_is_a2", "dual_weight", "matrix_power",
    "reducing_pair",
    "HeavyFunction", "SparseFamily", "heavy_function",
    "heavy_integral_check", "stopping_children", "stopping_family",
    "OperatorReport", "aux_maximal", "fks_local_bound", "maximal",
    "operator_ratio", "riesz", "riesz_dyadic_surrogate",
    "weak_type_check",
    "InequalityReport", "annulus_mean_comparison", "annulus_poincare",
    "default_eps", "global_sobolev_ratio", "jacobian", "poincare_ratio",
    "representation_check", "sobolev_ratio",
    "DiscreteSolution", "EllipticProblem", "assemble_linear",
    "caccioppoli_check", "decay_check", "ellipticity_check",
    "holder_modulus", "meyers_exponent", "solve_linear",
    "solve_plaplace",
]
