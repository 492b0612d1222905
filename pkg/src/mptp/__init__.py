"""Most probable transition paths: action minimization, conjugate points,
spectral flow and noise-intensity bifurcations for gradient systems."""

from .potential import (PotentialModel, EffectivePotentialEval,
                        eval_potential, eval_effective)
from .action import (PathState, HessianBlocks, CriticalValues,
                     action_value, om_value, action_gradient, action_hessian,
                     path_energy, mane_value, k0_value, r0_select)
from .solver import SolveConfig, SolveResult, minimize_fixed_T, minimize_free_T, \
    check_energy_identity
from .hamiltonian import (SturmCoefficients, FundamentalSolution, Crossing,
                          coefficients_from_path, assemble_B, propagate,
                          conjugate_scan, crossing_form, spectral_flow_s)
from .morse_index import (IndexReport, morse_index_fixed, morse_index_free,
                          a_sigma, correction_index)
from .bifurcation import (SigmaFamily, BifurcationReport, continue_family,
                          spectral_flow_sigma, detect_bifurcations,
                          crossing_curve, classify_stability)

__version__ = "0.1.0"
