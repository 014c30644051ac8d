"""Classical simulation of LCU-based quantum linear-system solvers."""
from .approx import (CertificationError, ChebyshevSeries, FourierGrid, chebyshev_series, eval_chebyshev_series,
                     eval_h, fourier_grid, poisson_check)
from .lcu import AmplificationError, LCUProgram, amplify, lcu_once
from .ledger import CostLedger
from .problem import (EntryOracle, InstanceError, SparseHermitianInstance, generate_random_instance,
                      hermitian_dilation, load_instance, prepare_b)
from .simcore import WalkOperator, apply_chebyshev, build_walk, controlled_power_apply, exact_evolution
from .solver import SolveResult, check_statesclose, solve, solve_chebyshev, solve_fourier
from .state import QuantumState
from .vtaa import VTAAConfig, gpe, run_full_tensor, run_pipeline, solve_vtaa, uncompute_and_extract, vtaa_cost

__version__ = "0.1.0"
