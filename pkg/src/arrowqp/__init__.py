"""arrowqp: convex QP solver for multistage problems.

The solver condenses each interior-point Newton system to a positive
definite matrix with block-tri-diagonal-arrow sparsity and factorizes it
with a structure-preserving block Cholesky.  The partition is either known
exactly (stage-wise input) or recovered automatically from generic sparse
data, invariant to constraint ordering.
"""

from .btda import BlockVector, BtdaFactor, BtdaMatrix, factorize, solve_in_place
from .generators import (ScenarioConfig, SpringMassConfig, chain_dynamics,
                         dare, extended_lqc, initial_state_sampler, scenario,
                         spring_mass, spring_mass_with_state)
from .flops import (FlopReport, augmentation_overhead, kernel_cost,
                    mpc_closed_form, predict_factorization)
from .kernels import FlopCounter, NotPositiveDefinite
from .kkt import KktWorkspace, StructureViolation
from .model import (GeneralQP, MultistageProblem, Solution, Status,
                    make_general_qp, objective, to_general_qp, validate)
from .solver import (Settings, Solver, SparsityChanged, compute_residuals,
                     newton_step, solve, step_lengths)
from .structure import (BlockStructure, SparsityPattern, detect,
                        detection_pattern, merge_blocks, verify_cover)
from .verify import kkt_errors, verify_solution

__version__ = "0.1.0"

__all__ = [
    "BlockStructure", "BlockVector", "BtdaFactor", "BtdaMatrix",
    "FlopCounter", "FlopReport", "GeneralQP", "KktWorkspace",
    "MultistageProblem", "NotPositiveDefinite", "ScenarioConfig",
    "Settings", "Solution", "Solver", "SparsityChanged", "SparsityPattern",
    "SpringMassConfig", "Status", "StructureViolation",
    "augmentation_overhead", "chain_dynamics", "compute_residuals", "dare",
    "detect", "detection_pattern", "extended_lqc", "factorize",
    "initial_state_sampler", "kernel_cost", "kkt_errors", "make_general_qp",
    "merge_blocks", "mpc_closed_form", "newton_step", "objective",
    "predict_factorization", "scenario", "solve", "solve_in_place",
    "spring_mass", "spring_mass_with_state", "step_lengths", "to_general_qp",
    "validate", "verify_cover", "verify_solution",
]
