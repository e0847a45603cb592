from .exceptions import (InstanceError, InstanceFormatError, InstanceTypeError, LipgraphException,
                         NumericError, ParameterError, SolverConvergenceError, SupportTooLargeError,
                         WeightFloorError)
from .graph_core import CutInstance, Perturbation, WeightedGraph, lambda2, perturb
from .harness import (ALGORITHMS, StabilityReport, coupled_runs, emd_exact, estimate_lipschitz,
                      mincut_exact, path_sweep, recourse_sim)
from .matching import BMatching, auction_round, solve_matching_fractional
from .min_cut import CutResult, cut_expmech, cut_kway, cut_naive_baseline, solve_fractional
from .pip import PipInstance, round_pip, solve_pip_fractional
from .tape import RandomTape
