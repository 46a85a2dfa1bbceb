from bqn.verifier.bounds import TIE_BREAK, Bounds, propagate_bounds
from bqn.verifier.encode import ConstraintSystem, encode, normalize_hidden_scales
from bqn.verifier.robustness import (
    PremiseError,
    check_counterexample,
    random_attack,
    verify_robustness,
)
from bqn.verifier.sets import (
    Counterexample,
    Holds,
    InputSet,
    OutputProperty,
    SolveStats,
    Timeout,
    Verdict,
)
from bqn.verifier.simplex import LinearProgram, LPResult, lp_feasible
from bqn.verifier.solve import solve

__all__ = [
    "Bounds",
    "ConstraintSystem",
    "Counterexample",
    "Holds",
    "InputSet",
    "LPResult",
    "LinearProgram",
    "OutputProperty",
    "PremiseError",
    "SolveStats",
    "TIE_BREAK",
    "Timeout",
    "Verdict",
    "check_counterexample",
    "encode",
    "lp_feasible",
    "normalize_hidden_scales",
    "propagate_bounds",
    "random_attack",
    "solve",
    "verify_robustness",
]
