from .backend import BackendResult, ClarabelBackend, ConvexProgram, CvxpyBackend, QuadraticRow
from .bnb import SolveReport, SolverOptions, enumerate_binaries_solve, rounded_assignment, solve
from .nested import evaluate_nested_risk, induced_node_costs
from .problem import BinaryInfo, ProblemOptions, RiskAverseProblem, build_problem

__all__ = [
    "BackendResult", "BinaryInfo", "ClarabelBackend", "ConvexProgram", "CvxpyBackend", "ProblemOptions",
    "QuadraticRow", "RiskAverseProblem", "SolveReport", "SolverOptions", "build_problem",
    "enumerate_binaries_solve", "evaluate_nested_risk", "induced_node_costs", "rounded_assignment", "solve",
]
