"""Planning for decision processes whose rewards depend on the history.

Rewards are written in past-time temporal logic (PLTL) or in future-time
logic with a reward constant ($FLTL).  Translations turn such a process into
an ordinary MDP: PLTLSIM, PLTLMIN and FLTL build explicit expanded MDPs,
PLTLSTR builds a factored one solved with decision diagrams.
"""

from .domains import load_world, parse_world
from .fltl import ProgressionFailure, fltl_translate, prog, rprog
from .formula import Formula, parse_formula, print_formula, simplify
from .mdp import ActionSpec, DTree, EState, ExpandedMdp, Nmrdp, RewardEntry, expand
from .pltl import pltlmin_translate, pltlsim_translate, regress
from .solvers import SolverConfig, lao_star, policy_iteration, value_iteration
from .structured import pltlstr_translate, reachability, spudd_solve

__all__ = [
    "ActionSpec",
    "DTree",
    "EState",
    "ExpandedMdp",
    "Formula",
    "Nmrdp",
    "ProgressionFailure",
    "RewardEntry",
    "SolverConfig",
    "expand",
    "fltl_translate",
    "lao_star",
    "load_world",
    "parse_formula",
    "parse_world",
    "pltlmin_translate",
    "pltlsim_translate",
    "pltlstr_translate",
    "policy_iteration",
    "print_formula",
    "prog",
    "reachability",
    "regress",
    "rprog",
    "simplify",
    "spudd_solve",
    "value_iteration",
]
