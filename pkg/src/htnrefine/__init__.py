"""HTN planning with task insertion, and learning refined methods from the insertions."""
from .core import Atom, Domain, Instance, Method, Operator, PlanningError, TaskNetwork, atom, state
from .htn import plan_htn
from .parser import dumps, parse_domain, parse_instance, parse_methods, parse_prioritization
from .preference import Prioritization, leq_P, stratify
from .refine import RefineConfig, method_refine
from .search import SearchConfig
from .tihtn import plan_tihtn
from .tree import DecompositionTree, linearize, validate_dt

__all__ = [
    "Atom",
    "DecompositionTree",
    "Domain",
    "Instance",
    "Method",
    "Operator",
    "PlanningError",
    "Prioritization",
    "RefineConfig",
    "SearchConfig",
    "TaskNetwork",
    "atom",
    "dumps",
    "leq_P",
    "linearize",
    "method_refine",
    "parse_domain",
    "parse_instance",
    "parse_methods",
    "parse_prioritization",
    "plan_htn",
    "plan_tihtn",
    "state",
    "stratify",
    "validate_dt",
]
