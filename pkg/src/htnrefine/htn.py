"""Pure decomposition planning: find a valid decomposition tree."""
from __future__ import annotations

from typing import Optional

from .core import Domain, Instance
from .search import ResourceLimit, SearchConfig, Unsolvable, solve
from .tree import DecompositionTree, linearize, validate_dt

__all__ = ["plan_htn", "validate_dt", "linearize", "Unsolvable", "ResourceLimit"]


def plan_htn(dom: Domain, inst: Instance, cfg: Optional[SearchConfig] = None) -> DecompositionTree:
    """First acyclic valid decomposition tree found by depth-first search.

    The returned tree's ``plan`` records the executed leaf order. Raises
    Unsolvable when the search space is exhausted and ResourceLimit when a
    budget runs out.
    """
    found = solve(dom, inst, cfg or SearchConfig(), max_insertions=0)
    if found is None:
        raise Unsolvable(f"no decomposition tree for {inst.top}")
    return found.tree
