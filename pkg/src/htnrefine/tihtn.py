"""Planning with task insertion.

A TIHTN plan is an executable operator sequence that contains the plan of a
decomposition tree as a subsequence; the remaining operators are inserted.
The search grows the number of inserted operators one at a time, so the first
plan found uses as few insertions as any.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Sequence, Tuple

from .core import Atom, Domain, Instance, Operator, State
from .search import InsertionFilter, NoTIHTNPlan, ResourceLimit, SearchConfig, ground_operator_instances, solve
from .tree import DecompositionTree

INSERTED = None


@dataclass(frozen=True)
class TIHTNResult:
    """``sigma`` pairs each ground operator with the leaf it realises (None if inserted)."""

    sigma: Tuple[Tuple[Operator, Optional[int]], ...]
    tree: DecompositionTree

    @property
    def inserted(self) -> Tuple[int, ...]:
        """Positions in sigma holding inserted operators."""
        return tuple(i for i, (_, leaf) in enumerate(self.sigma) if leaf is None)

    @property
    def k(self) -> int:
        return len(self.inserted)

    @property
    def operators(self) -> Tuple[Operator, ...]:
        return tuple(g for g, _ in self.sigma)

    @property
    def actions(self) -> Tuple[Atom, ...]:
        return tuple(g.head for g, _ in self.sigma)

    def skeleton(self) -> Tuple[Operator, ...]:
        """Operators realising tree leaves, in sigma order."""
        return tuple(g for g, leaf in self.sigma if leaf is not None)

    def pretty(self) -> List[str]:
        return [("+" if leaf is None else "") + str(g.head) for g, leaf in self.sigma]


def plan_tihtn(dom: Domain, inst: Instance, cfg: Optional[SearchConfig] = None) -> TIHTNResult:
    """Raises NoTIHTNPlan when no tree admits a plan within ``cfg.max_insertions``."""
    cfg = cfg or SearchConfig()
    found = solve(dom, inst, cfg, max_insertions=cfg.max_insertions)
    if found is None:
        raise NoTIHTNPlan(f"no TIHTN plan for {inst.top} with at most {cfg.max_insertions} insertions")
    return TIHTNResult(tuple(found.steps), found.tree)


def insertion_search(
    dom: Domain,
    s0: State,
    skeleton: Sequence[Atom | Operator],
    k: int,
    constants: Sequence[str] = (),
    deadline: Optional[float] = None,
) -> Optional[List[Tuple[Operator, bool]]]:
    """Executable supersequence of ``skeleton`` with at most ``k`` insertions.

    Returns ``(operator, inserted?)`` pairs or None. Smaller insertion counts
    are tried first; within a count, later insertion points are preferred.
    """
    actions = [x.head if isinstance(x, Operator) else x for x in skeleton]
    if not constants:
        consts = set()
        for a in s0:
            consts.update(a.args)
        for a in actions:
            consts.update(a.args)
        constants = sorted(consts)
    patterns = []
    for a in actions:
        op = dom.operators[a.name]
        inst_op = op.sub(dict(zip(op.params, a.args)))
        patterns.append((inst_op.pos, inst_op.neg))
    # the relevance filter only looks at preconditions still ahead
    filters = [
        InsertionFilter(dom, [p for pos, _ in patterns[i:] for p in pos], [n for _, neg in patterns[i:] for n in neg])
        for i in range(len(actions) + 1)
    ]
    failed = {}
    out: List[Tuple[Operator, bool]] = []

    def go(i: int, s: State, budget: int) -> bool:
        if deadline is not None and time.monotonic() > deadline:
            raise ResourceLimit("insertion search ran out of time")
        if i == len(actions):
            return True
        if failed.get((i, s), -1) >= budget:
            return False
        op = dom.operators[actions[i].name]
        for g in op.groundings(actions[i].args, s):
            out.append((g, False))
            if go(i + 1, (s - g.delete) | g.add, budget):
                return True
            out.pop()
        if budget > 0:
            for name in sorted(dom.operators):
                for g in ground_operator_instances(dom.operators[name], s, constants):
                    if not filters[i].relevant(g, budget):
                        continue
                    out.append((g, True))
                    if go(i, (s - g.delete) | g.add, budget - 1):
                        return True
                    out.pop()
        failed[(i, s)] = budget
        return False

    for b in range(k + 1):
        if go(0, s0, b):
            return out
    return None
