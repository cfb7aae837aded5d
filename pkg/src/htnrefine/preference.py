"""Prioritizations over method sets and the preference they induce."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

from .core import Domain, PlanningError


class NotAPartition(PlanningError):
    pass


class NotStratifiable(PlanningError):
    pass


@dataclass(frozen=True)
class Prioritization:
    """Ordered partition ``P_1 .. P_n`` of method ids.

    Methods in later strata are refined first; ``strata[0]`` has the lowest
    refinement priority.
    """

    strata: Tuple[FrozenSet[str], ...]

    @classmethod
    def over(cls, strata: Iterable[Iterable[str]], method_ids: Iterable[str]) -> "Prioritization":
        strata = tuple(frozenset(s) for s in strata)
        ids = list(method_ids)
        seen: Dict[str, int] = {}
        for i, s in enumerate(strata):
            for m in s:
                if m in seen:
                    raise NotAPartition(f"method {m} appears in strata {seen[m] + 1} and {i + 1}")
                seen[m] = i
        missing = set(ids) - set(seen)
        if missing:
            raise NotAPartition(f"methods missing from prioritization: {sorted(missing)}")
        extra = set(seen) - set(ids)
        if extra:
            raise NotAPartition(f"unknown methods in prioritization: {sorted(extra)}")
        return cls(strata)

    def __len__(self) -> int:
        return len(self.strata)

    def stratum_of(self, method_id: str) -> int:
        """0-based stratum index of a method id."""
        for i, s in enumerate(self.strata):
            if method_id in s:
                return i
        raise KeyError(method_id)

    def vector(self, methods: Iterable[str]) -> Tuple[int, ...]:
        ms = set(methods)
        return tuple(len(ms & s) for s in self.strata)

    def inverted(self) -> "Prioritization":
        return Prioritization(tuple(reversed(self.strata)))


class Preference(enum.Enum):
    LESS = "less"
    EQUAL = "equal"
    GREATER = "greater"


def leq(m1: Iterable[str], m2: Iterable[str], p: Prioritization) -> bool:
    """``m1 <=_P m2``: lexicographic on per-stratum counts, P_1 first."""
    return p.vector(m1) <= p.vector(m2)


def leq_P(m1: Iterable[str], m2: Iterable[str], p: Prioritization) -> Preference:
    v1, v2 = p.vector(m1), p.vector(m2)
    if v1 == v2:
        return Preference.EQUAL
    return Preference.LESS if v1 < v2 else Preference.GREATER


def stratify(dom: Domain) -> Prioritization:
    """Stratum-based prioritization: a method's stratum is its head's depth.

    Depth of a compound is the longest chain of compound subtasks leading to it
    from a compound nobody uses as a subtask.
    """
    uses: Dict[str, set] = {c: set() for c in dom.compounds}
    for m in dom.methods:
        for _, a in m.network.tasks:
            if a.name in dom.compounds:
                uses[m.head.name].add(a.name)
    depth: Dict[str, int] = {}
    indeg = {c: 0 for c in uses}
    for c, subs in uses.items():
        for s in subs:
            indeg[s] += 1
    frontier = sorted(c for c, d in indeg.items() if d == 0)
    for c in frontier:
        depth[c] = 0
    order: List[str] = []
    while frontier:
        c = frontier.pop(0)
        order.append(c)
        for s in sorted(uses[c]):
            depth[s] = max(depth.get(s, 0), depth[c] + 1)
            indeg[s] -= 1
            if indeg[s] == 0:
                frontier.append(s)
    if len(order) != len(uses):
        cyclic = sorted(set(uses) - set(order))
        raise NotStratifiable(f"compound dependencies are cyclic through {cyclic}")
    if not dom.methods:
        return Prioritization(())
    levels = sorted({depth[m.head.name] for m in dom.methods})
    strata = [frozenset(m.id for m in dom.methods if depth[m.head.name] == lv) for lv in levels]
    return Prioritization(tuple(strata))
