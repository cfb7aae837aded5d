"""Decomposition trees: structure, ordering closure, linearization, validation."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from .core import Atom, CycleError, Domain, Instance, Operator, TaskNetwork, grounding_map, transitive_closure

Pair = Tuple[int, int]


class CycleDetected(CycleError):
    pass


@dataclass(frozen=True)
class DecompositionTree:
    """``(T, E, <, alpha, beta)`` plus an optional designated leaf order.

    ``children`` has an entry for every node. ``beta`` maps each decomposed
    node to ``(method id, binding)`` where binding is a sorted tuple of
    ``(variable, constant)`` pairs. ``plan`` fixes which linearization of the
    primitive leaves is the tree's plan; without it the canonical one is used.
    """

    root: int
    children: Mapping[int, Tuple[int, ...]]
    constraints: FrozenSet[Pair]
    alpha: Mapping[int, Atom]
    beta: Mapping[int, Tuple[str, Tuple[Tuple[str, str], ...]]]
    plan: Optional[Tuple[int, ...]] = None

    @property
    def nodes(self) -> Tuple[int, ...]:
        return tuple(self.alpha)

    def parents(self) -> Dict[int, int]:
        return {c: p for p, cs in self.children.items() for c in cs}

    def preorder(self) -> List[int]:
        out, stack = [], [self.root]
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(reversed(self.children.get(n, ())))
        return out

    def inner(self) -> List[int]:
        """Decomposed nodes in preorder."""
        return [n for n in self.preorder() if n in self.beta]

    def primitive_leaves(self) -> List[int]:
        return [n for n in self.preorder() if not self.children.get(n) and n not in self.beta]

    def binding(self, node: int) -> Dict[str, str]:
        return dict(self.beta[node][1])

    def method_id(self, node: int) -> str:
        return self.beta[node][0]

    def order(self) -> FrozenSet[Pair]:
        """``<<``: transitive closure of the constraints."""
        return transitive_closure(self.constraints)

    def depth(self, node: int) -> int:
        par = self.parents()
        d = 0
        while node in par:
            node = par[node]
            d += 1
        return d


def closure(nodes: Iterable[int], children: Mapping[int, Sequence[int]], constraints: Iterable[Pair]) -> FrozenSet[Pair]:
    """Propagate each node's ordering constraints to its children, to a fixpoint."""
    out = set(constraints)
    nodes = list(nodes)
    changed = True
    while changed:
        changed = False
        before = {}
        after = {}
        for a, b in out:
            after.setdefault(a, set()).add(b)
            before.setdefault(b, set()).add(a)
        for t in nodes:
            kids = children.get(t, ())
            if not kids:
                continue
            for ch in kids:
                for x in before.get(t, ()):
                    if (x, ch) not in out:
                        out.add((x, ch))
                        changed = True
                for y in after.get(t, ()):
                    if (ch, y) not in out:
                        out.add((ch, y))
                        changed = True
    return frozenset(out)


def linearize(dt: DecompositionTree) -> Tuple[int, ...]:
    """Canonical plan: topological order of primitive leaves under ``<<``.

    Ties go to the leaf discovered first in a depth-first walk.
    """
    leaves = dt.primitive_leaves()
    rank = {n: i for i, n in enumerate(leaves)}
    order = dt.order()
    if any(a == b for a, b in order):
        raise CycleDetected("ordering constraints of the tree are cyclic")
    succ: Dict[int, List[int]] = {n: [] for n in leaves}
    indeg = {n: 0 for n in leaves}
    for a, b in order:
        if a in rank and b in rank:
            succ[a].append(b)
            indeg[b] += 1
    heap = [rank[n] for n in leaves if indeg[n] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        n = leaves[heapq.heappop(heap)]
        out.append(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(heap, rank[m])
    return tuple(out)


def plan_of(dt: DecompositionTree) -> Tuple[int, ...]:
    """The tree's plan: its designated leaf order, else the canonical one."""
    return dt.plan if dt.plan is not None else linearize(dt)


def plan_actions(dt: DecompositionTree) -> Tuple[Atom, ...]:
    return tuple(dt.alpha[n] for n in plan_of(dt))


def run_actions(dom: Domain, s0, actions: Sequence[Atom]) -> Optional[List[Operator]]:
    """Ground operators executing ``actions`` from ``s0``; None if impossible.

    Operators with non-parameter variables may ground several ways, so this
    backtracks over the choices.
    """
    ops: List[Operator] = []

    def go(i, s):
        if i == len(actions):
            return True
        op = dom.operators.get(actions[i].name)
        if op is None:
            return False
        for g in op.groundings(actions[i].args, s):
            ops.append(g)
            if go(i + 1, (s - g.delete) | g.add):
                return True
            ops.pop()
        return False

    return ops if go(0, s0) else None


@dataclass
class Violation:
    condition: str
    node: Optional[int]
    message: str

    def __str__(self) -> str:
        where = f" at node {self.node}" if self.node is not None else ""
        return f"[{self.condition}]{where}: {self.message}"


@dataclass
class Verdict:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def conditions(self) -> set:
        return {v.condition for v in self.violations}

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "valid" if self.ok else "\n".join(map(str, self.violations))


def validate_dt(dt: DecompositionTree, dom: Domain, inst: Instance, check_executable: bool = True) -> Verdict:
    """Check every validity condition and report all violations.

    Conditions: ``root``, ``structure``, ``1`` (head matches), ``2`` (children
    ground the method's network), ``3``/``4`` (constraint propagation), ``5``
    (acyclic order), ``leaf`` (undecomposed compounds), ``plan`` (designated
    order is a linearization), ``exec`` (plan executable).
    """
    v = Verdict()
    bad = v.violations.append
    nodes = set(dt.alpha)
    if dt.root not in nodes:
        bad(Violation("structure", None, "root is not a node"))
        return v
    if dt.alpha[dt.root] != inst.top:
        bad(Violation("root", dt.root, f"root is {dt.alpha[dt.root]}, expected {inst.top}"))
    seen_parent: Dict[int, int] = {}
    for p, cs in dt.children.items():
        for c in cs:
            if c in seen_parent:
                bad(Violation("structure", c, f"node has two parents {seen_parent[c]} and {p}"))
            seen_parent[c] = p
    if dt.root in seen_parent:
        bad(Violation("structure", dt.root, "root has a parent"))
    if set(dt.preorder()) != nodes:
        bad(Violation("structure", None, "nodes unreachable from the root"))
    methods = {m.id: m for m in dom.methods}
    for t in sorted(nodes):
        kids = tuple(dt.children.get(t, ()))
        if t not in dt.beta:
            if kids:
                bad(Violation("structure", t, "node with children has no method"))
            elif not dom.is_primitive(dt.alpha[t].name):
                bad(Violation("leaf", t, f"compound leaf {dt.alpha[t]} was never decomposed"))
            continue
        mid, binding = dt.beta[t]
        m = methods.get(mid)
        if m is None:
            bad(Violation("2", t, f"unknown method {mid}"))
            continue
        binding = dict(binding)
        if m.head.sub(binding) != dt.alpha[t] or not dt.alpha[t].ground:
            bad(Violation("1", t, f"alpha {dt.alpha[t]} is not the head {m.head} under {binding}"))
        kidset = set(kids)
        sub = TaskNetwork(
            tuple((str(k), dt.alpha[k]) for k in kids),
            frozenset((str(a), str(b)) for a, b in dt.constraints if a in kidset and b in kidset),
        )
        head_binding = {}
        for var, val in zip(m.head.args, dt.alpha[t].args):
            head_binding[var] = val
        if grounding_map(sub, m.network, head_binding) is None:
            bad(Violation("2", t, f"children are not a grounding of {mid}"))
    for a, b in dt.constraints:
        if a not in nodes or b not in nodes:
            bad(Violation("structure", None, f"constraint ({a},{b}) names unknown nodes"))
    for t in sorted(nodes):
        kids = dt.children.get(t, ())
        for a, b in dt.constraints:
            if a == t:
                for st in kids:
                    if (st, b) not in dt.constraints:
                        bad(Violation("3", t, f"({t},{b}) not propagated to child {st}"))
            if b == t:
                for st in kids:
                    if (a, st) not in dt.constraints:
                        bad(Violation("4", t, f"({a},{t}) not propagated to child {st}"))
    order = dt.order()
    cyc = sorted({a for a, b in order if a == b})
    if cyc:
        bad(Violation("5", cyc[0], f"ordering cycle through nodes {cyc}"))
        return v
    leaves = dt.primitive_leaves()
    if dt.plan is not None:
        if sorted(dt.plan) != sorted(leaves):
            bad(Violation("plan", None, "designated plan is not a permutation of the primitive leaves"))
            return v
        pos = {n: i for i, n in enumerate(dt.plan)}
        for a, b in order:
            if a in pos and b in pos and pos[a] > pos[b]:
                bad(Violation("plan", a, f"plan puts {a} after {b} against the ordering"))
    if check_executable:
        actions = [dt.alpha[n] for n in plan_of(dt)]
        if not all(a.ground for a in actions) or run_actions(dom, inst.init, actions) is None:
            bad(Violation("exec", None, "plan is not executable in the initial state"))
    return v


def tree_to_dict(dt: DecompositionTree) -> dict:
    """Plain-data form of a tree (the JSON layout read by ``tree_from_dict``)."""
    nodes = {}
    for n in dt.preorder():
        entry = {"task": str(dt.alpha[n]), "children": list(dt.children.get(n, ()))}
        if n in dt.beta:
            mid, binding = dt.beta[n]
            entry["method"] = mid
            entry["binding"] = dict(binding)
        nodes[str(n)] = entry
    out = {"root": dt.root, "nodes": nodes, "constraints": sorted([a, b] for a, b in dt.constraints)}
    if dt.plan is not None:
        out["plan"] = list(dt.plan)
    return out


def tree_from_dict(data: dict) -> DecompositionTree:
    from .core import atom

    alpha, children, beta = {}, {}, {}
    for key, entry in data["nodes"].items():
        n = int(key)
        alpha[n] = atom(entry["task"])
        children[n] = tuple(int(c) for c in entry.get("children", ()))
        if "method" in entry:
            beta[n] = (entry["method"], tuple(sorted(entry.get("binding", {}).items())))
    constraints = frozenset((int(a), int(b)) for a, b in data.get("constraints", ()))
    plan = tuple(int(n) for n in data["plan"]) if "plan" in data else None
    return DecompositionTree(int(data["root"]), children, constraints, alpha, beta, plan)
