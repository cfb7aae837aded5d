"""Depth-first decomposition search shared by the HTN and TIHTN planners.

The engine first decomposes every compound task (methods in parsed order),
then executes primitive leaves in any order their constraints allow, trying
the leftmost ready leaf first. Variables local to a method stay unbound until
a primitive that mentions them is matched against the current state. With an
insertion budget, operators from outside the tree may be executed as well.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from itertools import product
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Set, Tuple

from .core import Atom, Domain, Instance, Method, Operator, PlanningError, State, is_var, match
from .tree import DecompositionTree, closure

log = logging.getLogger(__name__)


class Unsolvable(PlanningError):
    pass


class NoTIHTNPlan(Unsolvable):
    pass


class ResourceLimit(PlanningError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    """Search budgets. ``time_budget`` is in seconds."""

    max_insertions: int = 6
    node_budget: int = 1_000_000
    time_budget: float = 30.0
    max_depth: int = 32


class _Node:
    __slots__ = ("action", "parent", "children", "method", "scope", "preds", "done", "path")

    def __init__(self, action: Atom, parent: Optional[int], path: Tuple[int, ...]):
        self.action = action
        self.parent = parent
        self.children: Tuple[int, ...] = ()
        self.method: Optional[Method] = None
        self.scope: Dict[str, str] = {}
        self.preds: Tuple[int, ...] = ()
        self.done = False
        self.path = path


@dataclass
class Found:
    tree: DecompositionTree
    steps: List[Tuple[Operator, Optional[int]]]  # (ground operator, leaf id or None if inserted)
    expanded: int


def ground_operator_instances(op: Operator, s: State, constants: Sequence[str]) -> Iterator[Operator]:
    """All ground instances of ``op`` applicable in ``s``, canonical order."""
    for g, _ in op.instances(op.params, s, constants):
        yield g


def _relevant_predicates(dom: Domain, seed: Set[str], depth: int) -> Set[str]:
    """Predicates whose change could matter within ``depth`` supporting steps."""
    rel = set(seed)
    for _ in range(depth):
        grow = set(rel)
        for op in dom.operators.values():
            if {a.name for a in op.add} & rel or {a.name for a in op.delete} & rel:
                grow |= {a.name for a in op.pos} | {a.name for a in op.neg}
        if grow == rel:
            break
        rel = grow
    return rel


def _unifies(pattern: Atom, fact: Atom) -> bool:
    return match(pattern, fact, {}) is not None


class InsertionFilter:
    """Keeps inserted operators that support some pending precondition."""

    def __init__(self, dom: Domain, pos: Sequence[Atom], neg: Sequence[Atom]):
        self.dom = dom
        self.pos = list(pos)
        self.neg = list(neg)
        self.seed = {a.name for a in self.pos} | {a.name for a in self.neg}
        self._rel: Dict[int, Set[str]] = {}

    def relevant(self, g: Operator, budget: int) -> bool:
        if any(_unifies(p, a) for a in g.add for p in self.pos):
            return True
        if any(_unifies(p, a) for a in g.delete for p in self.neg):
            return True
        if budget >= 2:
            rel = self._rel.get(budget)
            if rel is None:
                rel = self._rel[budget] = _relevant_predicates(self.dom, self.seed, budget - 1)
            return bool(({a.name for a in g.add} | {a.name for a in g.delete}) & rel)
        return False


class Engine:
    def __init__(self, dom: Domain, inst: Instance, cfg: SearchConfig):
        self.dom = dom
        self.inst = inst
        self.cfg = cfg
        self.constants = tuple(sorted(inst.constants() | dom.constants))
        self.nodes: List[_Node] = []
        self.theta: Dict[str, str] = {}
        self.trail: List[tuple] = []
        self.steps: List[Tuple[Operator, Optional[int]]] = []
        self.memo: Dict[tuple, int] = {}
        self.expanded = 0
        self.deadline = 0.0

    # -- variable handling --------------------------------------------------

    def resolve(self, term: str) -> str:
        while is_var(term) and term in self.theta:
            term = self.theta[term]
        return term

    def resolved(self, a: Atom) -> Atom:
        return Atom(a.name, tuple(self.resolve(x) for x in a.args))

    def bind(self, var: str, value: str) -> None:
        self.theta[var] = value
        self.trail.append(("bind", var))

    def unify(self, x: str, y: str) -> bool:
        x, y = self.resolve(x), self.resolve(y)
        if x == y:
            return True
        if is_var(x):
            self.bind(x, y)
            return True
        if is_var(y):
            self.bind(y, x)
            return True
        return False

    # -- trail --------------------------------------------------------------

    def mark(self) -> int:
        return len(self.trail)

    def undo(self, mark: int) -> None:
        while len(self.trail) > mark:
            entry = self.trail.pop()
            kind = entry[0]
            if kind == "bind":
                del self.theta[entry[1]]
            elif kind == "done":
                self.nodes[entry[1]].done = False
            elif kind == "expand":
                n = self.nodes[entry[1]]
                del self.nodes[entry[2]:]
                n.children = ()
                n.method = None
                n.scope = {}

    def set_done(self, n: int) -> None:
        while n is not None:
            node = self.nodes[n]
            if node.done:
                return
            if node.children and not all(self.nodes[c].done for c in node.children):
                return
            node.done = True
            self.trail.append(("done", n))
            n = node.parent

    # -- budget -------------------------------------------------------------

    def tick(self) -> None:
        self.expanded += 1
        if self.expanded > self.cfg.node_budget:
            raise ResourceLimit(f"node budget {self.cfg.node_budget} exhausted")
        if self.expanded & 255 == 0 and time.monotonic() > self.deadline:
            raise ResourceLimit(f"time budget {self.cfg.time_budget}s exhausted")

    # -- tree construction --------------------------------------------------

    def start(self) -> None:
        self.nodes = [_Node(self.inst.top, None, ())]
        self.theta = {}
        self.trail = []
        self.steps = []

    def decompose(self, n: int, m: Method) -> bool:
        node = self.nodes[n]
        if len(node.path) >= self.cfg.max_depth:
            return False
        mark = self.mark()
        scope = {}
        for v in dict.fromkeys(m.head.variables() + m.network.variables()):
            scope[v] = f"{v}#{n}"
        head = m.head.sub(scope)
        if len(head.args) != len(node.action.args):
            return False
        for x, y in zip(head.args, node.action.args):
            if not self.unify(x, y):
                self.undo(mark)
                return False
        here = self.resolved(node.action)
        p = node.parent
        while p is not None:
            if self.resolved(self.nodes[p].action) == here:
                self.undo(mark)
                return False
            p = self.nodes[p].parent
        first = len(self.nodes)
        ids = {tid: first + i for i, (tid, _) in enumerate(m.network.tasks)}
        preds: Dict[str, List[int]] = {tid: [] for tid in ids}
        for a, b in sorted(m.network.order):
            preds[b].append(ids[a])
        for i, (tid, a) in enumerate(m.network.tasks):
            child = _Node(a.sub(scope), n, node.path + (i,))
            child.preds = tuple(preds[tid])
            self.nodes.append(child)
        node.children = tuple(range(first, len(self.nodes)))
        node.method = m
        node.scope = scope
        self.trail.append(("expand", n, first))
        if not node.children:
            self.set_done(n)
        return True

    def open_compound(self) -> Optional[int]:
        for i, node in enumerate(self.nodes):
            if node.method is None and not node.done and self.dom.is_compound(node.action.name):
                return i
        return None

    def ready(self, n: int) -> bool:
        while n is not None:
            node = self.nodes[n]
            if not all(self.nodes[p].done for p in node.preds):
                return False
            n = node.parent
        return True

    def pending_primitives(self) -> List[int]:
        return [i for i, node in enumerate(self.nodes) if not node.done and not node.children and node.method is None]

    def key(self, s: State) -> tuple:
        return (s, tuple((self.resolved(n.action), n.method.id if n.method else None, n.done) for n in self.nodes))

    # -- search -------------------------------------------------------------

    def leaf_groundings(self, n: int, s: State) -> Iterator[Tuple[Operator, List[Tuple[str, str]]]]:
        act = self.resolved(self.nodes[n].action)
        op = self.dom.operators[act.name]
        for g, values in op.instances(act.args, s, self.constants):
            yield g, sorted(values.items())

    def insertion_filter(self, leaves: Optional[Sequence[int]] = None) -> InsertionFilter:
        pos, neg = [], []
        for n in self.pending_primitives() if leaves is None else leaves:
            act = self.resolved(self.nodes[n].action)
            op = self.dom.operators[act.name]
            inst_op = op.sub(dict(zip(op.params, act.args)))
            pos.extend(inst_op.pos)
            neg.extend(inst_op.neg)
        return InsertionFilter(self.dom, pos, neg)

    def search(self, s: State, budget: int) -> bool:
        self.tick()
        n = self.open_compound()
        if n is not None:
            for m in self.dom.methods_for(self.nodes[n].action.name):
                mark = self.mark()
                if self.decompose(n, m):
                    if self.search(s, budget):
                        return True
                self.undo(mark)
            return False
        pending = self.pending_primitives()
        if not pending:
            return self.finish()
        key = self.key(s)
        if self.memo.get(key, -1) >= budget:
            return False
        for leaf in pending:
            if not self.ready(leaf):
                continue
            for g, binds in self.leaf_groundings(leaf, s):
                mark = self.mark()
                if all(self.unify(x, c) for x, c in binds):
                    self.set_done(leaf)
                    self.steps.append((g, leaf))
                    if self.search((s - g.delete) | g.add, budget):
                        return True
                    self.steps.pop()
                self.undo(mark)
        if budget > 0:
            # operators that directly help a ready leaf go first, which keeps
            # insertions next to the step that needs them
            now = self.insertion_filter([n for n in pending if self.ready(n)])
            flt = self.insertion_filter(pending)
            cands = [g for name in sorted(self.dom.operators) for g in ground_operator_instances(self.dom.operators[name], s, self.constants)]
            first = [g for g in cands if now.relevant(g, 1)]
            rest = [g for g in cands if not now.relevant(g, 1) and flt.relevant(g, budget)]
            for g in first + rest:
                self.steps.append((g, None))
                if self.search((s - g.delete) | g.add, budget - 1):
                    return True
                self.steps.pop()
        self.memo[key] = max(budget, self.memo.get(key, -1))
        return False

    def finish(self) -> bool:
        unbound = []
        for node in self.nodes:
            for x in self.resolved(node.action).args:
                if is_var(x) and x not in unbound:
                    unbound.append(x)
        for combo in product(self.constants, repeat=len(unbound)):
            mark = self.mark()
            for x, c in zip(unbound, combo):
                self.bind(x, c)
            if self._acyclic():
                return True
            self.undo(mark)
        return False

    def _acyclic(self) -> bool:
        for i, node in enumerate(self.nodes):
            if node.method is None:
                continue
            here = self.resolved(node.action)
            p = node.parent
            while p is not None:
                if self.resolved(self.nodes[p].action) == here:
                    return False
                p = self.nodes[p].parent
        return True

    def run(self, budget: int) -> bool:
        self.start()
        return self.search(self.inst.init, budget)

    # -- output -------------------------------------------------------------

    def build(self) -> Found:
        order = []
        stack = [0]
        while stack:
            n = stack.pop()
            order.append(n)
            stack.extend(reversed(self.nodes[n].children))
        ids = {n: i for i, n in enumerate(order)}
        children = {ids[n]: tuple(ids[c] for c in self.nodes[n].children) for n in order}
        alpha = {ids[n]: self.resolved(self.nodes[n].action) for n in order}
        beta = {}
        pairs = set()
        for n in order:
            node = self.nodes[n]
            if node.method is None:
                continue
            binding = tuple(sorted((v, self.resolve(sv)) for v, sv in node.scope.items()))
            beta[ids[n]] = (node.method.id, binding)
            tid_to_node = {tid: ids[c] for (tid, _), c in zip(node.method.network.tasks, node.children)}
            for a, b in node.method.network.order:
                pairs.add((tid_to_node[a], tid_to_node[b]))
        constraints = closure(children.keys(), children, pairs)
        plan = tuple(ids[leaf] for _, leaf in self.steps if leaf is not None)
        tree = DecompositionTree(ids[0], children, constraints, alpha, beta, plan)
        steps = [(g, ids[leaf] if leaf is not None else None) for g, leaf in self.steps]
        return Found(tree, steps, self.expanded)


def solve(dom: Domain, inst: Instance, cfg: SearchConfig, max_insertions: int) -> Optional[Found]:
    """Iterative deepening on the number of inserted operators."""
    eng = Engine(dom, inst, cfg)
    eng.deadline = time.monotonic() + cfg.time_budget
    for k in range(max_insertions + 1):
        if eng.run(k):
            log.debug("solved %s with %d insertions after %d nodes", inst.name, k, eng.expanded)
            return eng.build()
    return None
