"""From a TIHTN plan to refined methods and a completed decomposition tree.

Each inserted operator is attached as a new subtask of some decomposed node
(a completion profile). Attaching it there yields a refined version of that
node's method, with constants lifted back to the method's variables.
"""
from __future__ import annotations

import hashlib
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .core import Atom, Domain, Method, PlanningError, TaskNetwork, is_var, transitive_closure
from .preference import Prioritization
from .tihtn import TIHTNResult
from .tree import DecompositionTree, closure

log = logging.getLogger(__name__)

Pair = Tuple[int, int]


class InternalInconsistency(PlanningError):
    pass


class NoValidProfile(PlanningError):
    pass


class LiftConflict(PlanningError):
    pass


@dataclass(frozen=True)
class ExtendedOrder:
    """Tree order ``<<`` extended with the execution order of sigma.

    Inserted operators get fresh node ids, numbered after the tree's nodes in
    sigma order. ``sequence`` lists the node id at each sigma position.
    """

    tree: DecompositionTree
    sequence: Tuple[int, ...]
    inserted: Tuple[int, ...]
    actions: Mapping[int, Atom]
    pairs: FrozenSet[Pair]

    def position(self, node: int) -> int:
        return self.sequence.index(node)

    def before(self, a: int, b: int) -> bool:
        return (a, b) in self.pairs

    def window(self, t: int) -> Tuple[int, int]:
        """Open sigma-position interval between t's last predecessor and first successor."""
        lo, hi = -1, len(self.sequence)
        for i, p in enumerate(self.sequence):
            if (p, t) in self.pairs:
                lo = max(lo, i)
            if (t, p) in self.pairs:
                hi = min(hi, i)
        return lo, hi

    def span(self, node: int) -> Tuple[int, ...]:
        """Sigma positions of the primitives at or below ``node``."""
        if node in self.actions:
            return (self.position(node),)
        return tuple(sorted(self.position(n) for n in _leaves_under(self.tree, node) if n in self.sequence))

    def local_pairs(self, group: Iterable[int], inserted: Iterable[int]) -> Set[Pair]:
        """Order among siblings that involves an inserted node.

        Compound siblings have no sigma position, so a pair is added when one
        node's primitives all run before the other's.
        """
        group, inserted = list(group), set(inserted)
        spans = {n: self.span(n) for n in group}
        out = set()
        for a in group:
            for b in group:
                if a == b or not (a in inserted or b in inserted):
                    continue
                if spans[a] and spans[b] and spans[a][-1] < spans[b][0]:
                    out.add((a, b))
        return out


def extend_order(result: TIHTNResult) -> ExtendedOrder:
    tree = result.tree
    nxt = max(tree.alpha) + 1
    seq, inserted, actions = [], [], {}
    for g, leaf in result.sigma:
        if leaf is None:
            seq.append(nxt)
            inserted.append(nxt)
            actions[nxt] = g.head
            nxt += 1
        else:
            seq.append(leaf)
    pairs = set(tree.constraints)
    pairs.update(zip(seq, seq[1:]))
    closed = transitive_closure(pairs)
    if any(a == b for a, b in closed):
        raise InternalInconsistency("sigma contradicts the tree's ordering constraints")
    return ExtendedOrder(tree, tuple(seq), tuple(inserted), actions, closed)


def candidate_set(ext: ExtendedOrder, t: int, unlabeled: Iterable[int]) -> FrozenSet[int]:
    """Unlabeled inserted tasks executed strictly inside t's window."""
    lo, hi = ext.window(t)
    return frozenset(x for x in unlabeled if lo < ext.position(x) < hi)


@dataclass(frozen=True)
class CompletionProfile:
    """Inserted node id -> decomposed node it becomes a subtask of."""

    assignment: Mapping[int, int]
    operations: int = 0

    def targets(self) -> Tuple[int, ...]:
        return tuple(sorted(set(self.assignment.values())))

    def subtasks_of(self, t: int) -> Tuple[int, ...]:
        return tuple(sorted(x for x, y in self.assignment.items() if y == t))


def is_valid_profile(ext: ExtendedOrder, assignment: Mapping[int, int]) -> bool:
    """No primitive sits between an inserted task and its node against the order."""
    if set(assignment) != set(ext.inserted):
        return False
    return all(t in ext.tree.beta and is_valid_profile_entry(ext, x, t) for x, t in assignment.items())


def origin_of(dom: Domain, method_id: str) -> str:
    return dom.method(method_id).root


def profile_origins(dom: Domain, tree: DecompositionTree, assignment: Mapping[int, int]) -> FrozenSet[str]:
    return frozenset(origin_of(dom, tree.method_id(t)) for t in set(assignment.values()))


def complete_profile(
    result: TIHTNResult,
    prio: Prioritization,
    dom: Domain,
    ext: Optional[ExtendedOrder] = None,
    exact_cap: int = 12,
) -> CompletionProfile:
    """Preferred completion profile.

    First the set of original methods to refine is fixed: the smallest one
    under the prioritized preference whose nodes' windows jointly hold every
    inserted task (exhaustive when at most ``exact_cap`` methods qualify,
    otherwise each stratum, highest refinement priority first, absorbs what
    it can with as few methods as possible). Between equally preferred
    choices, methods whose nodes come later in sigma win.

    Then the strata are scanned from the highest refinement priority down;
    chosen nodes are visited latest first and each takes every unlabeled task
    inside its window. Anything left over goes to the root.
    """
    ext = ext or extend_order(result)
    tree = ext.tree
    unlabeled: List[int] = list(ext.inserted)
    rho: Dict[int, int] = {}
    ops = 0
    if not unlabeled:
        return CompletionProfile({}, 0)
    first_pos = {}
    for t in tree.inner():
        leaves = [i for i, n in enumerate(ext.sequence) if n in _leaves_under(tree, t)]
        first_pos[t] = min(leaves) if leaves else ext.window(t)[0]
    windows = {t: ext.window(t) for t in tree.inner()}
    pos = {x: ext.position(x) for x in ext.inserted}

    def delta(t: int) -> List[int]:
        nonlocal ops
        lo, hi = windows[t]
        ops += len(unlabeled)
        return [x for x in unlabeled if lo < pos[x] < hi]

    nodes: Dict[str, List[int]] = {}
    for t in tree.inner():
        nodes.setdefault(origin_of(dom, tree.method_id(t)), []).append(t)
    takes = {t: delta(t) for t in tree.inner()}
    cover = {o: frozenset(x for t in ts for x in takes[t]) for o, ts in nodes.items()}
    cover = {o: c for o, c in cover.items() if c}
    latest = {o: max(first_pos[t] for t in nodes[o] if takes[t]) for o in cover}
    stratum = {o: prio.stratum_of(o) for o in cover}
    if len(cover) <= exact_cap:
        chosen = _preferred_origins(cover, latest, stratum, len(prio), frozenset(unlabeled))
    else:
        chosen = set()
        left = set(unlabeled)
        for j in reversed(range(len(prio))):
            here = {o: c & left for o, c in cover.items() if stratum[o] == j and c & left}
            if here:
                picked = _min_cover(here, latest, exact_cap)
                chosen.update(picked)
                for o in picked:
                    left -= here[o]
    for j in reversed(range(len(prio))):
        scan = [t for o in chosen if stratum[o] == j for t in nodes[o]]
        for t in sorted(scan, key=lambda n: (-first_pos[n], n)):
            for x in delta(t):
                rho[x] = t
                unlabeled.remove(x)
    for x in unlabeled:
        rho[x] = tree.root
    profile = CompletionProfile(rho, ops)
    if not is_valid_profile(ext, rho):
        raise NoValidProfile("profile violates the ordering of sigma")
    return profile


def _preferred_origins(cover, latest, stratum, n_strata: int, universe: FrozenSet[int]) -> Tuple[str, ...]:
    """Covering set of methods with the least per-stratum counts, lowest stratum compared first."""
    names = sorted(cover)
    best, best_key = None, None
    for size in range(len(names) + 1):
        for combo in itertools.combinations(names, size):
            if frozenset().union(*(cover[o] for o in combo)) != universe:
                continue
            vec = [0] * n_strata
            for o in combo:
                vec[stratum[o]] += 1
            key = (tuple(vec), sorted(-latest[o] for o in combo), combo)
            if best_key is None or key < best_key:
                best, best_key = combo, key
    if best is None:
        raise NoValidProfile("inserted tasks cannot all be placed")
    return best


def _min_cover(cover: Mapping[str, FrozenSet[int]], latest: Mapping[str, int], exact_cap: int) -> Tuple[str, ...]:
    """Fewest methods whose windows jointly hold every coverable task."""
    universe = frozenset().union(*cover.values())
    names = sorted(cover, key=lambda o: (-latest[o], o))

    def rank(combo):
        return sorted(-latest[o] for o in combo), combo

    if len(names) <= exact_cap:
        for size in range(1, len(names) + 1):
            hits = [c for c in itertools.combinations(names, size) if frozenset().union(*(cover[o] for o in c)) == universe]
            if hits:
                return min(hits, key=rank)
    chosen: List[str] = []
    left = set(universe)
    while left:
        o = max(names, key=lambda o: (len(cover[o] & left), latest[o], o))
        chosen.append(o)
        left -= cover[o]
    return tuple(chosen)


def admissible_nodes(ext: ExtendedOrder, x: int) -> List[int]:
    """Decomposed nodes that inserted task ``x`` may be attached to."""
    return [t for t in ext.tree.inner() if is_valid_profile_entry(ext, x, t)]


def is_valid_profile_entry(ext: ExtendedOrder, x: int, t: int) -> bool:
    for p in ext.sequence:
        if ext.before(p, t) and ext.before(x, p):
            return False
        if ext.before(t, p) and ext.before(p, x):
            return False
    return True


def random_profile(result: TIHTNResult, rng, ext: Optional[ExtendedOrder] = None) -> CompletionProfile:
    """Uniform choice among admissible nodes, independently per inserted task."""
    ext = ext or extend_order(result)
    return CompletionProfile({x: rng.choice(admissible_nodes(ext, x)) for x in ext.inserted})


def _leaves_under(tree: DecompositionTree, t: int) -> Set[int]:
    out, stack = set(), [t]
    while stack:
        n = stack.pop()
        kids = tree.children.get(n, ())
        if not kids and n not in tree.beta:
            out.add(n)
        stack.extend(kids)
    return out


def lift_constants(action: Atom, tree: DecompositionTree, t: int, dom: Domain, strict: bool = False) -> Atom:
    """Replace constants known in t's context by the variables they instantiate.

    Head parameters take precedence; otherwise the variable of the
    lowest-indexed child that mentions the constant is used.
    """
    m = dom.method(tree.method_id(t))
    ctx: Dict[str, str] = {}
    seen: Dict[str, Set[str]] = {}

    def note(var: str, val: str) -> None:
        if is_var(var):
            ctx.setdefault(val, var)
            seen.setdefault(val, set()).add(var)

    for var, val in zip(m.head.args, tree.alpha[t].args):
        note(var, val)
    for (_, pattern), child in zip(m.network.tasks, tree.children.get(t, ())):
        for var, val in zip(pattern.args, tree.alpha[child].args):
            note(var, val)
    if strict:
        for c in action.args:
            if len(seen.get(c, ())) > 1:
                raise LiftConflict(f"{c} stands for {sorted(seen[c])} in {m.id}")
    return Atom(action.name, tuple(ctx.get(c, c) for c in action.args))


def method_key(m: Method) -> str:
    """Digest of a method's structure, independent of task listing order."""
    tasks = sorted(f"{tid}={a.name}({','.join(a.args)})" for tid, a in m.network.tasks)
    order = sorted(f"{a}<{b}" for a, b in m.network.order)
    head = f"{m.head.name}({','.join(m.head.args)})"
    text = "|".join([m.root, head, ";".join(tasks), ";".join(order)])
    return hashlib.sha1(text.encode()).hexdigest()[:8]


def _merge_children(kids: Sequence[int], new: Sequence[int], ext: ExtendedOrder, tree: DecompositionTree) -> List[int]:
    """Insert ``new`` nodes among ``kids`` so that listing follows sigma."""
    first = {}
    for c in kids:
        pos = [ext.position(n) for n in _leaves_under(tree, c) if n in ext.sequence]
        first[c] = min(pos) if pos else None
    out = list(kids)
    for x in sorted(new, key=ext.position):
        px = ext.position(x)
        at = len(out)
        for i, c in enumerate(out):
            fc = first.get(c)
            if fc is None and c in first:
                continue
            if c not in first:  # previously placed inserted node
                if ext.position(c) > px:
                    at = i
                    break
                continue
            if fc > px:
                at = i
                break
        out.insert(at, x)
    return out


def refine_method(result: TIHTNResult, rho: CompletionProfile, t: int, dom: Domain, ext: Optional[ExtendedOrder] = None) -> Method:
    """The refined method of node t's method under ``rho``."""
    ext = ext or extend_order(result)
    tree = ext.tree
    new = rho.subtasks_of(t)
    if not new:
        raise PlanningError(f"node {t} receives no inserted tasks")
    m = dom.method(tree.method_id(t))
    kids = list(tree.children.get(t, ()))
    ids = {c: tid for (tid, _), c in zip(m.network.tasks, kids)}
    taken = set(m.network.ids)
    n = len(m.network.tasks)
    for x in sorted(new, key=ext.position):
        n += 1
        while f"t{n}'" in taken:
            n += 1
        ids[x] = f"t{n}'"
        taken.add(ids[x])
    merged = _merge_children(kids, new, ext, tree)
    actions = {tid: a for tid, a in m.network.tasks}
    for x in new:
        actions[ids[x]] = lift_constants(ext.actions[x], tree, t, dom)
    extra = {(ids[a], ids[b]) for a, b in ext.local_pairs(kids + list(new), new)}
    net = TaskNetwork(tuple((ids[c], actions[ids[c]]) for c in merged), m.network.order | frozenset(extra))
    refined = Method("", m.head, net, m.root, m.inserted + tuple(ids[x] for x in sorted(new, key=ext.position)))
    return Method(f"{m.root}-r{method_key(refined)}", refined.head, refined.network, refined.origin, refined.inserted)


@dataclass(frozen=True)
class Completion:
    """Completed tree plus the refined method used at each affected node."""

    tree: DecompositionTree
    methods: Mapping[int, Method]
    profile: CompletionProfile

    def method_set(self) -> Tuple[Method, ...]:
        seen = {}
        for t in sorted(self.methods):
            m = self.methods[t]
            seen.setdefault(m.id, m)
        return tuple(seen.values())


def complete_dt(result: TIHTNResult, rho: CompletionProfile, dom: Domain, ext: Optional[ExtendedOrder] = None) -> Completion:
    """Attach inserted tasks to their nodes and switch those nodes to refined methods.

    The plan of the completed tree is sigma itself.
    """
    ext = ext or extend_order(result)
    tree = ext.tree
    if not is_valid_profile(ext, rho.assignment):
        raise InternalInconsistency("completion profile is not valid")
    children = {n: tuple(cs) for n, cs in tree.children.items()}
    alpha = dict(tree.alpha)
    beta = dict(tree.beta)
    refined: Dict[int, Method] = {}
    local: Set[Pair] = set()
    for t in rho.targets():
        new = rho.subtasks_of(t)
        kids = list(tree.children.get(t, ()))
        children[t] = tuple(_merge_children(kids, new, ext, tree))
        for x in new:
            children[x] = ()
            alpha[x] = ext.actions[x]
        m = refine_method(result, rho, t, dom, ext)
        refined[t] = m
        beta[t] = (m.id, tree.beta[t][1])
        local.update(ext.local_pairs(kids + list(new), new))
    constraints = closure(alpha.keys(), children, set(tree.constraints) | local)
    done = DecompositionTree(tree.root, children, constraints, alpha, beta, ext.sequence)
    return Completion(done, refined, rho)
