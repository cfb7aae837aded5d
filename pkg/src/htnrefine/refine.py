"""Learning refined methods from a set of instances.

Each instance is solved with task insertion, its inserted operators are
attached to decomposed nodes, and the refined methods that result are then
pruned stratum by stratum: a refined method is dropped when a homologous one
(same original method) can stand in for it in every completed tree.
"""
from __future__ import annotations

import itertools
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import random

from .completion import Completion, complete_dt, complete_profile, extend_order, random_profile
from .core import Domain, Instance, Method, PlanningError, TaskNetwork, grounding_map
from .preference import Preference, Prioritization, leq, leq_P, stratify
from .search import ResourceLimit, SearchConfig, Unsolvable
from .tihtn import TIHTNResult, plan_tihtn
from .tree import DecompositionTree, closure

__all__ = [
    "Prioritization",
    "Preference",
    "leq",
    "leq_P",
    "stratify",
    "RefineConfig",
    "RefineOutput",
    "TrainedTree",
    "substitute",
    "find_replacement",
    "replaceable",
    "minimize_stratum",
    "method_refine",
    "executable_order",
]

log = logging.getLogger(__name__)


class UnboundVariable(PlanningError):
    pass


@dataclass(frozen=True)
class RefineConfig:
    search: SearchConfig = field(default_factory=SearchConfig)
    exact_cap: int = 12
    minimize: bool = True
    order_budget: int = 200_000
    # "preferred" runs the prioritized profile choice; "random" picks any valid profile
    profile: str = "preferred"
    seed: int = 0


@dataclass(frozen=True)
class TrainedTree:
    """A completed tree together with the instance it solves."""

    tree: DecompositionTree
    inst: Instance


def executable_order(dt: DecompositionTree, dom: Domain, inst: Instance, prefer: Mapping[int, float] = None, budget: int = 200_000) -> Optional[Tuple[int, ...]]:
    """Some linearization of the leaves that executes from ``inst.init``.

    Ready leaves are tried in ``prefer`` order (lower first), so a nearly
    right order is found without much backtracking.
    """
    leaves = dt.primitive_leaves()
    prefer = prefer or {n: i for i, n in enumerate(leaves)}
    order = dt.order()
    leafset = set(leaves)
    preds = {n: {a for a, b in order if b == n and a in leafset} for n in leaves}
    failed: Set = set()
    out: List[int] = []
    steps = 0

    def go(done: frozenset, s) -> bool:
        nonlocal steps
        if len(done) == len(leaves):
            return True
        if (done, s) in failed:
            return False
        steps += 1
        if steps > budget:
            raise ResourceLimit("no executable order found within budget")
        ready = sorted((n for n in leaves if n not in done and preds[n] <= done), key=lambda n: (prefer.get(n, 0), n))
        for n in ready:
            a = dt.alpha[n]
            op = dom.operators.get(a.name)
            if op is None or not a.ground:
                return False
            for g in op.groundings(a.args, s):
                out.append(n)
                if go(done | {n}, (s - g.delete) | g.add):
                    return True
                out.pop()
        failed.add((done, s))
        return False

    return tuple(out) if go(frozenset(), inst.init) else None


def _child_task_ids(dt: DecompositionTree, t: int, m: Method) -> Optional[Dict[int, str]]:
    """Map t's children to the task ids of ``m`` they instantiate."""
    kids = dt.children.get(t, ())
    kidset = set(kids)
    net = TaskNetwork(
        tuple((str(k), dt.alpha[k]) for k in kids),
        frozenset((str(a), str(b)) for a, b in dt.constraints if a in kidset and b in kidset),
    )
    head = dict(zip(m.head.args, dt.alpha[t].args))
    found = grounding_map(net, m.network, head)
    if found is None:
        return None
    assign, _ = found
    return {int(k): v for k, v in assign.items()}


def substitute(dt: DecompositionTree, m1: Method, m2: Method, inst: Instance, dom: Domain, budget: int = 200_000) -> Optional[DecompositionTree]:
    """Rewrite every node decomposed by ``m1`` to use the homologous ``m2``.

    Shared subtasks keep their subtrees; ``m1``'s inserted subtasks are
    dropped and ``m2``'s are added under the node's binding. Returns None when
    the resulting tree has no executable plan. ``dom`` must know both methods.
    """
    if m1.root != m2.root:
        raise PlanningError(f"{m1.id} and {m2.id} are not homologous")
    if m1.id == m2.id:
        return dt
    targets = [t for t in dt.beta if dt.method_id(t) == m1.id]
    if not targets:
        return dt
    children = {n: tuple(cs) for n, cs in dt.children.items()}
    alpha = dict(dt.alpha)
    beta = dict(dt.beta)
    removed: Set[int] = set()
    pairs: Set[Tuple[int, int]] = set()
    nxt = max(dt.alpha) + 1
    old_plan = list(dt.plan) if dt.plan is not None else None
    for t in targets:
        ids = _child_task_ids(dt, t, m1)
        if ids is None:
            raise PlanningError(f"node {t} does not instantiate {m1.id}")
        binding = dict(dt.beta[t][1])
        by_tid = {tid: n for n, tid in ids.items()}
        for tid in m1.inserted:
            removed.add(by_tid[tid])
        node_of: Dict[str, int] = {}
        for tid, pattern in m2.network.tasks:
            if tid in m2.inserted:
                a = pattern.sub(binding)
                if not a.ground:
                    raise UnboundVariable(f"{pattern} has unbound variables at node {t}")
                node_of[tid] = nxt
                alpha[nxt] = a
                children[nxt] = ()
                nxt += 1
            else:
                node_of[tid] = by_tid[tid]
        children[t] = tuple(node_of[tid] for tid, _ in m2.network.tasks)
        beta[t] = (m2.id, dt.beta[t][1])
        pairs.update((node_of[a], node_of[b]) for a, b in m2.network.order)
    for n in removed:
        del alpha[n]
        del children[n]
    kept = {(a, b) for a, b in dt.constraints if a not in removed and b not in removed}
    constraints = closure(alpha.keys(), children, kept | pairs)
    draft = DecompositionTree(dt.root, children, constraints, alpha, beta, None)
    if any(a == b for a, b in draft.order()):
        return None
    prefer: Dict[int, float] = {}
    if old_plan is not None:
        pos = {n: i for i, n in enumerate(old_plan)}
        for n in draft.primitive_leaves():
            if n in pos:
                prefer[n] = pos[n]
        # new leaves go just before the earliest old leaf they must precede
        order = draft.order()
        for n in draft.primitive_leaves():
            if n not in prefer:
                after = [pos[b] for a, b in order if a == n and b in pos]
                prefer[n] = (min(after) if after else len(old_plan)) - 0.5
    try:
        plan = executable_order(draft, dom, inst, prefer or None, budget)
    except ResourceLimit:
        return None
    if plan is None:
        return None
    return DecompositionTree(dt.root, children, constraints, alpha, beta, plan)


def _uses(dt: DecompositionTree) -> Set[str]:
    return {mid for mid, _ in dt.beta.values()}


def find_replacement(
    trained: Sequence[TrainedTree],
    ms1: Iterable[Method],
    ms2: Iterable[Method],
    dom: Domain,
    budget: int = 200_000,
) -> Optional[Tuple[Dict[str, str], List[TrainedTree]]]:
    """Assignment of each method in ``ms1`` to a homologous one in ``ms2`` that keeps every tree valid.

    Returns the assignment and the substituted trees, or None. Candidates are
    tried identity first, then by id; backtracking checks a tree as soon as
    all its methods from ``ms1`` are assigned.
    """
    ms1 = sorted(ms1, key=lambda m: m.id)
    ms2 = sorted(ms2, key=lambda m: m.id)
    ids2 = {m.id for m in ms2}
    full = dom.with_methods(list(ms1) + list(ms2))
    cands: List[List[Method]] = []
    for m in ms1:
        c = [x for x in ms2 if x.root == m.root]
        c.sort(key=lambda x: (x.id != m.id, x.id))
        if not c:
            return None
        cands.append(c)
    ids1 = [m.id for m in ms1]
    # the last index of ms1 each tree depends on decides when it can be checked
    ready_at: Dict[int, List[int]] = {}
    for i, tt in enumerate(trained):
        used = [j for j, mid in enumerate(ids1) if mid in _uses(tt.tree)]
        ready_at.setdefault(max(used) if used else -1, []).append(i)
    trees: List[Optional[TrainedTree]] = list(trained)
    assign: Dict[str, str] = {}
    cache: Dict[Tuple[int, Tuple[Tuple[str, str], ...]], Optional[DecompositionTree]] = {}

    def check(i: int) -> bool:
        tt = trained[i]
        used = tuple(sorted((mid, assign[mid]) for mid in _uses(tt.tree) if mid in assign))
        key = (i, used)
        if key not in cache:
            dt = tt.tree
            for a, b in used:
                if a == b:
                    continue
                try:
                    dt = substitute(dt, full.method(a), full.method(b), tt.inst, full, budget)
                except UnboundVariable:
                    dt = None
                if dt is None:
                    break
            cache[key] = dt
        trees[i] = TrainedTree(cache[key], tt.inst) if cache[key] is not None else None
        return cache[key] is not None

    for i in ready_at.get(-1, []):
        trees[i] = trained[i]

    def go(j: int) -> bool:
        if j == len(ms1):
            return True
        for m2 in cands[j]:
            assign[ids1[j]] = m2.id
            if all(check(i) for i in ready_at.get(j, [])) and go(j + 1):
                return True
            del assign[ids1[j]]
        return False

    if not go(0):
        return None
    assert ids2 >= set(assign.values())
    return dict(assign), [t for t in trees if t is not None]


def replaceable(trained: Sequence[TrainedTree], ms1: Iterable[Method], ms2: Iterable[Method], dom: Domain) -> bool:
    return find_replacement(trained, ms1, ms2, dom) is not None


@dataclass
class StratumDecision:
    stratum: int
    candidates: List[str]
    kept: List[str]
    path: str
    assignment: Dict[str, str]


def minimize_stratum(
    stratum: Sequence[Method],
    kept: Sequence[Method],
    trained: Sequence[TrainedTree],
    dom: Domain,
    exact_cap: int = 12,
    budget: int = 200_000,
) -> Tuple[List[Method], Dict[str, str], List[TrainedTree], str]:
    """Smallest subset S of ``stratum`` such that ``stratum`` is replaceable by S plus ``kept``.

    Exact search by ascending size up to ``exact_cap`` methods; beyond that a
    greedy pass drops methods with the most inserted subtasks first.
    Returns (S, assignment, substituted trees, path used).
    """
    ms = sorted(stratum, key=lambda m: m.id)
    if not ms:
        return [], {}, list(trained), "empty"
    if len(ms) <= exact_cap:
        for size in range(len(ms) + 1):
            for sub in itertools.combinations(ms, size):
                found = find_replacement(trained, ms, list(sub) + list(kept), dom, budget)
                if found is not None:
                    return list(sub), found[0], found[1], "exact"
        raise PlanningError("stratum is not replaceable even by itself")
    keep = list(ms)
    best = find_replacement(trained, ms, keep + list(kept), dom, budget)
    if best is None:
        raise PlanningError("stratum is not replaceable even by itself")
    for m in sorted(ms, key=lambda m: (-len(m.inserted), m.id)):
        trial = [x for x in keep if x.id != m.id]
        found = find_replacement(trained, ms, trial + list(kept), dom, budget)
        if found is not None:
            keep, best = trial, found
    return keep, best[0], best[1], "greedy"


@dataclass
class InstanceRecord:
    name: str
    status: str
    k: int = 0
    profile: Dict[int, int] = field(default_factory=dict)
    methods: List[str] = field(default_factory=list)
    sigma: List[str] = field(default_factory=list)


@dataclass
class RefineOutput:
    methods: Tuple[Method, ...]
    trees: List[TrainedTree]
    instances: List[InstanceRecord]
    strata: List[StratumDecision]
    wall_ms: float = 0.0

    @property
    def solved(self) -> List[Instance]:
        return [t.inst for t in self.trees]

    def audit(self) -> dict:
        return {
            "methods": [m.id for m in self.methods],
            "instances": [vars(r) for r in self.instances],
            "strata": [vars(d) for d in self.strata],
            "wall_ms": round(self.wall_ms, 1),
        }

    def audit_json(self) -> str:
        return json.dumps(self.audit(), indent=2, sort_keys=True, default=str)


def refine_instance(dom: Domain, inst: Instance, prio: Prioritization, cfg: RefineConfig) -> Tuple[TIHTNResult, Completion]:
    result = plan_tihtn(dom, inst, cfg.search)
    ext = extend_order(result)
    if cfg.profile == "random":
        rng = random.Random(f"{cfg.seed}:{inst.name}")
        rho = random_profile(result, rng, ext)
    elif cfg.profile == "preferred":
        rho = complete_profile(result, prio, dom, ext)
    else:
        raise ValueError(f"unknown profile mode {cfg.profile!r}")
    return result, complete_dt(result, rho, dom, ext)


def method_refine(
    dom: Domain,
    instances: Sequence[Instance],
    prio: Optional[Prioritization] = None,
    cfg: Optional[RefineConfig] = None,
    cache: Optional[dict] = None,
) -> RefineOutput:
    """Refine ``dom``'s methods from ``instances``; every instance with a TIHTN plan stays solvable.

    ``cache`` may be shared between calls on growing instance lists; it keeps
    the per-instance planning results, which do not depend on other instances.
    """
    cfg = cfg or RefineConfig()
    prio = prio or stratify(dom)
    cache = {} if cache is None else cache
    start = time.perf_counter()
    learned: Dict[str, Method] = {}
    trained: List[TrainedTree] = []
    records: List[InstanceRecord] = []
    for inst in instances:
        key = (inst, prio, cfg.profile, cfg.seed)
        if key not in cache:
            try:
                cache[key] = refine_instance(dom, inst, prio, cfg)
            except (Unsolvable, ResourceLimit) as e:
                log.info("skipping %s: %s", inst.name, e)
                cache[key] = e
        if isinstance(cache[key], Exception):
            records.append(InstanceRecord(inst.name, type(cache[key]).__name__))
            continue
        result, comp = cache[key]
        for m in comp.method_set():
            learned.setdefault(m.id, m)
        trained.append(TrainedTree(comp.tree, inst))
        records.append(
            InstanceRecord(
                inst.name,
                "ok",
                result.k,
                dict(comp.profile.assignment),
                [m.id for m in comp.method_set()],
                result.pretty(),
            )
        )
    decisions: List[StratumDecision] = []
    if not cfg.minimize:
        out = tuple(sorted(learned.values(), key=lambda m: m.id))
        return RefineOutput(out, trained, records, decisions, (time.perf_counter() - start) * 1000)
    kept: List[Method] = []
    full = dom.with_methods(learned.values())
    for j in range(len(prio)):
        stratum = [m for m in learned.values() if prio.stratum_of(m.root) == j]
        if not stratum:
            continue
        keep, assign, trained, path = minimize_stratum(stratum, kept, trained, full, cfg.exact_cap, cfg.order_budget)
        decisions.append(StratumDecision(j + 1, sorted(m.id for m in stratum), sorted(m.id for m in keep), path, assign))
        kept.extend(keep)
    out = tuple(sorted(kept, key=lambda m: m.id))
    return RefineOutput(out, trained, records, decisions, (time.perf_counter() - start) * 1000)
