"""Evaluation: degrade a complete domain, learn refined methods, measure solving rates."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib.resources import files
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .core import Atom, Domain, Instance, Method, Operator, PlanningError, TaskNetwork, is_var, state, transitive_closure
from .parser import parse_domain
from .preference import Prioritization, stratify
from .refine import RefineConfig, method_refine
from .search import ResourceLimit, SearchConfig, Unsolvable, solve

log = logging.getLogger(__name__)

VERIFIER = "verify-goal"
VERIFY_TASK = "tv"


class UnknownRemoval(PlanningError):
    pass


@dataclass(frozen=True)
class DegradeSpec:
    removals: Tuple[Tuple[str, str], ...] = ()
    preset: str = "custom"


# subtasks removed from the bundled complete logistics domain
LOGISTICS_PRESETS = {
    "MR-H": (("m-cityShip", "t0"), ("m-airShip", "t0")),
    "MR-M": (("m-cityShip", "t0"), ("m-cityShip", "t2"), ("m-airShip", "t0"), ("m-airShip", "t2")),
    "MR-L": (("m-cityShip", "t0"), ("m-cityShip", "t2"), ("m-airShip", "t0"), ("m-airShip", "t2"), ("m-ship", "t1")),
}


def preset(name: str, dom: Optional[Domain] = None) -> DegradeSpec:
    """Removal preset by name.

    For the bundled logistics domain the tables above are used. Elsewhere
    MR-H drops each method's first primitive subtask, MR-M its first two, and
    MR-L also the first compound subtask of the first method that has one.
    """
    if name not in LOGISTICS_PRESETS:
        raise UnknownRemoval(f"unknown preset {name!r}")
    if dom is None or all(mid in {m.id for m in dom.methods} for mid, _ in LOGISTICS_PRESETS[name]):
        return DegradeSpec(LOGISTICS_PRESETS[name], name)
    per = 1 if name == "MR-H" else 2
    out = []
    for m in dom.methods:
        prims = [tid for tid, a in m.network.tasks if dom.is_primitive(a.name) and a.name != VERIFIER]
        out.extend((m.id, tid) for tid in prims[:per])
    if name == "MR-L":
        for m in dom.methods:
            comps = [tid for tid, a in m.network.tasks if dom.is_compound(a.name)]
            if comps:
                out.append((m.id, comps[0]))
                break
    return DegradeSpec(tuple(out), name)


def _reduce(pairs) -> frozenset:
    """Transitive reduction of an acyclic relation."""
    closed = transitive_closure(pairs)
    mids = {}
    for a, b in closed:
        mids.setdefault(a, set()).add(b)
    return frozenset((a, c) for a, c in closed if not any((b, c) in closed for b in mids.get(a, ()) if b != c))


def degrade(dom: Domain, spec: DegradeSpec) -> Domain:
    """Remove subtasks; order through a removed task is kept between its neighbours."""
    drop: Dict[str, set] = {}
    ids = {m.id: m for m in dom.methods}
    for mid, tid in spec.removals:
        if mid not in ids or tid not in ids[mid].network.ids:
            raise UnknownRemoval(f"no subtask {tid} in method {mid}")
        drop.setdefault(mid, set()).add(tid)
    methods = []
    for m in dom.methods:
        gone = drop.get(m.id)
        if not gone:
            methods.append(m)
            continue
        closed = transitive_closure(m.network.order)
        keep = [(t, a) for t, a in m.network.tasks if t not in gone]
        kept_ids = {t for t, _ in keep}
        order = _reduce({(a, b) for a, b in closed if a in kept_ids and b in kept_ids})
        methods.append(replace(m, network=TaskNetwork(tuple(keep), order)))
    return replace(dom, methods=tuple(methods))


def inject_verifier(dom: Domain, goal: Iterable[Atom], top: Optional[Atom] = None) -> Domain:
    """Add a goal-checking operator as the last subtask of every method for the top task.

    With ``top`` given, goal constants that are arguments of the top task
    become the corresponding head variables, so one domain serves every
    instance whose goal relates to its top task the same way.
    """
    goal = sorted(set(goal))
    if top is None:
        tops = [m for m in dom.methods if not any(a.name == m.head.name for n in dom.methods for _, a in n.network.tasks)]
        names = {m.head.name for m in tops}
        if len(names) != 1:
            raise PlanningError("cannot tell the top task; pass it explicitly")
        top_name, top_args = names.pop(), ()
    else:
        top_name, top_args = top.name, top.args
    slot = {c: i for i, c in reversed(list(enumerate(top_args)))}
    used = sorted({slot[c] for a in goal for c in a.args if c in slot})
    param = {i: f"?g{i}" for i in used}
    pos = frozenset(Atom(a.name, tuple(param[slot[c]] if c in slot else c for c in a.args)) for a in goal)
    op = Operator(VERIFIER, tuple(param[i] for i in used), pos)
    methods = []
    for m in dom.methods:
        if m.head.name != top_name:
            methods.append(m)
            continue
        call = Atom(VERIFIER, tuple(m.head.args[i] for i in used))
        tasks = m.network.tasks + ((VERIFY_TASK, call),)
        order = m.network.order | {(t, VERIFY_TASK) for t in m.network.ids}
        methods.append(replace(m, network=TaskNetwork(tasks, frozenset(order))))
    ops = dict(dom.operators)
    ops[VERIFIER] = op
    return replace(dom, operators=ops, methods=tuple(methods))


def load_bundled(name: str) -> Domain:
    return parse_domain((files("htnrefine") / "data" / name).read_text(), name)


def logistics_domains(level: str = "MR-H") -> Tuple[Domain, Domain]:
    """(complete, degraded) bundled logistics domains, both with the goal check."""
    full = load_bundled("logistics-full.htn")
    probe_top = Atom("ship", ("p", "a", "b"))
    full = inject_verifier(full, [Atom("at", ("p", "b"))], probe_top)
    return full, degrade(full, preset(level, full))


def _random_logistics(rng: random.Random, name: str, cities: int, extra: int, planes: int) -> Instance:
    facts = []
    locs: Dict[str, List[str]] = {}
    airports = []
    for c in range(cities):
        city = f"city{c}"
        ap = f"airp{c}"
        airports.append(ap)
        locs[city] = [ap] + [f"loc{c}-{j}" for j in range(extra)]
        for loc in locs[city]:
            facts += [f"location({loc})", f"in-city({loc},{city})"]
        facts.append(f"airport({ap})")
        truck = f"truck{c}"
        facts += [f"truck({truck})", f"vehicle({truck})", f"at({truck},{rng.choice(locs[city])})"]
    for p in range(planes):
        plane = f"plane{p}"
        facts += [f"airplane({plane})", f"vehicle({plane})", f"at({plane},{rng.choice(airports)})"]
    src_city, dst_city = rng.sample(sorted(locs), 2)
    src = rng.choice(locs[src_city])
    dst = rng.choice(locs[dst_city])
    facts += ["package(pkg1)", f"at(pkg1,{src})"]
    return Instance(state(facts), Atom("ship", ("pkg1", src, dst)), name, frozenset({Atom("at", ("pkg1", dst))}))


def gen_instances(dom: Domain, seed: int, count: int, cities: int = 3, extra: int = 1, planes: int = 1, cfg: Optional[SearchConfig] = None, prefix: str = "") -> List[Instance]:
    """Seeded logistics instances, each checked solvable under ``dom``."""
    rng = random.Random(seed)
    cfg = cfg or SearchConfig(time_budget=10.0)
    out: List[Instance] = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > 20 * count + 20:
            raise PlanningError(f"could only generate {len(out)} solvable instances")
        inst = _random_logistics(rng, f"{prefix}s{seed}-{len(out)}", cities, extra, planes)
        try:
            if solve(dom, inst, cfg, max_insertions=0) is not None:
                out.append(inst)
        except ResourceLimit:
            pass
    return out


@dataclass
class CurvePoint:
    train_size: int
    solved: int
    total: int
    rate: float
    methods_learned: int
    wall_ms: float


@dataclass
class LearningCurve:
    points: List[CurvePoint] = field(default_factory=list)
    methods: List[str] = field(default_factory=list)

    COLUMNS = ("train_size", "solved", "total", "rate", "methods_learned", "wall_ms")

    @property
    def final_rate(self) -> float:
        return self.points[-1].rate if self.points else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for p in self.points:
            w.writerow([p.train_size, p.solved, p.total, f"{p.rate:.4f}", p.methods_learned, f"{p.wall_ms:.1f}"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"points": [asdict(p) for p in self.points], "methods": self.methods}, indent=2)


def solves(dom: Domain, inst: Instance, cfg: SearchConfig) -> bool:
    """Whether plain decomposition (no insertion) reaches the goal check."""
    try:
        found = solve(dom, inst, cfg, max_insertions=0)
    except ResourceLimit:
        return False
    return found is not None and any(a.name == VERIFIER for a in found.tree.alpha.values())


def _solves_job(args) -> bool:
    return solves(*args)


def workers_from_env() -> int:
    try:
        return max(1, int(os.environ.get("HTNREFINE_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(
    dom_complete: Domain,
    dom_degraded: Domain,
    train: Sequence[Instance],
    test: Sequence[Instance],
    prio: Optional[Prioritization] = None,
    cfg: Optional[RefineConfig] = None,
    test_cfg: Optional[SearchConfig] = None,
    sizes: Optional[Sequence[int]] = None,
    workers: Optional[int] = None,
) -> LearningCurve:
    """Solving rate on ``test`` after learning from growing prefixes of ``train``."""
    cfg = cfg or RefineConfig()
    prio = prio or stratify(dom_degraded)
    test_cfg = test_cfg or SearchConfig(time_budget=30.0)
    workers = workers or workers_from_env()
    for inst in list(train) + list(test):
        if not solves(dom_complete, inst, test_cfg):
            raise PlanningError(f"{inst.name} is not solvable under the complete domain")
    sizes = list(range(len(train) + 1)) if sizes is None else sorted(set(sizes))
    curve = LearningCurve()
    cache: dict = {}
    for n in sizes:
        t0 = time.perf_counter()
        out = method_refine(dom_degraded, train[:n], prio, cfg, cache)
        dom = dom_degraded.with_methods(out.methods)
        jobs = [(dom, inst, test_cfg) for inst in test]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_solves_job, jobs))
        else:
            results = [solves(*j) for j in jobs]
        solved = sum(results)
        wall = (time.perf_counter() - t0) * 1000
        rate = solved / len(test) if test else 0.0
        curve.points.append(CurvePoint(n, solved, len(test), rate, len(out.methods), wall))
        curve.methods = [m.id for m in out.methods]
        log.info("train=%d solved %d/%d with %d methods", n, solved, len(test), len(out.methods))
    return curve


def prioritization(mode: str, dom: Domain, seed: int = 0) -> Tuple[Prioritization, str]:
    """(prioritization, profile mode) for a named preference setting."""
    base = stratify(dom)
    if mode == "strata":
        return base, "preferred"
    if mode == "strata-inverted":
        return base.inverted(), "preferred"
    if mode == "random":
        return base, "random"
    raise ValueError(f"unknown prioritization mode {mode!r}")
