import random

import pytest

from oracles import admissible, extended_pairs, random_ground_domain
from htnrefine.core import Atom
from htnrefine.completion import (
    CompletionProfile,
    InternalInconsistency,
    complete_dt,
    complete_profile,
    extend_order,
    is_valid_profile,
    is_valid_profile_entry,
    lift_constants,
    random_profile,
)
from htnrefine.preference import stratify
from htnrefine.search import NoTIHTNPlan, SearchConfig
from htnrefine.tihtn import plan_tihtn
from htnrefine.tree import DecompositionTree, plan_actions, validate_dt


@pytest.fixture(scope="module")
def sigma2(logistics, example3):
    return plan_tihtn(logistics, example3)


def _node(tree, mid):
    return next(n for n, (m, _) in tree.beta.items() if m == mid)


def test_window_of_airship(sigma2):
    ext = extend_order(sigma2)
    (x,) = ext.inserted
    air = _node(sigma2.tree, "m-airShip")
    lo, hi = ext.window(air)
    assert lo < ext.position(x) < hi
    assert ext.sequence[ext.position(x)] == x


def test_preferred_profile_picks_airship(logistics, sigma2):
    rho = complete_profile(sigma2, stratify(logistics), logistics)
    (x,) = rho.assignment
    assert rho.assignment[x] == _node(sigma2.tree, "m-airShip")


def test_refined_airship(logistics, example3, sigma2):
    c = complete_dt(sigma2, complete_profile(sigma2, stratify(logistics), logistics), logistics)
    (m,) = c.method_set()
    tasks = dict(m.network.tasks)
    assert m.origin == "m-airShip" and m.inserted == ("t4'",)
    assert tasks["t4'"] == Atom("fly", ("?plane", "?loc1"))
    assert {("t4'", "t1"), ("t4'", "t2"), ("t4'", "t3")} <= m.network.order
    assert m.strip() == logistics.method("m-airShip")
    dom2 = logistics.with_methods(c.method_set())
    assert validate_dt(c.tree, dom2, example3).ok
    assert plan_actions(c.tree) == sigma2.actions


def test_invalid_profile_rejected(logistics, sigma2):
    ext = extend_order(sigma2)
    (x,) = ext.inserted
    first_city = min(
        (n for n, (m, _) in sigma2.tree.beta.items() if m == "m-cityShip"),
        key=lambda n: ext.span(n)[0],
    )
    last_city = max(
        (n for n, (m, _) in sigma2.tree.beta.items() if m == "m-cityShip"),
        key=lambda n: ext.span(n)[0],
    )
    # the last cityShip finishes after the flight that follows x: not admissible
    assert not is_valid_profile_entry(ext, x, last_city)
    assert is_valid_profile_entry(ext, x, first_city)
    with pytest.raises(InternalInconsistency):
        complete_dt(sigma2, CompletionProfile({x: last_city}), logistics, ext)


def test_lift_prefers_first_head_parameter(logistics):
    city = logistics.method("m-cityShip")
    kids = [a.sub({"?pkg": "pkg1", "?from": "airpB", "?to": "airpB", "?truck": "truck2"}) for _, a in city.network.tasks]
    alpha = {0: Atom("cityShip", ("pkg1", "airpB", "airpB"))}
    alpha.update({i + 1: a for i, a in enumerate(kids)})
    binding = (("?from", "airpB"), ("?pkg", "pkg1"), ("?to", "airpB"), ("?truck", "truck2"))
    dt = DecompositionTree(0, {0: (1, 2, 3), 1: (), 2: (), 3: ()}, frozenset(), alpha, {0: ("m-cityShip", binding)})
    assert lift_constants(Atom("drive", ("truck2", "airpB")), dt, 0, logistics) == Atom("drive", ("?truck", "?from"))
    assert lift_constants(Atom("fly", ("plane9", "airpB")), dt, 0, logistics) == Atom("fly", ("plane9", "?from"))


def _inserting_cases(n):
    out = []
    for seed in range(n):
        dom, inst = random_ground_domain(random.Random(seed))
        try:
            r = plan_tihtn(dom, inst, SearchConfig(max_insertions=3))
        except NoTIHTNPlan:
            continue
        if r.k:
            out.append((seed, dom, inst, r))
    return out


CASES = _inserting_cases(600)


def test_enough_cases():
    assert len(CASES) >= 20


@pytest.mark.parametrize("seed, dom, inst, r", CASES, ids=[f"seed{c[0]}" for c in CASES])
def test_completion_valid_on_random_domains(seed, dom, inst, r):
    ext = extend_order(r)
    pairs = extended_pairs(r.tree, ext.sequence)
    assert pairs == ext.pairs
    for x in ext.inserted:
        for t in r.tree.beta:
            assert is_valid_profile_entry(ext, x, t) == admissible(r.tree, ext.sequence, pairs, x, t)
    prio = stratify(dom)
    profiles = [
        complete_profile(r, prio, dom, ext),
        complete_profile(r, prio.inverted(), dom, ext),
        random_profile(r, random.Random(seed), ext),
    ]
    for rho in profiles:
        assert is_valid_profile(ext, rho.assignment)
        c = complete_dt(r, rho, dom, ext)
        verdict = validate_dt(c.tree, dom.with_methods(c.method_set()), inst)
        assert verdict.ok, str(verdict)
        assert plan_actions(c.tree) == r.actions
        for m in c.method_set():
            assert m.strip() == dom.method(m.root)
    ops = profiles[0].operations
    assert ops <= 2 * len(r.tree.beta) * r.k
