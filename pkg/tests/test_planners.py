import random

import pytest

from oracles import htn_solvable, random_ground_domain, tihtn_min_k
from htnrefine.core import atom, executable
from htnrefine.htn import plan_htn
from htnrefine.search import NoTIHTNPlan, ResourceLimit, SearchConfig, Unsolvable
from htnrefine.tihtn import insertion_search, plan_tihtn
from htnrefine.tree import validate_dt

SIGMA2 = [
    "load(pkg1,truck1,whA)", "drive(truck1,airpA)", "unload(pkg1,truck1,airpA)",
    "+fly(plane1,airpA)",
    "load(pkg1,plane1,airpA)", "fly(plane1,airpB)", "unload(pkg1,plane1,airpB)",
    "load(pkg1,truck2,airpB)", "drive(truck2,shopB)", "unload(pkg1,truck2,shopB)",
]


def test_example3_has_no_htn_plan(logistics, example3):
    with pytest.raises(Unsolvable):
        plan_htn(logistics, example3)


def test_example3_tihtn_plan(logistics, example3):
    r = plan_tihtn(logistics, example3)
    assert r.pretty() == SIGMA2
    assert r.k == 1 and r.inserted == (3,)
    assert executable(example3.init, r.operators) is not None
    # the tree itself is valid apart from executability of its own plan
    assert validate_dt(r.tree, logistics, example3, check_executable=False).ok


def test_no_insertions_allowed(logistics, example3):
    with pytest.raises(NoTIHTNPlan):
        plan_tihtn(logistics, example3, SearchConfig(max_insertions=0))


def test_tiny_budget_raises(logistics, example3):
    with pytest.raises(ResourceLimit):
        plan_tihtn(logistics, example3, SearchConfig(node_budget=3))


def test_insertion_search_skeleton(logistics, example3):
    skeleton = [atom(a) for a in SIGMA2 if not a.startswith("+")]
    out = insertion_search(logistics, example3.init, skeleton, 1)
    assert [("+" if ins else "") + str(g.head) for g, ins in out] == SIGMA2
    assert insertion_search(logistics, example3.init, skeleton, 0) is None


@pytest.mark.parametrize("seed", range(40))
def test_planners_agree_with_enumeration(seed):
    dom, inst = random_ground_domain(random.Random(seed))
    expected = htn_solvable(dom, inst)
    try:
        dt = plan_htn(dom, inst)
        assert validate_dt(dt, dom, inst).ok
        got = True
    except Unsolvable:
        got = False
    assert got == expected
    k = tihtn_min_k(dom, inst, 3)
    try:
        found = plan_tihtn(dom, inst, SearchConfig(max_insertions=3)).k
    except NoTIHTNPlan:
        found = None
    assert found == k
