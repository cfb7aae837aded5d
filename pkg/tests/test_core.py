import pytest
from hypothesis import given, settings, strategies as st

from htnrefine.core import (
    Atom,
    CycleError,
    NotApplicable,
    Operator,
    PlanningError,
    TaskNetwork,
    UnknownSymbol,
    apply,
    atom,
    executable,
    execute,
    is_grounding,
    match,
    state,
    transitive_closure,
)

FACTS = [Atom(f"f{i}") for i in range(5)]
facts = st.frozensets(st.sampled_from(FACTS), max_size=3)


@st.composite
def ground_ops(draw):
    pos = draw(facts)
    neg = draw(facts) - pos
    add = draw(facts)
    return Operator(f"o{draw(st.integers(0, 99))}", (), pos, neg, add, draw(facts) - add)


def test_atom_shorthand():
    a = atom("at(pkg1, whA)")
    assert a == Atom("at", ("pkg1", "whA")) and a.ground
    assert atom("at(?p,?l)").variables() == ("?p", "?l")
    assert str(a) == "at(pkg1,whA)"


def test_match_extends_binding():
    assert match(atom("at(?x,?y)"), atom("at(a,b)"), {}) == {"?x": "a", "?y": "b"}
    assert match(atom("at(?x,?x)"), atom("at(a,b)"), {}) is None
    assert match(atom("at(?x,b)"), atom("at(a,b)"), {"?x": "c"}) is None
    assert match(atom("in(?x)"), atom("at(a)"), {}) is None


def test_operator_grounds_against_state(logistics):
    s = state(["truck(t)", "at(t,a)", "in-city(a,c)", "in-city(b,c)"])
    g = logistics.operators["drive"].ground(("t", "b"), s)
    assert g is not None and g.is_ground
    assert apply(s, g) == (s - {atom("at(t,a)")}) | {atom("at(t,b)")}
    assert logistics.operators["drive"].ground(("t", "a"), s) is None


def test_execute_reports_failing_step():
    o1 = Operator("o1", (), add=frozenset({atom("p")}))
    o2 = Operator("o2", (), pos=frozenset({atom("q")}))
    with pytest.raises(NotApplicable) as info:
        execute(state(), [o1, o1, o2])
    assert info.value.index == 2
    assert executable(state(), [o1, o2]) is None
    with pytest.raises(NotApplicable):
        apply(state(), o2)


def test_network_validation():
    with pytest.raises(PlanningError):
        TaskNetwork((("t1", atom("a")), ("t1", atom("b"))))
    with pytest.raises(UnknownSymbol):
        TaskNetwork((("t1", atom("a")),), frozenset({("t1", "t2")}))
    with pytest.raises(CycleError):
        TaskNetwork((("t1", atom("a")), ("t2", atom("b"))), frozenset({("t1", "t2"), ("t2", "t1")}))


def test_is_grounding_shared_substitution():
    tmpl = TaskNetwork((("t1", atom("load(?p,?v)")), ("t2", atom("fly(?v)"))), frozenset({("t1", "t2")}))
    good = TaskNetwork((("a", atom("fly(pl)")), ("b", atom("load(x,pl)"))), frozenset({("b", "a")}))
    split = TaskNetwork((("a", atom("fly(other)")), ("b", atom("load(x,pl)"))))
    backwards = TaskNetwork((("a", atom("fly(pl)")), ("b", atom("load(x,pl)"))), frozenset({("a", "b")}))
    assert is_grounding(good, tmpl)
    assert not is_grounding(split, tmpl)
    assert not is_grounding(backwards, tmpl)


def test_method_strip(logistics):
    m = logistics.method("m-airShip")
    assert m.strip() == m and not m.refined


@settings(max_examples=200, deadline=None)
@given(s=facts, p1=st.lists(ground_ops(), max_size=4), p2=st.lists(ground_ops(), max_size=4))
def test_execute_composes(s, p1, p2):
    mid = executable(s, p1)
    whole = executable(s, p1 + p2)
    if mid is None:
        assert whole is None
    else:
        assert whole == executable(mid, p2)


@given(st.sets(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=12))
def test_closure_idempotent(pairs):
    c = transitive_closure(pairs)
    assert transitive_closure(c) == c
    assert set(pairs) <= c
