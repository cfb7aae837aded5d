"""Lifted planning vocabulary: atoms, operators, task networks, methods, domains.

Terms are plain strings. A term starting with ``?`` is a variable, anything
else is a constant. States are frozensets of ground atoms.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import chain, product
from typing import Dict, FrozenSet, Iterable, Iterator, Mapping, NamedTuple, Optional, Sequence, Tuple

Binding = Mapping[str, str]


class PlanningError(Exception):
    """Base class for model errors."""


class NotApplicable(PlanningError):
    def __init__(self, action, index: Optional[int] = None):
        self.action = action
        self.index = index
        where = f" at step {index}" if index is not None else ""
        super().__init__(f"{action} not applicable{where}")


class ArityMismatch(PlanningError):
    pass


class UnknownSymbol(PlanningError):
    pass


class CycleError(PlanningError):
    pass


def is_var(term: str) -> bool:
    return term.startswith("?")


class Atom(NamedTuple):
    name: str
    args: Tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.args)})"

    @property
    def ground(self) -> bool:
        return not any(is_var(a) for a in self.args)

    def variables(self) -> Tuple[str, ...]:
        seen = dict.fromkeys(a for a in self.args if is_var(a))
        return tuple(seen)

    def sub(self, binding: Binding) -> "Atom":
        if not binding:
            return self
        return Atom(self.name, tuple(binding.get(a, a) for a in self.args))


def atom(text: str) -> Atom:
    """Build an atom from ``name(a,b)`` shorthand; handy in tests."""
    text = text.strip()
    if "(" not in text:
        return Atom(text, ())
    name, rest = text.split("(", 1)
    rest = rest.rstrip(")")
    args = tuple(a.strip() for a in rest.split(",") if a.strip())
    return Atom(name.strip(), args)


State = FrozenSet[Atom]


def state(atoms: Iterable[Atom | str] = ()) -> State:
    return frozenset(atom(a) if isinstance(a, str) else a for a in atoms)


def match(pattern: Atom, fact: Atom, binding: Binding) -> Optional[Dict[str, str]]:
    """Extend ``binding`` so that ``pattern`` equals ``fact``, or return None."""
    if pattern.name != fact.name or len(pattern.args) != len(fact.args):
        return None
    out = dict(binding)
    for p, f in zip(pattern.args, fact.args):
        if is_var(p):
            bound = out.get(p)
            if bound is None:
                out[p] = f
            elif bound != f:
                return None
        elif p != f:
            return None
    return out


@dataclass(frozen=True)
class Operator:
    """A primitive action schema (or a ground instance of one).

    Variables in ``pre`` that are not parameters are bound against the state
    when the operator is grounded, the way SHOP2 operators behave.
    """

    name: str
    params: Tuple[str, ...]
    pos: FrozenSet[Atom] = frozenset()
    neg: FrozenSet[Atom] = frozenset()
    add: FrozenSet[Atom] = frozenset()
    delete: FrozenSet[Atom] = frozenset()

    @property
    def head(self) -> Atom:
        return Atom(self.name, self.params)

    @property
    def is_ground(self) -> bool:
        return all(a.ground for a in chain((self.head,), self.pos, self.neg, self.add, self.delete))

    def free_variables(self) -> Tuple[str, ...]:
        params = set(self.params)
        seen: Dict[str, None] = {}
        for a in chain(sorted(self.pos), sorted(self.neg), sorted(self.add), sorted(self.delete)):
            for v in a.variables():
                if v not in params:
                    seen[v] = None
        return tuple(seen)

    def sub(self, binding: Binding) -> "Operator":
        return Operator(
            self.name,
            tuple(binding.get(p, p) for p in self.params),
            frozenset(a.sub(binding) for a in self.pos),
            frozenset(a.sub(binding) for a in self.neg),
            frozenset(a.sub(binding) for a in self.add),
            frozenset(a.sub(binding) for a in self.delete),
        )

    def applicable(self, s: State) -> bool:
        return self.pos <= s and not (self.neg & s)

    def instances(self, args: Sequence[str], s: State, constants: Sequence[str] = ()) -> Iterator[Tuple["Operator", Dict[str, str]]]:
        """Ground instances of ``name(args)`` applicable in ``s``, canonical order.

        ``args`` may contain variables; each result comes with the values they
        took. Variables fixed by no positive precondition range over
        ``constants``.
        """
        if len(args) != len(self.params):
            raise ArityMismatch(f"{self.name} expects {len(self.params)} args, got {len(args)}")
        own = {v for a in chain((self.head,), self.pos, self.neg, self.add, self.delete) for v in a.variables()}
        apart = self.sub({v: v + "@" for v in own})
        binding: Dict[str, str] = {}
        for p, a in zip(apart.params, args):
            if is_var(p):
                if binding.setdefault(p, a) != a:
                    return
            elif p != a:
                return
        pattern = apart.sub(binding)
        wanted = [a for a in dict.fromkeys(args) if is_var(a)]
        by_pre = {v for a in pattern.pos for v in a.variables()}
        mentioned = chain(pattern.head.args, *(a.args for a in chain(pattern.neg, pattern.add, pattern.delete)))
        loose = [v for v in dict.fromkeys(mentioned) if is_var(v) and v not in by_pre]
        pos = sorted(pattern.pos, key=lambda x: (len(x.variables()), x))
        for combo in product(sorted(constants), repeat=len(loose)):
            start = dict(zip(loose, combo))
            for full in _match_all([a.sub(start) for a in pos], s, start):
                g = pattern.sub(full)
                if g.is_ground and g.applicable(s):
                    yield g, {v: full.get(v, v) for v in wanted}

    def groundings(self, args: Sequence[str], s: State) -> Iterator["Operator"]:
        for g, _ in self.instances(args, s):
            yield g

    def ground(self, args: Sequence[str], s: State) -> Optional["Operator"]:
        return next(self.groundings(args, s), None)


def _match_all(patterns: Sequence[Atom], s: State, binding: Dict[str, str]) -> Iterator[Dict[str, str]]:
    if not patterns:
        yield binding
        return
    first = patterns[0].sub(binding)
    if first.ground:
        if first in s:
            yield from _match_all(patterns[1:], s, binding)
        return
    for fact in sorted(f for f in s if f.name == first.name and len(f.args) == len(first.args)):
        b = match(first, fact, binding)
        if b is not None:
            yield from _match_all(patterns[1:], s, b)


def apply(s: State, o: Operator) -> State:
    """State transition ``(s - del) | add`` for a ground operator."""
    if not o.applicable(s):
        raise NotApplicable(o.head)
    return (s - o.delete) | o.add


def execute(s0: State, plan: Iterable[Operator]) -> State:
    s = s0
    for i, o in enumerate(plan):
        if not o.applicable(s):
            raise NotApplicable(o.head, i)
        s = (s - o.delete) | o.add
    return s


def executable(s0: State, plan: Iterable[Operator]) -> Optional[State]:
    """Final state if ``plan`` runs from ``s0``; None otherwise."""
    try:
        return execute(s0, plan)
    except NotApplicable:
        return None


def transitive_closure(pairs: Iterable[Tuple]) -> FrozenSet[Tuple]:
    succ: Dict = {}
    for a, b in pairs:
        succ.setdefault(a, set()).add(b)
    out = set()
    for a in list(succ):
        stack = list(succ[a])
        seen = set()
        while stack:
            b = stack.pop()
            if b in seen:
                continue
            seen.add(b)
            out.add((a, b))
            stack.extend(succ.get(b, ()))
    return frozenset(out)


def is_acyclic(pairs: Iterable[Tuple]) -> bool:
    return not any(a == b for a, b in transitive_closure(pairs))


@dataclass(frozen=True)
class TaskNetwork:
    """Tasks in listing order with their actions, plus ordering pairs."""

    tasks: Tuple[Tuple[str, Atom], ...] = ()
    order: FrozenSet[Tuple[str, str]] = frozenset()

    def __post_init__(self):
        ids = [t for t, _ in self.tasks]
        if len(set(ids)) != len(ids):
            raise PlanningError(f"duplicate task ids in {ids}")
        known = set(ids)
        for a, b in self.order:
            if a not in known or b not in known:
                raise UnknownSymbol(f"ordering ({a} {b}) names an unknown task")
        if not is_acyclic(self.order):
            raise CycleError("ordering constraints are cyclic")

    @property
    def ids(self) -> Tuple[str, ...]:
        return tuple(t for t, _ in self.tasks)

    @property
    def alpha(self) -> Dict[str, Atom]:
        return dict(self.tasks)

    def __len__(self) -> int:
        return len(self.tasks)

    def sub(self, binding: Binding) -> "TaskNetwork":
        return TaskNetwork(tuple((t, a.sub(binding)) for t, a in self.tasks), self.order)

    def variables(self) -> Tuple[str, ...]:
        seen: Dict[str, None] = {}
        for _, a in self.tasks:
            for v in a.variables():
                seen[v] = None
        return tuple(seen)


@dataclass(frozen=True)
class Method:
    """Head compound action plus subtask network.

    Refined methods carry ``origin`` (the id of the method they extend) and the
    ids of the subtasks that were added to it.
    """

    id: str
    head: Atom
    network: TaskNetwork
    origin: Optional[str] = None
    inserted: Tuple[str, ...] = ()

    @property
    def refined(self) -> bool:
        return self.origin is not None

    @property
    def root(self) -> str:
        """Id of the original method this one descends from."""
        return self.origin if self.origin is not None else self.id

    def local_variables(self) -> Tuple[str, ...]:
        head = set(self.head.variables())
        return tuple(v for v in self.network.variables() if v not in head)

    def sub(self, binding: Binding) -> "Method":
        return replace(self, head=self.head.sub(binding), network=self.network.sub(binding))

    def strip(self) -> "Method":
        """Drop inserted subtasks and every constraint touching them."""
        drop = set(self.inserted)
        net = TaskNetwork(
            tuple((t, a) for t, a in self.network.tasks if t not in drop),
            frozenset((a, b) for a, b in self.network.order if a not in drop and b not in drop),
        )
        return Method(self.root, self.head, net)


@dataclass(frozen=True)
class Domain:
    name: str
    predicates: Mapping[str, int] = field(default_factory=dict)
    operators: Mapping[str, Operator] = field(default_factory=dict)
    compounds: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)
    methods: Tuple[Method, ...] = ()
    constants: FrozenSet[str] = frozenset()

    def __post_init__(self):
        clash = set(self.operators) & set(self.compounds)
        if clash:
            raise PlanningError(f"names both primitive and compound: {sorted(clash)}")

    def is_primitive(self, name: str) -> bool:
        return name in self.operators

    def is_compound(self, name: str) -> bool:
        return name in self.compounds

    def method(self, mid: str) -> Method:
        for m in self.methods:
            if m.id == mid:
                return m
        raise UnknownSymbol(f"no method {mid!r}")

    def methods_for(self, name: str) -> Tuple[Method, ...]:
        return tuple(m for m in self.methods if m.head.name == name)

    def with_methods(self, extra: Iterable[Method]) -> "Domain":
        """The domain D + M': original methods kept, ``extra`` appended."""
        have = {m.id for m in self.methods}
        added = tuple(m for m in extra if m.id not in have)
        return replace(self, methods=self.methods + added)

    def ground_action(self, action: Atom, s: State) -> Optional[Operator]:
        op = self.operators.get(action.name)
        if op is None:
            raise UnknownSymbol(f"{action.name} is not an operator")
        return op.ground(action.args, s)

    def run(self, s0: State, actions: Iterable[Atom]) -> State:
        """Execute a sequence of ground actions; raises NotApplicable with the index."""
        s = s0
        for i, a in enumerate(actions):
            o = self.ground_action(a, s)
            if o is None:
                raise NotApplicable(a, i)
            s = (s - o.delete) | o.add
        return s

    def static_predicates(self) -> FrozenSet[str]:
        changed = {a.name for o in self.operators.values() for a in chain(o.add, o.delete)}
        return frozenset(p for p in self.predicates if p not in changed)


@dataclass(frozen=True)
class Instance:
    init: State
    top: Atom
    name: str = "instance"
    goal: FrozenSet[Atom] = frozenset()

    def constants(self) -> FrozenSet[str]:
        return frozenset(chain(self.top.args, (x for a in self.init for x in a.args), (x for a in self.goal for x in a.args)))


def instantiate(template, binding: Binding):
    """Substitute ``binding`` into an atom, operator, task network or method.

    Variables without a binding are left in place.
    """
    if isinstance(template, (Atom, Operator, TaskNetwork, Method)):
        return template.sub(binding)
    raise TypeError(f"cannot instantiate {type(template).__name__}")


def is_grounding(tn: TaskNetwork, template: TaskNetwork, binding: Optional[Binding] = None) -> bool:
    """True iff ``tn`` is a grounding of ``template``.

    Looks for a bijection of tasks and one substitution shared by all tasks,
    such that every ordering pair of ``tn`` is implied by ``template``'s order.
    """
    return grounding_map(tn, template, binding) is not None


def grounding_map(tn: TaskNetwork, template: TaskNetwork, binding: Optional[Binding] = None):
    if len(tn) != len(template):
        return None
    closed = transitive_closure(template.order)
    src = list(tn.tasks)
    dst = list(template.tasks)
    used: set = set()
    assign: Dict[str, str] = {}

    def consistent() -> bool:
        for a, b in tn.order:
            if a in assign and b in assign and (assign[a], assign[b]) not in closed:
                return False
        return True

    def search(i: int, theta: Dict[str, str]):
        if i == len(src):
            return dict(assign), theta
        tid, act = src[i]
        for j, (uid, pat) in enumerate(dst):
            if j in used:
                continue
            b = match(pat, act, theta)
            if b is None:
                continue
            used.add(j)
            assign[tid] = uid
            if consistent():
                found = search(i + 1, b)
                if found is not None:
                    return found
            used.discard(j)
            del assign[tid]
        return None

    return search(0, dict(binding or {}))
