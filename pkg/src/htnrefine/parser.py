"""Reader and canonical printer for the s-expression file formats.

Files: ``.htn`` domains, ``.inst`` instances, ``.prio`` prioritizations and
``.methods`` refined-method sets. See docs/format.md for the grammar.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .core import Atom, Domain, Instance, Method, Operator, PlanningError, TaskNetwork, CycleError, is_var
from .preference import NotAPartition, Prioritization


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


class ParseError(PlanningError):
    def __init__(self, message: str, span: Optional[SourceSpan] = None):
        self.span = span
        self.message = message
        super().__init__(f"{span}: {message}" if span else message)


class SExprSyntaxError(ParseError):
    pass


class ArityError(ParseError):
    pass


class DuplicateName(ParseError):
    pass


class UndeclaredPredicate(ParseError):
    pass


class MethodHeadNotCompound(ParseError):
    pass


class UngroundedInit(ParseError):
    pass


class UnknownTask(ParseError):
    pass


class PartitionError(ParseError, NotAPartition):
    pass


class Sym(str):
    span: SourceSpan


class SList(list):
    span: SourceSpan


SExpr = Union[Sym, SList]


def read_sexprs(text: str, filename: str = "<string>") -> List[SExpr]:
    """Tokenize and nest ``text``; ``;`` starts a line comment."""
    stack: List[SList] = []
    top = SList()
    top.span = SourceSpan(filename, 1, 1)
    cur = top
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line, col = line + 1, 1
            i += 1
            continue
        if c.isspace():
            i += 1
            col += 1
            continue
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c == "(":
            lst = SList()
            lst.span = SourceSpan(filename, line, col)
            cur.append(lst)
            stack.append(cur)
            cur = lst
            i += 1
            col += 1
            continue
        if c == ")":
            if not stack:
                raise SExprSyntaxError("unbalanced ')'", SourceSpan(filename, line, col))
            cur = stack.pop()
            i += 1
            col += 1
            continue
        j = i
        while j < n and not text[j].isspace() and text[j] not in "();":
            j += 1
        tok = Sym(text[i:j])
        tok.span = SourceSpan(filename, line, col)
        cur.append(tok)
        col += j - i
        i = j
    if stack:
        raise SExprSyntaxError("unclosed '('", cur.span)
    return list(top)


def _span(x) -> Optional[SourceSpan]:
    return getattr(x, "span", None)


def _expect_list(x, what: str) -> SList:
    if not isinstance(x, list):
        raise SExprSyntaxError(f"expected {what}, got symbol {x!r}", _span(x))
    return x


def _expect_sym(x, what: str) -> Sym:
    if isinstance(x, list):
        raise SExprSyntaxError(f"expected {what}, got a list", _span(x))
    return x


def _single(text: str, filename: str, keyword: str) -> SList:
    forms = read_sexprs(text, filename)
    if len(forms) != 1:
        raise SExprSyntaxError(f"expected exactly one ({keyword} ...) form", SourceSpan(filename, 1, 1))
    form = _expect_list(forms[0], keyword)
    if not form or form[0] != keyword:
        raise SExprSyntaxError(f"expected ({keyword} ...)", form.span)
    return form


def _atom(x) -> Atom:
    lst = _expect_list(x, "an atom")
    if not lst:
        raise SExprSyntaxError("empty atom", lst.span)
    parts = [_expect_sym(p, "a term") for p in lst]
    return Atom(str(parts[0]), tuple(str(p) for p in parts[1:]))


def _sections(form: SList) -> Dict[str, List[SList]]:
    out: Dict[str, List[SList]] = {}
    for item in form:
        item = _expect_list(item, "a section")
        if not item:
            raise SExprSyntaxError("empty section", item.span)
        out.setdefault(str(_expect_sym(item[0], "a keyword")), []).append(item)
    return out


def _one(sections, key: str, form: SList, required: bool = True) -> Optional[SList]:
    items = sections.get(key, [])
    if len(items) > 1:
        raise SExprSyntaxError(f"duplicate ({key} ...)", items[1].span)
    if not items:
        if required:
            raise SExprSyntaxError(f"missing ({key} ...)", form.span)
        return None
    return items[0]


class _Checker:
    def __init__(self, predicates: Dict[str, int]):
        self.predicates = predicates

    def atom(self, x) -> Atom:
        a = _atom(x)
        if a.name not in self.predicates:
            raise UndeclaredPredicate(f"predicate {a.name!r} is not declared", _span(x))
        if self.predicates[a.name] != len(a.args):
            raise ArityError(f"{a.name} has arity {self.predicates[a.name]}, used with {len(a.args)}", _span(x))
        return a


def _parse_operator(item: SList, chk: _Checker) -> Operator:
    secs = _sections(item[1:])
    head = _atom(_one(secs, "head", item)[1])
    pos, neg = [], []
    pre = _one(secs, "pre", item, required=False)
    for lit in (pre[1:] if pre else ()):
        lit = _expect_list(lit, "a literal")
        if lit and lit[0] == "not":
            if len(lit) != 2:
                raise SExprSyntaxError("(not ...) takes one atom", lit.span)
            neg.append(chk.atom(lit[1]))
        else:
            pos.append(chk.atom(lit))
    add_sec = _one(secs, "add", item, required=False)
    del_sec = _one(secs, "del", item, required=False)
    add = frozenset(chk.atom(a) for a in (add_sec[1:] if add_sec else ()))
    delete = frozenset(chk.atom(a) for a in (del_sec[1:] if del_sec else ()))
    if add & delete:
        raise ParseError(f"operator {head.name}: add and del overlap", item.span)
    op = Operator(head.name, head.args, frozenset(pos), frozenset(neg), add, delete)
    for v in set(op.free_variables()):
        bound_by_pre = any(v in a.args for a in op.pos)
        if not bound_by_pre:
            raise ParseError(f"operator {head.name}: variable {v} is not bound by a parameter or positive precondition", item.span)
    return op


def _parse_network(secs, item: SList) -> TaskNetwork:
    tasks: List[Tuple[str, Atom]] = []
    spans: Dict[str, SourceSpan] = {}
    tsec = _one(secs, "tasks", item, required=False)
    for t in (tsec[1:] if tsec else ()):
        t = _expect_list(t, "(id (action ...))")
        if len(t) != 2:
            raise SExprSyntaxError("task entries look like (t1 (action args...))", t.span)
        tid = str(_expect_sym(t[0], "a task id"))
        if tid in spans:
            raise DuplicateName(f"task id {tid} repeated", t.span)
        spans[tid] = t.span
        tasks.append((tid, _atom(t[1])))
    order = set()
    osec = _one(secs, "order", item, required=False)
    for pair in (osec[1:] if osec else ()):
        pair = _expect_list(pair, "an ordering pair")
        if pair and pair[0] == ":ordered":
            ids = [str(_expect_sym(p, "a task id")) for p in pair[1:]]
            order.update(zip(ids, ids[1:]))
            continue
        if len(pair) != 2:
            raise SExprSyntaxError("ordering pairs look like (t1 t2)", pair.span)
        order.add((str(_expect_sym(pair[0], "id")), str(_expect_sym(pair[1], "id"))))
    for a, b in order:
        for t in (a, b):
            if t not in spans:
                raise UnknownTask(f"ordering names unknown task {t}", osec.span)
    try:
        return TaskNetwork(tuple(tasks), frozenset(order))
    except CycleError as e:
        raise ParseError(str(e), osec.span if osec else item.span) from None


def _parse_method(item: SList) -> Method:
    secs = _sections(item[1:])
    mid = str(_expect_sym(_one(secs, "id", item)[1], "a method id"))
    head = _atom(_one(secs, "head", item)[1])
    net = _parse_network(secs, item)
    origin, inserted = None, ()
    prov = _one(secs, "provenance", item, required=False)
    if prov is not None:
        psecs = _sections(prov[1:])
        o = _one(psecs, "origin", prov)
        origin = str(_expect_sym(o[1], "a method id"))
        ins = _one(psecs, "inserted", prov, required=False)
        inserted = tuple(str(_expect_sym(t, "a task id")) for t in (ins[1:] if ins else ()))
        unknown = set(inserted) - set(net.ids)
        if unknown:
            raise UnknownTask(f"provenance names unknown tasks {sorted(unknown)}", prov.span)
    return Method(mid, head, net, origin, inserted)


def _check_method(m: Method, dom_ops, dom_compounds, span) -> None:
    if m.head.name in dom_ops:
        raise MethodHeadNotCompound(f"method {m.id}: head {m.head.name} is an operator", span)
    if m.head.name not in dom_compounds:
        raise MethodHeadNotCompound(f"method {m.id}: head {m.head.name} is not a declared compound", span)
    if len(m.head.args) != len(dom_compounds[m.head.name]):
        raise ArityError(f"method {m.id}: head arity mismatch", span)
    for tid, a in m.network.tasks:
        if a.name in dom_ops:
            want = len(dom_ops[a.name].params)
        elif a.name in dom_compounds:
            want = len(dom_compounds[a.name])
        else:
            raise UnknownTask(f"method {m.id}: task {tid} uses unknown action {a.name}", span)
        if len(a.args) != want:
            raise ArityError(f"method {m.id}: {a.name} expects {want} args", span)


def parse_domain(text: str, filename: str = "<domain>") -> Domain:
    form = _single(text, filename, "domain")
    if len(form) < 2 or isinstance(form[1], list):
        raise SExprSyntaxError("domain needs a name", form.span)
    name = str(form[1])
    predicates: Dict[str, int] = {}
    operators: Dict[str, Operator] = {}
    compounds: Dict[str, Tuple[str, ...]] = {}
    constants: List[str] = []
    method_items = []
    # predicates first so atoms can be checked regardless of section order
    for item in form[2:]:
        item = _expect_list(item, "a declaration")
        if item and item[0] == "predicates":
            for p in item[1:]:
                a = _atom(p)
                if a.name in predicates:
                    raise DuplicateName(f"predicate {a.name} declared twice", _span(p))
                predicates[a.name] = len(a.args)
    chk = _Checker(predicates)
    for item in form[2:]:
        if not item:
            raise SExprSyntaxError("empty declaration", item.span)
        kw = item[0]
        if kw == "predicates":
            continue
        if kw == "constants":
            constants.extend(str(_expect_sym(c, "a constant")) for c in item[1:])
        elif kw == "operator":
            op = _parse_operator(item, chk)
            if op.name in operators or op.name in compounds:
                raise DuplicateName(f"action {op.name} declared twice", item.span)
            operators[op.name] = op
        elif kw == "compound":
            a = _atom(item[1])
            if a.name in compounds or a.name in operators:
                raise DuplicateName(f"action {a.name} declared twice", item.span)
            compounds[a.name] = a.args
        elif kw == "method":
            method_items.append(item)
        else:
            raise SExprSyntaxError(f"unknown declaration {kw!r}", item.span)
    methods = []
    seen = set()
    for item in method_items:
        m = _parse_method(item)
        if m.id in seen:
            raise DuplicateName(f"method id {m.id} repeated", item.span)
        seen.add(m.id)
        _check_method(m, operators, compounds, item.span)
        methods.append(m)
    return Domain(name, predicates, operators, compounds, tuple(methods), frozenset(constants))


def parse_methods(text: str, dom: Domain, filename: str = "<methods>") -> Tuple[Method, ...]:
    form = _single(text, filename, "methods")
    out = []
    seen = {m.id for m in dom.methods}
    for item in form[1:]:
        item = _expect_list(item, "(method ...)")
        if not item or item[0] != "method":
            raise SExprSyntaxError("expected (method ...)", item.span)
        m = _parse_method(item)
        if m.id in seen:
            raise DuplicateName(f"method id {m.id} repeated", item.span)
        seen.add(m.id)
        _check_method(m, dom.operators, dom.compounds, item.span)
        out.append(m)
    return tuple(out)


def parse_instance(text: str, dom: Domain, filename: str = "<instance>") -> Instance:
    form = _single(text, filename, "instance")
    if len(form) < 2 or isinstance(form[1], list):
        raise SExprSyntaxError("instance needs a name", form.span)
    name = str(form[1])
    secs = _sections(form[2:])
    chk = _Checker(dict(dom.predicates))
    init_sec = _one(secs, "init", form)
    init = []
    for x in init_sec[1:]:
        a = chk.atom(x)
        if not a.ground:
            raise UngroundedInit(f"initial atom {a} has variables", _span(x))
        init.append(a)
    task_sec = _one(secs, "task", form)
    top = _atom(task_sec[1])
    if top.name not in dom.compounds:
        raise UnknownTask(f"top task {top.name} is not a declared compound", task_sec.span)
    if len(top.args) != len(dom.compounds[top.name]):
        raise ArityError(f"top task {top.name} arity mismatch", task_sec.span)
    if not top.ground:
        raise UngroundedInit(f"top task {top} has variables", task_sec.span)
    goal_sec = _one(secs, "goal", form, required=False)
    goal = []
    for x in (goal_sec[1:] if goal_sec else ()):
        a = chk.atom(x)
        if not a.ground:
            raise UngroundedInit(f"goal atom {a} has variables", _span(x))
        goal.append(a)
    return Instance(frozenset(init), top, name, frozenset(goal))


def parse_prioritization(text: str, dom: Domain, filename: str = "<prioritization>") -> Prioritization:
    form = _single(text, filename, "prioritization")
    strata = []
    for item in form[1:]:
        item = _expect_list(item, "(stratum ...)")
        if not item or item[0] != "stratum":
            raise SExprSyntaxError("expected (stratum ...)", item.span)
        strata.append(frozenset(str(_expect_sym(m, "a method id")) for m in item[1:]))
    try:
        return Prioritization.over(strata, [m.id for m in dom.methods])
    except NotAPartition as e:
        raise PartitionError(str(e), form.span) from None


# -- printing ---------------------------------------------------------------


def _fmt_atom(a: Atom) -> str:
    return "(" + " ".join((a.name,) + tuple(a.args)) + ")"


def _fmt_method(m: Method, indent: str = "  ") -> List[str]:
    lines = [f"{indent}(method (id {m.id})", f"{indent}  (head {_fmt_atom(m.head)})"]
    if m.network.tasks:
        lines.append(f"{indent}  (tasks")
        for tid, a in m.network.tasks:
            lines.append(f"{indent}    ({tid} {_fmt_atom(a)})")
        lines[-1] += ")"
    if m.network.order:
        pairs = " ".join(f"({a} {b})" for a, b in sorted(m.network.order))
        lines.append(f"{indent}  (order {pairs})")
    if m.origin is not None:
        ins = " ".join(m.inserted)
        lines.append(f"{indent}  (provenance (origin {m.origin}) (inserted{(' ' + ins) if ins else ''}))")
    lines[-1] += ")"
    return lines


def _fmt_domain(d: Domain) -> str:
    lines = [f"(domain {d.name}"]
    if d.predicates:
        preds = " ".join(
            _fmt_atom(Atom(p, tuple(f"?x{i}" for i in range(n)))) for p, n in sorted(d.predicates.items())
        )
        lines.append(f"  (predicates {preds})")
    if d.constants:
        lines.append(f"  (constants {' '.join(sorted(d.constants))})")
    for name in sorted(d.operators):
        op = d.operators[name]
        lines.append(f"  (operator (head {_fmt_atom(op.head)})")
        pre = [_fmt_atom(a) for a in sorted(op.pos)] + [f"(not {_fmt_atom(a)})" for a in sorted(op.neg)]
        lines.append(f"    (pre{''.join(' ' + p for p in pre)})")
        lines.append(f"    (add{''.join(' ' + _fmt_atom(a) for a in sorted(op.add))})")
        lines.append(f"    (del{''.join(' ' + _fmt_atom(a) for a in sorted(op.delete))}))")
    for name in sorted(d.compounds):
        lines.append(f"  (compound {_fmt_atom(Atom(name, d.compounds[name]))})")
    for m in d.methods:
        lines.extend(_fmt_method(m))
    lines[-1] += ")"
    return "\n".join(lines) + "\n"


def _fmt_instance(inst: Instance) -> str:
    lines = [f"(instance {inst.name}", "  (init"]
    for a in sorted(inst.init):
        lines.append(f"    {_fmt_atom(a)}")
    lines[-1] += ")"
    lines.append(f"  (task {_fmt_atom(inst.top)})")
    if inst.goal:
        lines.append(f"  (goal {' '.join(_fmt_atom(a) for a in sorted(inst.goal))})")
    lines[-1] += ")"
    return "\n".join(lines) + "\n"


def _fmt_prioritization(p: Prioritization) -> str:
    if not p.strata:
        return "(prioritization)\n"
    lines = ["(prioritization"]
    for s in p.strata:
        lines.append(f"  (stratum{''.join(' ' + m for m in sorted(s))})")
    lines[-1] += ")"
    return "\n".join(lines) + "\n"


def _fmt_methods(ms: Iterable[Method]) -> str:
    ms = list(ms)
    if not ms:
        return "(methods)\n"
    lines = ["(methods"]
    for m in ms:
        lines.extend(_fmt_method(m))
    lines[-1] += ")"
    return "\n".join(lines) + "\n"


def dumps(x) -> str:
    """Canonical text for a domain, instance, prioritization or method collection."""
    if isinstance(x, Domain):
        return _fmt_domain(x)
    if isinstance(x, Instance):
        return _fmt_instance(x)
    if isinstance(x, Prioritization):
        return _fmt_prioritization(x)
    if isinstance(x, Method):
        return _fmt_methods([x])
    if isinstance(x, (list, tuple, set, frozenset)):
        return _fmt_methods(sorted(x, key=lambda m: m.id) if isinstance(x, (set, frozenset)) else x)
    raise TypeError(f"cannot print {type(x).__name__}")
