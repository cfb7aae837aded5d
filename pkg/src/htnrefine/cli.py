"""Command-line entry points.

Exit codes: 0 success, 1 parse/IO/config error, 2 unsolvable, 3 budget
exhausted, 4 no instance had a TIHTN plan.
"""
from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import click

from .core import Domain, PlanningError
from .harness import evaluate, gen_instances, logistics_domains, prioritization, workers_from_env
from .parser import ParseError, dumps, parse_domain, parse_instance, parse_methods, parse_prioritization, read_sexprs
from .refine import RefineConfig, method_refine
from .search import NoTIHTNPlan, ResourceLimit, SearchConfig, Unsolvable
from .tihtn import plan_tihtn
from .htn import plan_htn
from .tree import plan_actions, tree_from_dict, tree_to_dict, validate_dt

OK, INPUT_ERROR, UNSOLVABLE, BUDGET, NO_TIHTN = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class RunConfig:
    budget_ms: int = 30_000
    node_budget: int = 1_000_000
    max_insertions: int = 6
    exact_cap: int = 12
    seed: int = 0

    def search(self) -> SearchConfig:
        return SearchConfig(max_insertions=self.max_insertions, node_budget=self.node_budget, time_budget=self.budget_ms / 1000)


class Exit(Exception):
    def __init__(self, code: int, message: str = ""):
        super().__init__(message)
        self.code = code


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise Exit(INPUT_ERROR, f"cannot read {path}: {e.strerror}")


def _domain(path: str, methods: Sequence[str] = ()) -> Domain:
    dom = parse_domain(_read(path), path)
    extra = []
    for p in methods:
        extra.extend(parse_methods(_read(p), dom.with_methods(extra), p))
    return dom.with_methods(extra)


def _instance_files(paths: Sequence[str]) -> List[str]:
    out = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            out.extend(sorted(str(f) for f in path.glob("*.inst")))
        else:
            out.append(p)
    return out


def _run(fn):
    """Map library errors onto exit codes."""
    try:
        code = fn()
    except Exit as e:
        if str(e):
            click.echo(f"error: {e}", err=True)
        sys.exit(e.code)
    except ParseError as e:
        click.echo(f"parse error: {e}", err=True)
        sys.exit(INPUT_ERROR)
    except NoTIHTNPlan as e:
        click.echo(f"no plan: {e}", err=True)
        sys.exit(UNSOLVABLE)
    except Unsolvable as e:
        click.echo(f"unsolvable: {e}", err=True)
        sys.exit(UNSOLVABLE)
    except ResourceLimit as e:
        click.echo(f"budget exhausted: {e}", err=True)
        sys.exit(BUDGET)
    except (PlanningError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(INPUT_ERROR)
    sys.exit(code or OK)


budget_opts = [
    click.option("--budget-ms", type=click.IntRange(min=1), default=30_000, show_default=True, help="Wall-clock budget per search."),
    click.option("--node-budget", type=click.IntRange(min=1), default=1_000_000, show_default=True),
]


def with_budget(f):
    for opt in reversed(budget_opts):
        f = opt(f)
    return f


@click.group()
@click.option("-v", "--verbose", count=True)
def main(verbose: int) -> None:
    """HTN planning with task insertion and method refinement."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("domain")
@click.argument("instance")
@click.option("--methods", "-m", multiple=True, help="Extra .methods files added to the domain.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
@with_budget
def plan(domain, instance, methods, fmt, budget_ms, node_budget):
    """Solve an instance by decomposition alone."""

    def go():
        dom = _domain(domain, methods)
        inst = parse_instance(_read(instance), dom, instance)
        cfg = RunConfig(budget_ms, node_budget, 0).search()
        dt = plan_htn(dom, inst, cfg)
        if fmt == "json":
            click.echo(json.dumps({"plan": [str(a) for a in plan_actions(dt)], "tree": tree_to_dict(dt)}, indent=2))
        else:
            for a in plan_actions(dt):
                click.echo(str(a))

    _run(go)


@main.command()
@click.argument("domain")
@click.argument("instance")
@click.option("--methods", "-m", multiple=True)
@click.option("--max-insertions", type=click.IntRange(min=0), default=6, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
@with_budget
def tiplan(domain, instance, methods, max_insertions, fmt, budget_ms, node_budget):
    """Solve with task insertion; inserted steps are prefixed with '+'."""

    def go():
        dom = _domain(domain, methods)
        inst = parse_instance(_read(instance), dom, instance)
        result = plan_tihtn(dom, inst, RunConfig(budget_ms, node_budget, max_insertions).search())
        if fmt == "json":
            click.echo(json.dumps({"plan": result.pretty(), "inserted": list(result.inserted), "tree": tree_to_dict(result.tree)}, indent=2))
        else:
            for line in result.pretty():
                click.echo(line)

    _run(go)


def _prio(spec: Optional[str], dom: Domain, seed: int):
    if spec is None or spec in ("strata", "strata-inverted", "random"):
        return prioritization(spec or "strata", dom, seed)
    return parse_prioritization(_read(spec), dom, spec), "preferred"


@main.command()
@click.argument("domain")
@click.argument("instances", nargs=-1, required=True)
@click.option("--prio", default=None, help="strata | strata-inverted | random | path to a prioritization file.")
@click.option("--out", "-o", type=click.Path(dir_okay=False), help="Write refined methods here (default stdout).")
@click.option("--audit", type=click.Path(dir_okay=False), help="Write the JSON audit log here.")
@click.option("--no-minimize", is_flag=True, help="Skip the minimization phase.")
@click.option("--max-insertions", type=click.IntRange(min=0), default=6, show_default=True)
@click.option("--exact-cap", type=click.IntRange(min=0), default=12, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@with_budget
def refine(domain, instances, prio, out, audit, no_minimize, max_insertions, exact_cap, seed, budget_ms, node_budget):
    """Learn refined methods from instance files or directories of .inst files."""

    def go():
        dom = _domain(domain)
        files = _instance_files(instances)
        if not files:
            raise Exit(INPUT_ERROR, "no instance files given")
        insts = [parse_instance(_read(f), dom, f) for f in files]
        p, mode = _prio(prio, dom, seed)
        run = RunConfig(budget_ms, node_budget, max_insertions, exact_cap, seed)
        cfg = RefineConfig(run.search(), exact_cap, not no_minimize, profile=mode, seed=seed)
        result = method_refine(dom, insts, p, cfg)
        text = dumps(result.methods)
        if out:
            Path(out).write_text(text)
        else:
            click.echo(text, nl=False)
        if audit:
            Path(audit).write_text(result.audit_json())
        if not result.trees:
            click.echo("no instance had a TIHTN plan", err=True)
            return NO_TIHTN
        return OK

    _run(go)


@main.command(name="eval")
@click.option("--preset", "level", type=click.Choice(["MR-H", "MR-M", "MR-L"]), default="MR-H", show_default=True)
@click.option("--train", type=click.IntRange(min=0), default=10, show_default=True)
@click.option("--test", type=click.IntRange(min=0), default=20, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--prio", type=click.Choice(["strata", "strata-inverted", "random"]), default="strata", show_default=True)
@click.option("--sizes", default=None, help="Comma-separated training sizes (default: every size).")
@click.option("--exact-cap", type=click.IntRange(min=0), default=12, show_default=True)
@click.option("--max-insertions", type=click.IntRange(min=0), default=6, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--out", "-o", type=click.Path(dir_okay=False))
@with_budget
def eval_cmd(level, train, test, seed, prio, sizes, exact_cap, max_insertions, fmt, out, budget_ms, node_budget):
    """Solving-rate curve on the bundled logistics domain."""

    def go():
        full, deg = logistics_domains(level)
        insts = gen_instances(full, seed, train + test)
        p, mode = prioritization(prio, deg, seed)
        run = RunConfig(budget_ms, node_budget, max_insertions, exact_cap, seed)
        cfg = RefineConfig(run.search(), exact_cap, profile=mode, seed=seed)
        chosen = None
        if sizes:
            try:
                chosen = [int(x) for x in sizes.split(",") if x.strip()]
            except ValueError:
                raise Exit(INPUT_ERROR, f"bad --sizes {sizes!r}")
        curve = evaluate(full, deg, insts[:train], insts[train:], p, cfg, run.search(), chosen, workers_from_env())
        if not test:
            curve.points = []
        text = curve.to_csv() if fmt == "csv" else curve.to_json() + "\n"
        if out:
            Path(out).write_text(text)
        else:
            click.echo(text, nl=False)

    _run(go)


@main.command()
@click.argument("domain")
@click.argument("instance")
@click.argument("tree", type=click.Path(dir_okay=False))
@click.option("--methods", "-m", multiple=True)
def validate(domain, instance, tree, methods):
    """Check a JSON decomposition tree; lists every violated condition."""

    def go():
        dom = _domain(domain, methods)
        inst = parse_instance(_read(instance), dom, instance)
        try:
            data = json.loads(_read(tree))
            dt = tree_from_dict(data.get("tree", data))
        except (ValueError, KeyError, TypeError) as e:
            raise Exit(INPUT_ERROR, f"malformed tree file: {e}")
        verdict = validate_dt(dt, dom, inst)
        click.echo(str(verdict))
        return OK if verdict.ok else UNSOLVABLE

    _run(go)


@main.command()
@click.argument("path")
@click.option("--domain", "-d", help="Domain needed to read instance, methods and prioritization files.")
def fmt(path, domain):
    """Print a file in canonical form."""

    def go():
        text = _read(path)
        forms = read_sexprs(text, path)
        head = str(forms[0][0]) if forms and isinstance(forms[0], list) and forms[0] else ""
        if head == "domain":
            click.echo(dumps(parse_domain(text, path)), nl=False)
            return
        if not domain:
            raise Exit(INPUT_ERROR, f"--domain is required to format a {head or 'this'} file")
        dom = _domain(domain)
        if head == "instance":
            click.echo(dumps(parse_instance(text, dom, path)), nl=False)
        elif head == "methods":
            click.echo(dumps(parse_methods(text, dom, path)), nl=False)
        elif head == "prioritization":
            click.echo(dumps(parse_prioritization(text, dom, path)), nl=False)
        else:
            raise Exit(INPUT_ERROR, f"unknown file kind {head!r}")

    _run(go)


if __name__ == "__main__":
    main()
