"""
Command-line front end: ``validate``, ``plan``, ``check`` and ``gen``.

Exit codes: 0 success, 1 no plan (or an invalid plan under ``check``), 2 invalid input,
3 time limit hit with a feasible but unproven plan, 4 time limit hit with nothing,
5 internal error (a solver or synthesis result that failed its own checks).
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from pydantic import BaseModel, ConfigDict, ValidationError

from python.deploy import fixtures, generators
from python.deploy.errors import InputError, InternalError
from python.deploy.formats import (
    PlanFile,
    dump_configuration,
    dump_nodes,
    dump_universe,
    load_configuration,
    load_nodes,
    load_plan,
    load_universe,
    parse_bound_overrides,
    read_json,
    universe_hash,
    write_json,
)
from python.deploy.model import (
    Configuration,
    DeploymentPlan,
    NodePool,
    Universe,
    check_provisional,
    check_universe,
    validate_configuration,
)
from python.deploy.phase2 import MaximizeBindings, MinimizeCrossNode, NoMetric, WeightedMetric
from python.deploy.planner import PlannerOptions, PlanMode, PlanResult, PlanStatus, plan_deployment
from python.deploy.solver import export_model
from python.deploy.verifier import check_problem_output, run_plan

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NO_PLAN = 1
EXIT_INVALID_INPUT = 2
EXIT_UNPROVEN = 3
EXIT_TIMEOUT = 4
EXIT_INTERNAL = 5

_STATUS_EXIT = {
    PlanStatus.OPTIMAL: EXIT_OK,
    PlanStatus.NO_PLAN: EXIT_NO_PLAN,
    PlanStatus.FEASIBLE_UNPROVEN: EXIT_UNPROVEN,
    PlanStatus.TIMEOUT: EXIT_TIMEOUT,
}


class ProblemFiles(BaseModel):
    """Problem inputs named on the command line; ``load`` parses and cross-checks them"""

    model_config = ConfigDict(frozen=True)

    universe: Path
    nodes: Path
    initial: Optional[Path] = None
    target: Optional[str] = None

    def load(self) -> tuple[Universe, NodePool, Configuration]:
        universe = load_universe(self.universe)
        nodes = load_nodes(self.nodes)
        initial = load_configuration(self.initial) if self.initial else Configuration.empty()
        if self.target is not None and not universe.has(self.target):
            raise InputError(f"target type {self.target!r} is not in the universe")
        validate_configuration(initial, universe, nodes)
        logger.info(
            "loaded %d types, %d nodes, %d initial instances",
            len(universe.types),
            len(nodes.nodes),
            len(initial.type_of),
        )
        return universe, nodes, initial


def _problem_files(args: argparse.Namespace) -> ProblemFiles:
    return ProblemFiles(
        universe=args.universe, nodes=args.nodes, initial=args.initial, target=args.target
    )


def parse_metric(text: str) -> BaseModel:
    """``none``, ``min-cross``, ``max-bind`` or ``weighted:PATH``"""
    if text == "none":
        return NoMetric()
    if text == "min-cross":
        return MinimizeCrossNode()
    if text == "max-bind":
        return MaximizeBindings()
    kind, sep, path = text.partition(":")
    if kind == "weighted" and sep and path:
        data = read_json(Path(path))
        return WeightedMetric.model_validate({**data, "kind": "weighted"})
    raise InputError(f"unknown metric {text!r}; use none, min-cross, max-bind or weighted:PATH")


def build_options(args: argparse.Namespace) -> PlannerOptions:
    """Options file first, then every flag given explicitly"""
    base: dict[str, Any] = {}
    if args.options:
        base = PlannerOptions.model_validate(read_json(args.options)).model_dump(mode="json")
    if args.metric is not None:
        base["metric"] = parse_metric(args.metric).model_dump(mode="json")
    if args.mode is not None:
        base["mode"] = args.mode
    if args.time_limit is not None:
        base["time_limit"] = args.time_limit
    if args.seed is not None:
        base["seed"] = args.seed
    if args.bound:
        base["bounds"] = {**base.get("bounds", {}), **parse_bound_overrides(args.bound)}
    return PlannerOptions.model_validate(base)


def _print_findings(title: str, findings: Sequence[str]) -> None:
    print(f"{title}:")
    for finding in findings:
        print(f"  - {finding}")


# Commands


def cmd_validate(args: argparse.Namespace) -> int:
    universe, nodes, initial = _problem_files(args).load()
    cycle = check_universe(universe)
    if cycle is not None:
        print(f"strong dependency cycle: {' -> '.join(cycle + cycle[:1])}")
        return EXIT_INVALID_INPUT

    report = check_provisional(initial, universe, nodes)
    blocking = report.blocking()
    if blocking:
        _print_findings(
            "initial configuration is not provisionally correct", [v.describe() for v in blocking]
        )
        return EXIT_INVALID_INPUT
    pending = [v.describe() for v in report.violations if v not in blocking]
    if pending:
        _print_findings("initial configuration is provisionally correct only", pending)
    print(
        f"ok: {len(universe.types)} types, {len(nodes.nodes)} nodes, "
        f"{len(initial.type_of)} initial instances ({report.verdict.value})"
    )
    return EXIT_OK


def _print_summary(result: PlanResult) -> None:
    summary = result.summary
    print(f"status: {summary.status.value}")
    if summary.cost is None:
        return
    print(f"cost: {summary.cost}")
    print(f"used nodes: {', '.join(summary.used_nodes)}")
    print("instances: " + ", ".join(f"{t}={n}" for t, n in sorted(summary.counts.items())))
    for placement in summary.placements:
        print(f"  {placement.type} x{placement.count} on {placement.node}")
    if summary.metric_value is not None:
        print(f"binding metric: {summary.metric_value}")
    print(f"actions: {summary.actions} (kept {summary.kept_instances} initial instances)")


def cmd_plan(args: argparse.Namespace) -> int:
    files = _problem_files(args)
    if files.target is None:
        raise InputError("plan needs --target")
    universe, nodes, initial = files.load()
    options = build_options(args)

    result = plan_deployment(universe, nodes, files.target, initial, options)
    if args.emit_model:
        args.emit_model.parent.mkdir(parents=True, exist_ok=True)
        args.emit_model.write_text(export_model(result.phase1_model), encoding="utf-8")

    plan_file = PlanFile(
        universe_hash=universe_hash(universe),
        target=files.target,
        mode=options.mode.value,
        status=result.status.value,
        summary=result.summary.model_dump(mode="json"),
        actions=list(result.plan.actions) if result.plan else [],
    )
    if result.status == PlanStatus.NO_PLAN:
        print("no")
    elif result.status == PlanStatus.TIMEOUT:
        print("timeout: no plan found within the time limit")
    if args.out:
        write_json(args.out, plan_file.model_dump(mode="json"))
        if result.status != PlanStatus.NO_PLAN:
            _print_summary(result)
    elif result.plan is not None:
        print(json.dumps(plan_file.model_dump(mode="json"), indent=2))
    if result.status == PlanStatus.FEASIBLE_UNPROVEN:
        logger.warning("time limit reached: plan is feasible but not proven optimal")
    return _STATUS_EXIT[result.status]


def cmd_check(args: argparse.Namespace) -> int:
    universe, nodes, initial = _problem_files(args).load()
    plan_file = load_plan(args.plan)
    if plan_file.universe_hash is not None and plan_file.universe_hash != universe_hash(universe):
        raise InputError("plan was produced for a different universe")
    target = args.target or plan_file.target
    if target is None:
        raise InputError("check needs --target or a plan file naming its target")

    trace = run_plan(initial, DeploymentPlan(actions=tuple(plan_file.actions)), universe, nodes)
    if trace.violation is not None:
        where = "final configuration" if trace.violation.final else f"step {trace.violation.step}"
        print(f"violation at {where}: {trace.violation.finding}")
        return EXIT_NO_PLAN
    output = check_problem_output(trace, target, nodes)
    if not output.has_target:
        print(f"valid plan of {len(trace.steps)} steps, but no instance of {target}")
        return EXIT_NO_PLAN
    print(f"valid: {len(trace.steps)} steps, final cost {output.final_cost}")
    return EXIT_OK


def _generate(args: argparse.Namespace) -> fixtures.GeneratedProblem:
    if args.kind == "partition":
        return generators.partition(args.values or [])
    if args.kind == "binpack":
        if args.capacity is None:
            raise InputError("binpack needs --capacity")
        return generators.binpack(args.sizes or [], args.capacity)
    if args.kind == "random":
        return generators.random_problem(args.seed)
    if args.kind == "fig1-mini":
        return fixtures.fig1_mini(with_initial=args.with_initial)
    if args.kind == "email-pipeline":
        if args.load <= 0:
            raise InputError("--load must be positive")
        return fixtures.email_pipeline(args.load)
    if args.providers <= 0:
        raise InputError("--providers must be positive")
    return fixtures.load_balancer(args.providers)


def cmd_gen(args: argparse.Namespace) -> int:
    problem = _generate(args)
    out: Path = args.out
    write_json(out / "universe.json", dump_universe(problem.universe))
    write_json(out / "nodes.json", dump_nodes(problem.nodes))
    write_json(out / "options.json", problem.options.model_dump(mode="json"))
    command = [
        "deploy-planner plan",
        f"--universe {out / 'universe.json'}",
        f"--nodes {out / 'nodes.json'}",
        f"--options {out / 'options.json'}",
        f"--target {problem.target}",
    ]
    if problem.initial is not None:
        write_json(out / "initial.json", dump_configuration(problem.initial))
        command.insert(3, f"--initial {out / 'initial.json'}")
    print(f"wrote {args.kind} problem to {out}")
    print(" ".join(command))
    return EXIT_OK


# Parser


def _add_problem_args(parser: argparse.ArgumentParser, target_required: bool = False) -> None:
    parser.add_argument("--universe", type=Path, required=True, help="universe JSON file")
    parser.add_argument("--nodes", type=Path, required=True, help="node pool JSON file")
    parser.add_argument("--initial", type=Path, help="initial configuration JSON file")
    parser.add_argument("--target", required=target_required, help="target microservice type")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deploy-planner",
        description="Optimal microservice deployment planning",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    validate = commands.add_parser("validate", help="check problem files")
    _add_problem_args(validate)
    validate.set_defaults(handler=cmd_validate)

    plan = commands.add_parser("plan", help="synthesise an optimal deployment plan")
    _add_problem_args(plan, target_required=True)
    plan.add_argument("--options", type=Path, help="options JSON file, e.g. written by gen")
    plan.add_argument("--metric", help="none | min-cross | max-bind | weighted:PATH")
    plan.add_argument("--mode", choices=[m.value for m in PlanMode])
    plan.add_argument("--time-limit", type=float, help="seconds for the whole pipeline")
    plan.add_argument("--bound", action="append", default=[], metavar="TYPE=N")
    plan.add_argument("--seed", type=int)
    plan.add_argument("--emit-model", type=Path, help="write the phase 1 model here")
    plan.add_argument("--out", type=Path, help="plan file (default: stdout)")
    plan.set_defaults(handler=cmd_plan)

    check = commands.add_parser("check", help="replay a plan file")
    _add_problem_args(check)
    check.add_argument("--plan", type=Path, required=True, help="plan JSON file")
    check.set_defaults(handler=cmd_check)

    gen = commands.add_parser("gen", help="write a generated problem")
    gen.add_argument(
        "kind",
        choices=["partition", "binpack", "random", "fig1-mini", "email-pipeline", "load-balancer"],
    )
    gen.add_argument("--out", type=Path, required=True, help="output directory")
    gen.add_argument("--values", type=int, nargs="*", help="partition elements")
    gen.add_argument("--sizes", type=int, nargs="*", help="binpack item sizes")
    gen.add_argument("--capacity", type=int, help="binpack bin capacity")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--load", type=int, default=10, help="thousands of requests")
    gen.add_argument("--providers", type=int, default=3)
    gen.add_argument("--with-initial", action="store_true", help="fig1-mini initial state")
    gen.set_defaults(handler=cmd_gen)
    return parser


def _configure_logging(verbose: int, quiet: bool) -> None:
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        return int(args.handler(args))
    except (InputError, ValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
