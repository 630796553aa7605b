"""
End-to-end planning: Phase 1, Phase 2 and Phase 3, then a replay of the plan.
"""

import logging
import time
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from python.deploy.errors import InputError, InternalError
from python.deploy.model import (
    Binding,
    Configuration,
    DeploymentPlan,
    NodePool,
    Universe,
    natural_key,
    require_well_formed,
    validate_configuration,
)
from python.deploy.phase1 import (
    InstancePlan,
    Placement,
    check_instance_plan,
    derive_bounds,
    encode_phase1,
    extract_instance_plan,
)
from python.deploy.phase2 import (
    BindingMetric,
    NoMetric,
    PlacedInstance,
    WeightedMetric,
    encode_phase2,
    extract_binding_plan,
    materialize_instances,
)
from python.deploy.phase3 import (
    assemble_target,
    match_instances,
    synthesize_incremental,
    synthesize_scratch,
)
from python.deploy.solver import Model, SolveBudget, SolveOutcome, SolveStatus, solve
from python.deploy.verifier import PlanTrace, check_problem_output, run_plan

logger = logging.getLogger(__name__)


class PlanMode(str, Enum):
    SCRATCH = "scratch"
    INCREMENTAL = "incremental"


class PlanStatus(str, Enum):
    OPTIMAL = "optimal"
    NO_PLAN = "no"
    FEASIBLE_UNPROVEN = "feasible_unproven"
    TIMEOUT = "timeout"


class PlannerOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    metric: BindingMetric = Field(default_factory=NoMetric)
    mode: PlanMode = PlanMode.SCRATCH
    time_limit: Optional[float] = Field(default=None, gt=0)
    seed: int = 0
    bounds: dict[str, int] = Field(default_factory=dict)


class PlanSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    status: PlanStatus
    phase1_status: str
    phase2_status: Optional[str] = None
    counts: dict[str, int] = Field(default_factory=dict)
    placements: list[Placement] = Field(default_factory=list)
    used_nodes: list[str] = Field(default_factory=list)
    cost: Optional[int] = None
    actions: int = 0
    kept_instances: int = 0
    metric_value: Optional[int] = None


@dataclass(frozen=True)
class PlanResult:
    status: PlanStatus
    summary: PlanSummary
    phase1_model: Model
    instance_plan: Optional[InstancePlan] = None
    target: Optional[Configuration] = None
    plan: Optional[DeploymentPlan] = None
    trace: Optional[PlanTrace] = None


class _Clock:
    def __init__(self, limit: Optional[float]):
        self.deadline = None if limit is None else time.perf_counter() + limit

    def budget(self, seed: int) -> SolveBudget:
        if self.deadline is None:
            return SolveBudget(seed=seed)
        return SolveBudget(time_limit=max(self.deadline - time.perf_counter(), 0.0), seed=seed)


def _strong_pins(
    initial: Configuration, matching: dict[str, str], universe: Universe
) -> tuple[set[Binding], set[tuple[str, str]]]:
    """Strong bindings of reusable instances, and the ports they close"""
    pins: set[Binding] = set()
    closed: set[tuple[str, str]] = set()
    for z, kept_as in matching.items():
        strong = universe.get(initial.type_of[z]).strong_requires
        bindings = [b for b in initial.bindings if b.requirer == z and b.interface in strong]
        if any(b.provider not in matching for b in bindings):
            continue
        for b in bindings:
            pins.add(
                Binding(interface=b.interface, requirer=kept_as, provider=matching[b.provider])
            )
        closed.update((kept_as, p) for p in strong)
    return pins, closed


def _weak_pins(
    initial: Configuration, matching: dict[str, str], universe: Universe
) -> set[Binding]:
    pins = set()
    for b in initial.bindings:
        weak = universe.get(initial.type_of[b.requirer]).weak_requires
        if b.interface in weak and b.requirer in matching and b.provider in matching:
            pins.add(
                Binding(
                    interface=b.interface,
                    requirer=matching[b.requirer],
                    provider=matching[b.provider],
                )
            )
    return pins


def _solve_phase2(
    placed: list[PlacedInstance],
    universe: Universe,
    options: PlannerOptions,
    clock: _Clock,
    initial: Configuration,
) -> tuple[SolveOutcome, object]:
    attempts: list[tuple[set[Binding], set[tuple[str, str]]]] = [(set(), set())]
    if options.mode == PlanMode.INCREMENTAL and initial.type_of:
        matching = match_instances(initial, placed)
        strong, closed = _strong_pins(initial, matching, universe)
        weak = _weak_pins(initial, matching, universe)
        attempts = [(strong | weak, closed), (strong, closed), (set(), set())]

    outcome: Optional[SolveOutcome] = None
    variables: object = None
    for number, (pinned, closed_ports) in enumerate(attempts, start=1):
        model, variables = encode_phase2(
            placed, universe, options.metric, pinned=pinned, closed=closed_ports
        )
        outcome = solve(model, clock.budget(options.seed))
        if outcome.status != SolveStatus.UNSAT:
            if number > 1:
                logger.info("phase 2 kept fewer initial bindings (attempt %d)", number)
            break
        if number < len(attempts):
            logger.warning("phase 2 infeasible with %d pinned bindings, relaxing", len(pinned))
    assert outcome is not None
    return outcome, variables


def plan_deployment(
    universe: Universe,
    nodes: NodePool,
    target: str,
    initial: Optional[Configuration] = None,
    options: Optional[PlannerOptions] = None,
) -> PlanResult:
    """Solve the optimal deployment problem and synthesise a verified plan"""
    options = options or PlannerOptions()
    initial = initial or Configuration.empty()
    require_well_formed(universe)
    if not universe.has(target):
        raise InputError(f"target type {target!r} is not in the universe")
    validate_configuration(initial, universe, nodes)

    clock = _Clock(options.time_limit)
    bounds = derive_bounds(universe, nodes, options.bounds)
    model, variables = encode_phase1(universe, nodes, target, bounds)
    outcome = solve(model, clock.budget(options.seed))
    logger.info("phase 1: %s, cost %s", outcome.status.value, outcome.objective_value)

    if not outcome.has_solution:
        status = PlanStatus.NO_PLAN if outcome.status == SolveStatus.UNSAT else PlanStatus.TIMEOUT
        summary = PlanSummary(status=status, phase1_status=outcome.status.value)
        return PlanResult(status=status, summary=summary, phase1_model=model)

    assignment, phase1_vars = outcome.assignment, variables
    if (
        options.mode == PlanMode.INCREMENTAL
        and initial.type_of
        and outcome.status == SolveStatus.OPTIMAL
    ):
        retain = Counter((initial.type_of[z], initial.node_of[z]) for z in initial.type_of)
        reuse_model, reuse_vars = encode_phase1(
            universe, nodes, target, bounds, retain=dict(retain), cost_cap=outcome.objective_value
        )
        reuse = solve(reuse_model, clock.budget(options.seed))
        if reuse.has_solution:
            assignment, phase1_vars = reuse.assignment, reuse_vars
            logger.info("phase 1 reuse: %s placements retained", reuse.objective_value)
        else:
            logger.warning("phase 1 reuse pass found nothing (%s)", reuse.status.value)

    instance_plan = extract_instance_plan(assignment, phase1_vars)
    problems = check_instance_plan(instance_plan, universe, nodes, target, bounds)
    if problems:
        raise InternalError(f"phase 1 solution breaks its constraints: {problems}")

    placed = materialize_instances(instance_plan)
    phase2, phase2_vars = _solve_phase2(placed, universe, options, clock, initial)
    logger.info("phase 2: %s", phase2.status.value)
    if not phase2.has_solution:
        constrained = isinstance(options.metric, WeightedMetric) and (
            options.metric.saturate or options.metric.floor is not None
        )
        if phase2.status == SolveStatus.UNSAT and not constrained:
            raise InternalError("phase 2 is infeasible for a satisfiable phase 1 plan")
        status = PlanStatus.NO_PLAN if phase2.status == SolveStatus.UNSAT else PlanStatus.TIMEOUT
        summary = PlanSummary(
            status=status,
            phase1_status=outcome.status.value,
            phase2_status=phase2.status.value,
        )
        return PlanResult(
            status=status, summary=summary, phase1_model=model, instance_plan=instance_plan
        )

    binding_plan = extract_binding_plan(phase2.assignment, phase2_vars)  # type: ignore[arg-type]
    target_config = assemble_target(placed, binding_plan, universe, nodes)
    if options.mode == PlanMode.INCREMENTAL:
        plan = synthesize_incremental(initial, target_config, universe, nodes)
    else:
        plan = synthesize_scratch(initial, target_config, universe, nodes)

    trace = run_plan(initial, plan, universe, nodes)
    if trace.violation is not None:
        raise InternalError(f"synthesised plan fails replay: {trace.violation.finding}")
    output = check_problem_output(trace, target, nodes)
    if not output.has_target or output.final_cost != instance_plan.cost:
        raise InternalError(
            f"replayed plan ends with cost {output.final_cost}, expected {instance_plan.cost}"
        )

    proven = outcome.status == SolveStatus.OPTIMAL and phase2.status == SolveStatus.OPTIMAL
    status = PlanStatus.OPTIMAL if proven else PlanStatus.FEASIBLE_UNPROVEN
    kept = len(set(initial.type_of) & set(trace.final.type_of))
    summary = PlanSummary(
        status=status,
        phase1_status=outcome.status.value,
        phase2_status=phase2.status.value,
        counts={name: n for name, n in instance_plan.total.items() if n},
        placements=list(instance_plan.placements),
        used_nodes=sorted(instance_plan.used_nodes, key=natural_key),
        cost=instance_plan.cost,
        actions=len(plan.actions),
        kept_instances=kept,
        metric_value=None if isinstance(options.metric, NoMetric) else phase2.objective_value,
    )
    logger.info(
        "plan ready: %s, cost %d, %d actions", status.value, instance_plan.cost, len(plan.actions)
    )
    return PlanResult(
        status=status,
        summary=summary,
        phase1_model=model,
        instance_plan=instance_plan,
        target=target_config,
        plan=plan,
        trace=trace,
    )
