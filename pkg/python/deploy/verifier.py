"""
Plan replay, output checks and an exhaustive optimality oracle.

The oracle shares nothing with the solver or the encoders: it enumerates instance
counts, binding choices and placements directly and validates its witness with
``check_correct``.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from itertools import combinations, product
from typing import Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, computed_field

from python.deploy.errors import ActionError, InputError, InternalError, OracleOverflow
from python.deploy.model import (
    Action,
    Binding,
    Configuration,
    CorrectnessReport,
    DeploymentPlan,
    NodePool,
    Universe,
    Violation,
    apply_action,
    check_correct,
    check_provisional,
    config_cost,
    describe_action,
    is_finite,
    require_well_formed,
)

logger = logging.getLogger(__name__)

DEFAULT_ORACLE_BUDGET = 2_000_000


class StepRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    action: Action
    configuration: Configuration
    report: CorrectnessReport


class ViolationAt(BaseModel):
    """First failure of a replay. ``step`` is 1-based; ``final`` marks the end-state check"""

    model_config = ConfigDict(frozen=True)

    step: int
    final: bool = False
    finding: str
    violation: Optional[Violation] = None
    error_kind: Optional[str] = None


class TraceVerdict(str, Enum):
    VALID = "valid"
    VIOLATION = "violation"


class PlanTrace(BaseModel):
    model_config = ConfigDict(frozen=True)

    initial: Configuration
    steps: tuple[StepRecord, ...] = ()
    violation: Optional[ViolationAt] = None

    @computed_field  # type: ignore[prop-decorator]
    @property
    def verdict(self) -> TraceVerdict:
        return TraceVerdict.VALID if self.violation is None else TraceVerdict.VIOLATION

    @property
    def is_valid(self) -> bool:
        return self.violation is None

    @property
    def final(self) -> Configuration:
        return self.steps[-1].configuration if self.steps else self.initial


def run_plan(
    initial: Configuration, plan: DeploymentPlan, universe: Universe, nodes: NodePool
) -> PlanTrace:
    """Replay ``plan`` from ``initial``; every failure becomes a verdict, never an exception"""
    config = initial
    steps: list[StepRecord] = []

    def stop(violation: ViolationAt) -> PlanTrace:
        logger.info("replay stopped at step %d: %s", violation.step, violation.finding)
        return PlanTrace(initial=initial, steps=tuple(steps), violation=violation)

    for index, action in enumerate(plan.actions, start=1):
        try:
            config = apply_action(config, action, universe)
            report = check_provisional(config, universe, nodes)
        except ActionError as exc:
            return stop(
                ViolationAt(
                    step=index,
                    finding=f"{describe_action(action)} rejected: {exc}",
                    error_kind=exc.kind.value,
                )
            )
        except InputError as exc:
            return stop(ViolationAt(step=index, finding=f"{describe_action(action)}: {exc}"))
        steps.append(StepRecord(index=index, action=action, configuration=config, report=report))
        blocking = report.blocking()
        if blocking:
            return stop(
                ViolationAt(
                    step=index,
                    finding=f"after {describe_action(action)}: {blocking[0].describe()}",
                    violation=blocking[0],
                )
            )

    last = len(plan.actions)
    try:
        final_report = check_correct(config, universe, nodes)
    except InputError as exc:
        return stop(ViolationAt(step=last, final=True, finding=str(exc)))
    if not final_report.is_correct:
        first = final_report.violations[0]
        return stop(
            ViolationAt(
                step=last,
                final=True,
                finding=f"final configuration: {first.describe()}",
                violation=first,
            )
        )
    return PlanTrace(initial=initial, steps=tuple(steps))


class ProblemOutput(BaseModel):
    model_config = ConfigDict(frozen=True)

    has_target: bool
    final_cost: int


def check_problem_output(trace: PlanTrace, target: str, nodes: NodePool) -> ProblemOutput:
    if trace.violation is not None:
        raise InputError(f"trace is not valid: {trace.violation.finding}")
    final = trace.final
    return ProblemOutput(
        has_target=any(t == target for t in final.type_of.values()),
        final_cost=config_cost(final, nodes),
    )


# Oracle


@dataclass(frozen=True)
class OracleResult:
    cost: int
    witness: Configuration


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.spent = 0

    def tick(self) -> None:
        self.spent += 1
        if self.spent > self.limit:
            raise OracleOverflow(f"oracle search exceeded {self.limit} steps")


def _conflict_free(counts: Mapping[str, int], universe: Universe) -> bool:
    for t in universe.types:
        if not counts[t.name]:
            continue
        for p in t.conflicts:
            for other in universe.providers_of(p):
                if other.name == t.name and counts[t.name] > 1:
                    return False
                if other.name != t.name and counts[other.name]:
                    return False
    return True


def _find_bindings(
    instances: list[tuple[str, str]], universe: Universe, budget: _Budget
) -> Optional[set[Binding]]:
    """Choose exactly ``arity`` distinct providers per required port within capacities"""
    demands = [
        (z, p, arity)
        for z, type_name in instances
        for p, arity in sorted(universe.get(type_name).requires.items())
        if arity > 0
    ]
    remaining: dict[tuple[str, str], Union[int, float]] = {}
    for z, type_name in instances:
        for p, capacity in universe.get(type_name).provides.items():
            remaining[(z, p)] = int(capacity) if is_finite(capacity) else float("inf")
    chosen: list[Binding] = []

    def search(k: int) -> bool:
        budget.tick()
        if k == len(demands):
            return True
        z, p, arity = demands[k]
        providers = [
            other for other, _ in instances if other != z and remaining.get((other, p), 0) > 0
        ]
        for group in combinations(providers, arity):
            for provider in group:
                remaining[(provider, p)] -= 1
                chosen.append(Binding(interface=p, requirer=z, provider=provider))
            if search(k + 1):
                return True
            for provider in group:
                remaining[(provider, p)] += 1
                chosen.pop()
        return False

    return set(chosen) if search(0) else None


def _cheapest_placement(
    instances: list[tuple[str, str]],
    universe: Universe,
    nodes: NodePool,
    ceiling: Optional[int],
    budget: _Budget,
) -> Optional[tuple[int, dict[str, str]]]:
    pool = list(nodes.nodes)
    resources = universe.resource_kinds()
    twin: list[int] = []
    for i, node in enumerate(pool):
        previous = [
            j
            for j in range(i)
            if pool[j].resources == node.resources and pool[j].cost == node.cost
        ]
        twin.append(previous[-1] if previous else -1)

    load = [{r: 0 for r in resources} for _ in pool]
    hosted = [0] * len(pool)
    where: list[int] = []
    best: list[Optional[tuple[int, list[int]]]] = [None]
    limit = [ceiling]

    def place(k: int, cost: int) -> None:
        budget.tick()
        if limit[0] is not None and cost >= limit[0]:
            return
        if k == len(instances):
            best[0] = (cost, list(where))
            limit[0] = cost
            return
        z, type_name = instances[k]
        demand = universe.get(type_name).resources
        start = where[k - 1] if k and instances[k - 1][1] == type_name else 0
        for i in range(start, len(pool)):
            node = pool[i]
            if not hosted[i] and twin[i] >= 0 and not hosted[twin[i]]:
                continue
            if any(load[i][r] + q > node.capacity(r) for r, q in demand.items() if q):
                continue
            for r, q in demand.items():
                if q:
                    load[i][r] += q
            hosted[i] += 1
            where.append(i)
            place(k + 1, cost + (node.cost if hosted[i] == 1 else 0))
            where.pop()
            hosted[i] -= 1
            for r, q in demand.items():
                if q:
                    load[i][r] -= q

    place(0, 0)
    if best[0] is None:
        return None
    cost, indices = best[0]
    return cost, {instances[k][0]: pool[i].name for k, i in enumerate(indices)}


def brute_force_oracle(
    universe: Universe,
    nodes: NodePool,
    target: str,
    cap: int,
    bounds: Optional[Mapping[str, int]] = None,
    budget: int = DEFAULT_ORACLE_BUDGET,
) -> Optional[OracleResult]:
    """Cheapest correct configuration with at most ``cap`` instances containing ``target``.

    Returns None when no such configuration exists. Raises OracleOverflow rather than
    answering once ``budget`` search steps are spent.
    """
    require_well_formed(universe)
    if not universe.has(target):
        raise InputError(f"target type {target!r} is not in the universe")
    names = universe.names()
    limits = [min(cap, (bounds or {}).get(name, cap)) for name in names]
    steps = _Budget(budget)

    best: Optional[OracleResult] = None
    for vector in product(*(range(limit + 1) for limit in limits)):
        if sum(vector) > cap:
            continue
        counts = dict(zip(names, vector))
        if counts[target] < 1 or not _conflict_free(counts, universe):
            continue
        instances = [
            (f"{name}#{k}", name) for name in names for k in range(1, counts[name] + 1)
        ]
        bindings = _find_bindings(instances, universe, steps)
        if bindings is None:
            continue
        ceiling = best.cost if best is not None else None
        placed = _cheapest_placement(instances, universe, nodes, ceiling, steps)
        if placed is None:
            continue
        cost, node_of = placed
        witness = Configuration(
            type_of=dict(instances), node_of=node_of, bindings=frozenset(bindings)
        )
        best = OracleResult(cost=cost, witness=witness)

    if best is not None and not check_correct(best.witness, universe, nodes).is_correct:
        raise InternalError("oracle witness is not a correct configuration")
    logger.debug("oracle explored %d steps, best %s", steps.spent, best and best.cost)
    return best

