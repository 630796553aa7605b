"""
Phase 1: how many instances of each type to create, on which nodes, at minimal node cost.

The encoding works on aggregate counts per type. Per-instance bindings are left to
Phase 2, which only needs Phase 1 to guarantee there is enough provided capacity.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from python.deploy.errors import BoundsError, InputError, InternalError
from python.deploy.model import (
    NodePool,
    Universe,
    is_finite,
    natural_key,
    require_well_formed,
)
from python.deploy.solver import GuardSense, LinearConstraint, Model, Relation, Var

logger = logging.getLogger(__name__)


class InstanceBounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    bounds: dict[str, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def non_negative(self) -> "InstanceBounds":
        negative = sorted(name for name, bound in self.bounds.items() if bound < 0)
        if negative:
            raise ValueError(f"instance bounds must be >= 0: {negative}")
        return self

    def of(self, type_name: str) -> int:
        try:
            return self.bounds[type_name]
        except KeyError:
            raise BoundsError(f"no instance bound for type {type_name!r}") from None


class Placement(BaseModel):
    model_config = ConfigDict(frozen=True)

    type: str
    node: str
    count: int = Field(ge=1)


class AggregateBinding(BaseModel):
    model_config = ConfigDict(frozen=True)

    interface: str
    requirer: str
    provider: str
    count: int = Field(ge=0)


class InstancePlan(BaseModel):
    """Decoded Phase 1 solution: counts, placements, aggregate bindings and cost"""

    model_config = ConfigDict(frozen=True)

    total: dict[str, int] = Field(default_factory=dict)
    placements: tuple[Placement, ...] = ()
    aggregate_bindings: tuple[AggregateBinding, ...] = ()
    used_nodes: frozenset[str] = Field(default_factory=frozenset)
    cost: int = Field(ge=0, default=0)

    @model_validator(mode="after")
    def check_coherence(self) -> "InstancePlan":
        placed: dict[str, int] = {}
        for p in self.placements:
            placed[p.type] = placed.get(p.type, 0) + p.count
        for type_name in set(self.total) | set(placed):
            if self.total.get(type_name, 0) != placed.get(type_name, 0):
                raise ValueError(
                    f"type {type_name}: total {self.total.get(type_name, 0)} "
                    f"!= placed {placed.get(type_name, 0)}"
                )
        hosting = {p.node for p in self.placements}
        if hosting != set(self.used_nodes):
            raise ValueError("used nodes must be exactly the nodes with placed instances")
        return self

    def count(self, type_name: str) -> int:
        return self.total.get(type_name, 0)

    def placement(self, type_name: str, node: str) -> int:
        for p in self.placements:
            if p.type == type_name and p.node == node:
                return p.count
        return 0


@dataclass
class Phase1Variables:
    """Variable dictionary of a Phase 1 model"""

    inst: dict[str, Var] = field(default_factory=dict)
    placed: dict[tuple[str, str], Var] = field(default_factory=dict)
    used: dict[str, Var] = field(default_factory=dict)
    bind: dict[tuple[str, str, str], Var] = field(default_factory=dict)
    kept: dict[tuple[str, str], Var] = field(default_factory=dict)
    cost: Optional[Var] = None
    node_costs: dict[str, int] = field(default_factory=dict)


def _per_node_capacity(demand: Mapping[str, int], capacity: Mapping[str, int]) -> Optional[int]:
    """Instances fitting on one node, limited by the most constraining resource"""
    limits = [capacity.get(r, 0) // q for r, q in demand.items() if q > 0]
    return min(limits) if limits else None


def derive_bounds(
    universe: Universe, nodes: NodePool, override: Optional[Mapping[str, int]] = None
) -> InstanceBounds:
    override = dict(override or {})
    unknown = sorted(name for name in override if not universe.has(name))
    if unknown:
        raise InputError(f"bound override for unknown types: {unknown}")

    bounds: dict[str, int] = {}
    for t in universe.types:
        if t.name in override:
            bounds[t.name] = override[t.name]
            continue
        per_node = [_per_node_capacity(t.resources, node.resources) for node in nodes.nodes]
        if any(limit is None for limit in per_node) or not any(q > 0 for q in t.resources.values()):
            raise BoundsError(
                f"type {t.name} consumes no resources, so its instance count is unbounded; "
                f"pass an explicit bound (--bound {t.name}=N)"
            )
        bounds[t.name] = sum(limit for limit in per_node if limit is not None)
    logger.debug("instance bounds: %s", bounds)
    return InstanceBounds(bounds=bounds)


def _cheapest_per_unit(nodes: NodePool, resource: str) -> Optional[Fraction]:
    ratios = [
        Fraction(n.cost, n.capacity(resource)) for n in nodes.nodes if n.capacity(resource) > 0
    ]
    return min(ratios) if ratios else None


def encode_phase1(
    universe: Universe,
    nodes: NodePool,
    target: str,
    bounds: InstanceBounds,
    *,
    retain: Optional[Mapping[tuple[str, str], int]] = None,
    cost_cap: Optional[int] = None,
) -> tuple[Model, Phase1Variables]:
    """Build the Phase 1 model minimising the cost of used nodes.

    With ``retain`` (instance counts per (type, node) of an existing configuration) and
    ``cost_cap``, the model instead maximises how many of those placements survive
    among solutions costing at most ``cost_cap``.
    """
    require_well_formed(universe)
    if not universe.has(target):
        raise InputError(f"target type {target!r} is not in the universe")

    model = Model()
    variables = Phase1Variables(node_costs={n.name: n.cost for n in nodes.nodes})
    node_names = nodes.names()

    for t in universe.types:
        variables.inst[t.name] = model.new_var(f"inst({t.name})", 0, bounds.of(t.name))
    for name in node_names:
        variables.used[name] = model.new_var(f"used({name})", 0, 1)
    for t in universe.types:
        for name in node_names:
            fit = _per_node_capacity(t.resources, nodes.get(name).resources)
            hi = bounds.of(t.name) if fit is None else min(fit, bounds.of(t.name))
            variables.placed[(t.name, name)] = model.new_var(f"inst({t.name},{name})", 0, hi)

    for requirer in universe.types:
        for interface, arity in sorted(requirer.requires.items()):
            for provider in universe.providers_of(interface):
                same = provider.name == requirer.name
                pairs = bounds.of(requirer.name) * (bounds.of(provider.name) - (1 if same else 0))
                hi = min(arity * bounds.of(requirer.name), max(pairs, 0))
                capacity = provider.provides[interface]
                if is_finite(capacity):
                    hi = min(hi, int(capacity) * bounds.of(provider.name))
                key = (interface, requirer.name, provider.name)
                variables.bind[key] = model.new_var(
                    f"bind({interface},{requirer.name},{provider.name})", 0, hi
                )

    total_cost = sum(n.cost for n in nodes.nodes)
    variables.cost = model.new_var("cost", 0, total_cost)

    inst = variables.inst
    # enough outgoing bindings for every required port
    for requirer in universe.types:
        for interface, arity in sorted(requirer.requires.items()):
            if arity == 0:
                continue
            terms = [
                (1, var)
                for (p, t, _), var in variables.bind.items()
                if p == interface and t == requirer.name
            ]
            model.add_linear(terms + [(-arity, inst[requirer.name])], Relation.GE, 0)

    # incoming bindings within the provided capacity
    for provider in universe.types:
        for interface, capacity in sorted(provider.provides.items()):
            incoming = [
                (1, var)
                for (p, _, t), var in variables.bind.items()
                if p == interface and t == provider.name
            ]
            if not incoming:
                continue
            if is_finite(capacity):
                model.add_linear(
                    [(int(capacity), inst[provider.name])] + [(-1, v) for _, v in incoming],
                    Relation.GE,
                    0,
                )
            else:
                model.add_implication(
                    inst[provider.name],
                    GuardSense.ZERO,
                    LinearConstraint.build(incoming, Relation.LE, 0),
                )

    # the target is deployed
    model.add_linear([(1, inst[target])], Relation.GE, 1)

    # conflicts
    excluded: set[tuple[str, str]] = set()
    for t in universe.types:
        for interface in sorted(t.conflicts):
            for provider in universe.providers_of(interface):
                if provider.name == t.name:
                    model.add_linear([(1, inst[t.name])], Relation.LE, 1)
                elif (t.name, provider.name) not in excluded:
                    excluded.add((t.name, provider.name))
                    model.add_implication(
                        inst[t.name],
                        GuardSense.POSITIVE,
                        LinearConstraint.build([(1, inst[provider.name])], Relation.LE, 0),
                    )

    # bindings need distinct instance pairs
    for (_, requirer_name, provider_name), var in variables.bind.items():
        if requirer_name == provider_name:
            model.add_product_bound(var, inst[requirer_name], inst[requirer_name], -1)
        else:
            model.add_product_bound(var, inst[requirer_name], inst[provider_name], 0)

    # totals are the sum of placements
    for t in universe.types:
        model.add_linear(
            [(1, inst[t.name])] + [(-1, variables.placed[(t.name, o)]) for o in node_names],
            Relation.EQ,
            0,
        )

    # node capacities, zero unless the node is used
    resources = universe.resource_kinds()
    for o in node_names:
        node = nodes.get(o)
        for r in resources:
            terms = [
                (t.demand(r), variables.placed[(t.name, o)])
                for t in universe.types
                if t.demand(r) > 0
            ]
            model.add_linear(terms + [(-node.capacity(r), variables.used[o])], Relation.LE, 0)

    # a node is used iff it hosts something
    for o in node_names:
        hosted = [(1, variables.placed[(t.name, o)]) for t in universe.types]
        model.add_implication(
            variables.used[o], GuardSense.ZERO, LinearConstraint.build(hosted, Relation.LE, 0)
        )
        model.add_implication(
            variables.used[o], GuardSense.POSITIVE, LinearConstraint.build(hosted, Relation.GE, 1)
        )

    # implied aggregates: used capacity covers demand; cost covers the cheapest price of demand
    for r in resources:
        demand = [(-t.demand(r), inst[t.name]) for t in universe.types if t.demand(r) > 0]
        supply = [(nodes.get(o).capacity(r), variables.used[o]) for o in node_names]
        model.add_linear(supply + demand, Relation.GE, 0)
        rate = _cheapest_per_unit(nodes, r)
        if rate is not None:
            model.add_linear(
                [(rate.denominator, variables.cost)]
                + [(rate.numerator * coef, var) for coef, var in demand],
                Relation.GE,
                0,
            )

    # cost of the used nodes
    model.add_linear(
        [(1, variables.cost)] + [(-nodes.get(o).cost, variables.used[o]) for o in node_names],
        Relation.EQ,
        0,
    )

    if retain:
        if cost_cap is not None:
            model.add_linear([(1, variables.cost)], Relation.LE, cost_cap)
        for (type_name, node_name), count in sorted(retain.items()):
            if (type_name, node_name) not in variables.placed or count <= 0:
                continue
            kept = model.new_var(f"kept({type_name},{node_name})", 0, count)
            variables.kept[(type_name, node_name)] = kept
            model.add_linear(
                [(1, kept), (-1, variables.placed[(type_name, node_name)])], Relation.LE, 0
            )
        model.maximize([(1, var) for var in variables.kept.values()])
    else:
        model.minimize([(1, variables.cost)])

    logger.debug(
        "phase 1 model: %d variables, %d linear, %d implications, %d products",
        len(model.variables),
        len(model.linear),
        len(model.implications),
        len(model.products),
    )
    return model, variables


def extract_instance_plan(
    assignment: Mapping[Var, int], variables: Phase1Variables
) -> InstancePlan:
    total = {name: assignment[var] for name, var in variables.inst.items()}
    placements = tuple(
        Placement(type=t, node=o, count=assignment[var])
        for (t, o), var in sorted(
            variables.placed.items(), key=lambda item: (item[0][0], natural_key(item[0][1]))
        )
        if assignment[var] > 0
    )
    aggregate = tuple(
        AggregateBinding(interface=p, requirer=t, provider=u, count=assignment[var])
        for (p, t, u), var in sorted(variables.bind.items())
    )
    used = frozenset(p.node for p in placements)
    flagged = {o for o, var in variables.used.items() if assignment[var] > 0}
    if flagged != used:
        raise InternalError(f"used-node flags {sorted(flagged)} disagree with placements")
    cost = sum(variables.node_costs[o] for o in used)
    if variables.cost is not None and assignment[variables.cost] != cost:
        raise InternalError(f"cost variable {assignment[variables.cost]} != node cost {cost}")
    try:
        return InstancePlan(
            total=total,
            placements=placements,
            aggregate_bindings=aggregate,
            used_nodes=used,
            cost=cost,
        )
    except ValueError as exc:
        raise InternalError(f"incoherent phase 1 assignment: {exc}") from exc


def check_instance_plan(
    plan: InstancePlan,
    universe: Universe,
    nodes: NodePool,
    target: str,
    bounds: Optional[InstanceBounds] = None,
) -> list[str]:
    """Re-check the Phase 1 constraints arithmetically; returns the broken ones"""
    problems: list[str] = []
    count = plan.count
    aggregate = {(a.interface, a.requirer, a.provider): a.count for a in plan.aggregate_bindings}

    for (p, t, u), n in aggregate.items():
        if n and not (p in universe.get(t).requires and p in universe.get(u).provides):
            problems.append(f"bindings on {p} from {t} to {u} on ports they do not have")
        pairs = count(t) * (count(u) - (1 if t == u else 0))
        if n > pairs:
            problems.append(f"{n} bindings on {p} from {t} to {u} exceed {pairs} pairs")

    for t in universe.types:
        for p, arity in t.requires.items():
            outgoing = sum(n for (q, r, _), n in aggregate.items() if q == p and r == t.name)
            if outgoing < arity * count(t.name):
                problems.append(f"{t.name} has {outgoing} bindings on {p}")
        for p, capacity in t.provides.items():
            incoming = sum(n for (q, _, u), n in aggregate.items() if q == p and u == t.name)
            if is_finite(capacity) and incoming > int(capacity) * count(t.name):
                problems.append(f"{t.name} receives {incoming} bindings on {p}")
            if count(t.name) == 0 and incoming:
                problems.append(f"{incoming} bindings on {p} to absent {t.name}")
        for p in t.conflicts:
            for other in universe.providers_of(p):
                if other.name == t.name and count(t.name) > 1:
                    problems.append(f"{count(t.name)} instances of self-conflicting {t.name}")
                if other.name != t.name and count(t.name) and count(other.name):
                    problems.append(f"{t.name} coexists with {other.name} providing {p}")
        if bounds is not None and count(t.name) > bounds.of(t.name):
            problems.append(f"{count(t.name)} instances of {t.name} exceed its bound")

    if count(target) < 1:
        problems.append(f"no instance of {target}")

    for o in plan.used_nodes:
        node = nodes.get(o)
        for r in universe.resource_kinds():
            demand = sum(
                p.count * universe.get(p.type).demand(r) for p in plan.placements if p.node == o
            )
            if demand > node.capacity(r):
                problems.append(f"node {o} needs {demand} {r}")
    if plan.cost != sum(nodes.get(o).cost for o in plan.used_nodes):
        problems.append("cost differs from the used nodes")
    return problems
