"""
Phase 2: name the instances Phase 1 decided on and choose their bindings.

Every binding indicator is a 0/1 variable ``b(p,z1,z2)``; the arities of the instances'
types bound the in- and out-degrees per port. An optional metric ranks the feasible
binding sets.
"""

import logging
from dataclasses import dataclass, field
from typing import Annotated, Iterable, Literal, Mapping, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, field_serializer

from python.deploy.errors import InputError, InternalError
from python.deploy.model import Binding, Universe, interfaces_of, is_finite, natural_key
from python.deploy.phase1 import InstancePlan
from python.deploy.solver import Model, Relation, Sense, Var

logger = logging.getLogger(__name__)


class PlacedInstance(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    type: str
    node: str


class BindingPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    bindings: frozenset[Binding] = Field(default_factory=frozenset)

    @field_serializer("bindings")
    def serialize_bindings(self, bindings: frozenset[Binding]) -> list[dict[str, str]]:
        return [b.model_dump() for b in sorted(bindings, key=Binding.sort_key)]

    def on(self, interface: str) -> list[Binding]:
        return sorted((b for b in self.bindings if b.interface == interface), key=Binding.sort_key)


# Metrics


class NoMetric(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["none"] = "none"


class MinimizeCrossNode(BaseModel):
    """Prefer bindings between instances hosted on the same node"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["min-cross"] = "min-cross"


class MaximizeBindings(BaseModel):
    """Bind as many instances as the capacities allow"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["max-bind"] = "max-bind"


class BindingWeight(BaseModel):
    model_config = ConfigDict(frozen=True)

    interface: str
    requirer: str
    provider: str
    weight: int


class WeightedMetric(BaseModel):
    """Linear form over bindings, weighted per (interface, requirer type, provider type).

    ``saturate`` lists interfaces whose every provider instance takes as many bindings
    as its capacity and the candidate requirers allow; ``floor`` is a lower bound on the
    weighted sum.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["weighted"] = "weighted"
    weights: tuple[BindingWeight, ...] = ()
    sense: Sense = Sense.MINIMIZE
    saturate: frozenset[str] = Field(default_factory=frozenset)
    floor: Optional[int] = None

    @field_serializer("saturate")
    def serialize_saturate(self, saturate: frozenset[str]) -> list[str]:
        return sorted(saturate)

    def weight_of(self, interface: str, requirer: str, provider: str) -> int:
        for w in self.weights:
            if (w.interface, w.requirer, w.provider) == (interface, requirer, provider):
                return w.weight
        return 0


BindingMetric = Annotated[
    Union[NoMetric, MinimizeCrossNode, MaximizeBindings, WeightedMetric],
    Field(discriminator="kind"),
]


@dataclass
class Phase2Variables:
    b: dict[tuple[str, str, str], Var] = field(default_factory=dict)
    weights: dict[tuple[str, str, str], int] = field(default_factory=dict)


def materialize_instances(plan: InstancePlan) -> list[PlacedInstance]:
    """Number the instances of each type ``T#1..T#n`` following the node order.

    Nodes are ordered by natural name order, so embedded numbers compare numerically:
    instances on ``large#2`` are numbered before those on ``large#10``. Types keep the order
    of ``plan.total``.
    """
    instances: list[PlacedInstance] = []
    for type_name in plan.total:
        placements = sorted(
            (p for p in plan.placements if p.type == type_name), key=lambda p: natural_key(p.node)
        )
        k = 0
        for p in placements:
            for _ in range(p.count):
                k += 1
                instances.append(PlacedInstance(id=f"{type_name}#{k}", type=type_name, node=p.node))
    return instances


def _candidate_triples(
    instances: Sequence[PlacedInstance], universe: Universe
) -> list[tuple[str, str, str]]:
    triples = []
    for requirer in instances:
        for interface in sorted(universe.get(requirer.type).requires):
            for provider in instances:
                if provider.id != requirer.id and interface in universe.get(provider.type).provides:
                    triples.append((interface, requirer.id, provider.id))
    return triples


def _metric_weights(
    metric: Union[NoMetric, MinimizeCrossNode, MaximizeBindings, WeightedMetric],
    triple: tuple[str, str, str],
    by_id: Mapping[str, PlacedInstance],
) -> int:
    interface, requirer, provider = triple
    if isinstance(metric, MinimizeCrossNode):
        return int(by_id[requirer].node != by_id[provider].node)
    if isinstance(metric, MaximizeBindings):
        return 1
    if isinstance(metric, WeightedMetric):
        return metric.weight_of(interface, by_id[requirer].type, by_id[provider].type)
    return 0


def encode_phase2(
    instances: Sequence[PlacedInstance],
    universe: Universe,
    metric: Optional[Union[NoMetric, MinimizeCrossNode, MaximizeBindings, WeightedMetric]] = None,
    *,
    pinned: Iterable[Binding] = (),
    closed: Iterable[tuple[str, str]] = (),
) -> tuple[Model, Phase2Variables]:
    """Build the per-instance binding model.

    ``pinned`` bindings are forced present. For each ``(requirer, interface)`` in
    ``closed`` only the pinned bindings of that port may exist.
    """
    metric = metric or NoMetric()
    if isinstance(metric, WeightedMetric):
        known = interfaces_of(universe)
        stray = sorted({w.interface for w in metric.weights} - known)
        if stray:
            raise InputError(f"weighted metric references unknown interfaces: {stray}")

    by_id = {inst.id: inst for inst in instances}
    model = Model()
    variables = Phase2Variables()
    for triple in _candidate_triples(instances, universe):
        interface, requirer, provider = triple
        variables.b[triple] = model.new_var(f"b({interface},{requirer},{provider})", 0, 1)
        variables.weights[triple] = _metric_weights(metric, triple, by_id)

    # provided capacity per instance and port
    for provider in instances:
        t = universe.get(provider.type)
        for interface, capacity in sorted(t.provides.items()):
            incoming = [
                (1, var)
                for (p, _, z), var in variables.b.items()
                if p == interface and z == provider.id
            ]
            if is_finite(capacity) and len(incoming) > int(capacity):
                model.add_linear(incoming, Relation.LE, int(capacity))
            if isinstance(metric, WeightedMetric) and interface in metric.saturate:
                limit = len(incoming)
                if is_finite(capacity):
                    limit = min(int(capacity), limit)
                model.add_linear(incoming, Relation.EQ, limit)

    # required arities per instance and port
    for requirer in instances:
        for interface, arity in sorted(universe.get(requirer.type).requires.items()):
            if arity == 0:
                continue
            outgoing = [
                (1, var)
                for (p, z, _), var in variables.b.items()
                if p == interface and z == requirer.id
            ]
            model.add_linear(outgoing, Relation.GE, arity)

    pinned = set(pinned)
    for binding in pinned:
        triple = (binding.interface, binding.requirer, binding.provider)
        if triple not in variables.b:
            raise InputError(f"pinned binding {triple} is not a candidate binding")
        model.add_linear([(1, variables.b[triple])], Relation.GE, 1)
    for requirer_id, interface in closed:
        for (p, z, provider), var in variables.b.items():
            if p == interface and z == requirer_id:
                if Binding(interface=p, requirer=z, provider=provider) not in pinned:
                    model.add_linear([(1, var)], Relation.LE, 0)

    terms = [(variables.weights[t], var) for t, var in variables.b.items() if variables.weights[t]]
    if isinstance(metric, WeightedMetric):
        if metric.floor is not None:
            model.add_linear(terms, Relation.GE, metric.floor)
        if metric.sense == Sense.MINIMIZE:
            model.minimize(terms)
        else:
            model.maximize(terms)
    elif isinstance(metric, MinimizeCrossNode):
        model.minimize(terms)
    elif isinstance(metric, MaximizeBindings):
        model.maximize(terms)

    logger.debug(
        "phase 2 model: %d binding variables over %d instances (metric %s)",
        len(variables.b),
        len(instances),
        metric.kind,
    )
    return model, variables


def extract_binding_plan(assignment: Mapping[Var, int], variables: Phase2Variables) -> BindingPlan:
    bindings = set()
    for (interface, requirer, provider), var in variables.b.items():
        if assignment[var] == 1:
            if requirer == provider:
                raise InternalError(f"self binding of {requirer} on {interface}")
            bindings.add(Binding(interface=interface, requirer=requirer, provider=provider))
        elif assignment[var] != 0:
            raise InternalError(f"binding indicator {var.name} = {assignment[var]}")
    return BindingPlan(bindings=frozenset(bindings))


def weighted_value(
    plan: BindingPlan,
    instances: Sequence[PlacedInstance],
    metric: Union[NoMetric, MinimizeCrossNode, MaximizeBindings, WeightedMetric],
) -> int:
    """Metric value of a binding plan, recomputed from the bindings"""
    by_id = {inst.id: inst for inst in instances}
    return sum(
        _metric_weights(metric, (b.interface, b.requirer, b.provider), by_id) for b in plan.bindings
    )
