"""
Formal data model of microservice deployments.

Microservice types, nodes, configurations and the four reconfiguration actions,
together with the well-formedness, correctness and cost checks defined over them.
Every value is a frozen Pydantic model; the operations never mutate their inputs.
"""

import logging
import re
from collections import Counter, defaultdict
from enum import Enum
from typing import Annotated, Literal, Optional, Union

import networkx as nx
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    StringConstraints,
    computed_field,
    field_serializer,
    field_validator,
    model_validator,
)

from python.deploy.errors import ActionError, ActionErrorKind, InputError

logger = logging.getLogger(__name__)

# Names appear verbatim in the solver export format: no whitespace, "*" or ":"
Identifier = Annotated[str, StringConstraints(min_length=1, pattern=r"^[^\s*:]+$")]

INFINITE = "inf"

ProvidedArity = Union[Annotated[int, Field(ge=1)], Literal["inf"]]
StrongArity = Annotated[int, Field(ge=1)]
WeakArity = Annotated[int, Field(ge=0)]
Quantity = Annotated[int, Field(ge=0)]


def natural_key(name: str) -> tuple[Union[str, int], ...]:
    """Sort key ordering embedded numbers numerically (``large#2`` < ``large#10``)"""
    parts = re.split(r"(\d+)", name)
    return tuple(int(part) if index % 2 else part for index, part in enumerate(parts))


def is_finite(arity: Union[int, str]) -> bool:
    return arity != INFINITE


class MicroserviceType(BaseModel):
    """A microservice template: provided and required ports, conflicts and resource needs"""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    name: Identifier
    provides: dict[Identifier, ProvidedArity] = Field(default_factory=dict)
    strong_requires: dict[Identifier, StrongArity] = Field(default_factory=dict, alias="strong")
    weak_requires: dict[Identifier, WeakArity] = Field(default_factory=dict, alias="weak")
    conflicts: frozenset[Identifier] = Field(default_factory=frozenset)
    resources: dict[Identifier, Quantity] = Field(default_factory=dict)

    @field_validator("provides", mode="before")
    @classmethod
    def default_provided_arity(cls, value: object) -> object:
        # omitted arities of provided ports are unbounded
        if isinstance(value, (list, tuple, set, frozenset)):
            return {name: INFINITE for name in value}
        if isinstance(value, dict):
            return {name: INFINITE if arity is None else arity for name, arity in value.items()}
        return value

    @field_validator("strong_requires", "weak_requires", mode="before")
    @classmethod
    def default_required_arity(cls, value: object) -> object:
        if isinstance(value, (list, tuple, set, frozenset)):
            return {name: 1 for name in value}
        if isinstance(value, dict):
            return {name: 1 if arity is None else arity for name, arity in value.items()}
        return value

    @model_validator(mode="after")
    def check_disjoint_ports(self) -> "MicroserviceType":
        strong = set(self.strong_requires)
        weak = set(self.weak_requires)
        overlaps = (strong & weak) | (strong & self.conflicts) | (weak & self.conflicts)
        if overlaps:
            raise ValueError(
                f"type {self.name}: strong requirements, weak requirements and conflicts "
                f"must be disjoint (shared: {sorted(overlaps)})"
            )
        return self

    @field_serializer("conflicts")
    def serialize_conflicts(self, conflicts: frozenset[str]) -> list[str]:
        return sorted(conflicts)

    @property
    def requires(self) -> dict[str, int]:
        return {**self.strong_requires, **self.weak_requires}

    def demand(self, resource: str) -> int:
        return self.resources.get(resource, 0)

    def interfaces(self) -> set[str]:
        return (
            set(self.provides)
            | set(self.strong_requires)
            | set(self.weak_requires)
            | set(self.conflicts)
        )


class Node(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: Identifier
    resources: dict[Identifier, Quantity] = Field(default_factory=dict)
    cost: Quantity = 0

    def capacity(self, resource: str) -> int:
        return self.resources.get(resource, 0)


class NodePool(BaseModel):
    model_config = ConfigDict(frozen=True)

    nodes: tuple[Node, ...] = ()

    _by_name: dict[str, Node] = PrivateAttr(default_factory=dict)

    @field_validator("nodes")
    @classmethod
    def unique_names(cls, nodes: tuple[Node, ...]) -> tuple[Node, ...]:
        seen = Counter(node.name for node in nodes)
        duplicates = sorted(name for name, count in seen.items() if count > 1)
        if duplicates:
            raise ValueError(f"duplicate node names: {duplicates}")
        return nodes

    def model_post_init(self, __context: object) -> None:
        self._by_name = {node.name: node for node in self.nodes}

    def get(self, name: str) -> Node:
        try:
            return self._by_name[name]
        except KeyError:
            raise InputError(f"unknown node {name!r}") from None

    def has(self, name: str) -> bool:
        return name in self._by_name

    def names(self) -> list[str]:
        return sorted(self._by_name, key=natural_key)


class Universe(BaseModel):
    model_config = ConfigDict(frozen=True)

    types: tuple[MicroserviceType, ...] = ()

    _by_name: dict[str, MicroserviceType] = PrivateAttr(default_factory=dict)

    @field_validator("types")
    @classmethod
    def unique_names(cls, types: tuple[MicroserviceType, ...]) -> tuple[MicroserviceType, ...]:
        seen = Counter(t.name for t in types)
        duplicates = sorted(name for name, count in seen.items() if count > 1)
        if duplicates:
            raise ValueError(f"duplicate microservice type names: {duplicates}")
        return types

    def model_post_init(self, __context: object) -> None:
        self._by_name = {t.name: t for t in self.types}

    def get(self, name: str) -> MicroserviceType:
        try:
            return self._by_name[name]
        except KeyError:
            raise InputError(f"unknown microservice type {name!r}") from None

    def has(self, name: str) -> bool:
        return name in self._by_name

    def names(self) -> list[str]:
        return [t.name for t in self.types]

    def resource_kinds(self) -> list[str]:
        return sorted({r for t in self.types for r, q in t.resources.items() if q > 0})

    def providers_of(self, interface: str) -> list[MicroserviceType]:
        return [t for t in self.types if interface in t.provides]


class Binding(BaseModel):
    model_config = ConfigDict(frozen=True)

    interface: Identifier
    requirer: Identifier
    provider: Identifier

    def sort_key(self) -> tuple[object, ...]:
        return (self.interface, natural_key(self.requirer), natural_key(self.provider))


class Configuration(BaseModel):
    """The runtime state: instances, their types and hosting nodes, and their bindings"""

    model_config = ConfigDict(frozen=True)

    type_of: dict[Identifier, Identifier] = Field(default_factory=dict)
    node_of: dict[Identifier, Identifier] = Field(default_factory=dict)
    bindings: frozenset[Binding] = Field(default_factory=frozenset)

    @model_validator(mode="after")
    def check_structure(self) -> "Configuration":
        if set(self.type_of) != set(self.node_of):
            raise ValueError("every instance needs exactly one type and one node")
        for binding in self.bindings:
            if binding.requirer not in self.type_of or binding.provider not in self.type_of:
                raise ValueError(f"binding {binding.sort_key()} references an unknown instance")
            if binding.requirer == binding.provider:
                raise ValueError(f"instance {binding.requirer} cannot bind to itself")
        return self

    @field_serializer("bindings")
    def serialize_bindings(self, bindings: frozenset[Binding]) -> list[dict[str, str]]:
        return [b.model_dump() for b in sorted(bindings, key=Binding.sort_key)]

    @classmethod
    def empty(cls) -> "Configuration":
        return cls()

    @property
    def instances(self) -> list[str]:
        return sorted(self.type_of, key=natural_key)

    def sorted_bindings(self) -> list[Binding]:
        return sorted(self.bindings, key=Binding.sort_key)

    def count_of(self, type_name: str) -> int:
        return sum(1 for t in self.type_of.values() if t == type_name)


# Actions


class Bind(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["bind"] = "bind"
    interface: Identifier
    requirer: Identifier
    provider: Identifier


class Unbind(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["unbind"] = "unbind"
    interface: Identifier
    requirer: Identifier
    provider: Identifier


class New(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["new"] = "new"
    id: Identifier
    type: Identifier
    node: Identifier
    strong_bindings: dict[Identifier, frozenset[Identifier]] = Field(default_factory=dict)

    @field_serializer("strong_bindings")
    def serialize_strong_bindings(
        self, strong_bindings: dict[str, frozenset[str]]
    ) -> dict[str, list[str]]:
        return {
            p: sorted(providers, key=natural_key)
            for p, providers in sorted(strong_bindings.items())
        }


class Del(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["del"] = "del"
    id: Identifier


Action = Annotated[Union[Bind, Unbind, New, Del], Field(discriminator="kind")]


class DeploymentPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    actions: tuple[Action, ...] = ()

    def count(self, kind: str) -> int:
        return sum(1 for action in self.actions if action.kind == kind)


def describe_action(action: Union[Bind, Unbind, New, Del]) -> str:
    if isinstance(action, (Bind, Unbind)):
        return f"{action.kind}({action.interface}, {action.requirer}, {action.provider})"
    if isinstance(action, New):
        strong = ", ".join(
            f"{p} -> {{{', '.join(sorted(zs, key=natural_key))}}}"
            for p, zs in sorted(action.strong_bindings.items())
        )
        return f"new({action.id}, {action.type}, {action.node}, {{{strong}}})"
    return f"del({action.id})"


# Correctness reports


class ViolationKind(str, Enum):
    NODE_OVERLOAD = "node_overload"
    UNMET_STRONG = "unmet_strong"
    CAPACITY_EXCEEDED = "capacity_exceeded"
    UNMET_WEAK = "unmet_weak"
    CONFLICT = "conflict"


FINAL_ONLY_KINDS = frozenset({ViolationKind.UNMET_WEAK, ViolationKind.CONFLICT})


class Violation(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ViolationKind
    instance: Optional[str] = None
    node: Optional[str] = None
    interface: Optional[str] = None
    resource: Optional[str] = None
    other: Optional[str] = None
    required: Optional[int] = None
    found: Optional[int] = None

    def describe(self) -> str:
        if self.kind == ViolationKind.NODE_OVERLOAD:
            return (
                f"node {self.node} overloaded on {self.resource}: "
                f"demand {self.required} > capacity {self.found}"
            )
        if self.kind == ViolationKind.CAPACITY_EXCEEDED:
            return (
                f"{self.instance} provides {self.interface} to {self.found} requirers, "
                f"capacity {self.required}"
            )
        if self.kind == ViolationKind.CONFLICT:
            return f"{self.instance} conflicts on {self.interface} with provider {self.other}"
        strength = "strong" if self.kind == ViolationKind.UNMET_STRONG else "weak"
        return (
            f"{self.instance} {strength} requirement {self.interface} needs "
            f"{self.required} providers, has {self.found}"
        )


class Verdict(str, Enum):
    CORRECT = "correct"
    PROVISIONALLY_CORRECT_ONLY = "provisionally_correct_only"
    INVALID = "invalid"


class CorrectnessReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    violations: tuple[Violation, ...] = ()

    @computed_field  # type: ignore[prop-decorator]
    @property
    def verdict(self) -> Verdict:
        if not self.violations:
            return Verdict.CORRECT
        if all(v.kind in FINAL_ONLY_KINDS for v in self.violations):
            return Verdict.PROVISIONALLY_CORRECT_ONLY
        return Verdict.INVALID

    @property
    def is_correct(self) -> bool:
        return self.verdict == Verdict.CORRECT

    @property
    def is_provisionally_correct(self) -> bool:
        return self.verdict != Verdict.INVALID

    def blocking(self) -> list[Violation]:
        """Violations that break provisional correctness"""
        return [v for v in self.violations if v.kind not in FINAL_ONLY_KINDS]


# Universe operations


def interfaces_of(universe: Universe) -> frozenset[str]:
    names: set[str] = set()
    for t in universe.types:
        names |= t.interfaces()
    return frozenset(names)


def strong_dependency_graph(universe: Universe) -> "nx.DiGraph[str]":
    """Edge T -> T' whenever T strongly requires a port that T' provides"""
    graph: nx.DiGraph[str] = nx.DiGraph()
    graph.add_nodes_from(universe.names())
    for requirer in universe.types:
        for interface in requirer.strong_requires:
            for provider in universe.providers_of(interface):
                graph.add_edge(requirer.name, provider.name, interface=interface)
    return graph


def check_universe(universe: Universe) -> Optional[list[str]]:
    """Return None for a well-formed universe, else one strong dependency cycle"""
    graph = strong_dependency_graph(universe)
    try:
        edges = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        return None
    cycle = [edge[0] for edge in edges]
    logger.debug("strong dependency cycle: %s", cycle)
    return cycle


def require_well_formed(universe: Universe) -> None:
    cycle = check_universe(universe)
    if cycle is not None:
        raise InputError(f"universe is not well formed, strong cycle: {' -> '.join(cycle)}")


def buildup_rank(universe: Universe) -> dict[str, int]:
    """Position of each type in a provider-first order of the strong dependency graph"""
    graph = strong_dependency_graph(universe)
    try:
        order = list(nx.lexicographical_topological_sort(graph.reverse(copy=False), key=str))
    except nx.NetworkXUnfeasible:
        raise InputError("universe is not well formed: strong dependency cycle") from None
    return {name: rank for rank, name in enumerate(order)}


# Configuration checks


def validate_configuration(config: Configuration, universe: Universe, nodes: NodePool) -> None:
    """Raise InputError for dangling references or bindings on the wrong ports"""
    for instance, type_name in config.type_of.items():
        if not universe.has(type_name):
            raise InputError(f"instance {instance} has unknown type {type_name!r}")
        node = config.node_of[instance]
        if not nodes.has(node):
            raise InputError(f"instance {instance} is hosted on unknown node {node!r}")
    for binding in config.bindings:
        requirer = universe.get(config.type_of[binding.requirer])
        provider = universe.get(config.type_of[binding.provider])
        if binding.interface not in requirer.requires:
            raise InputError(
                f"binding on {binding.interface}: {binding.requirer} ({requirer.name}) "
                "does not require it"
            )
        if binding.interface not in provider.provides:
            raise InputError(
                f"binding on {binding.interface}: {binding.provider} ({provider.name}) "
                "does not provide it"
            )


def _inspect(config: Configuration, universe: Universe, nodes: NodePool) -> CorrectnessReport:
    validate_configuration(config, universe, nodes)
    violations: list[Violation] = []

    load: dict[str, Counter[str]] = defaultdict(Counter)
    for instance, type_name in config.type_of.items():
        load[config.node_of[instance]].update(universe.get(type_name).resources)
    for node_name in sorted(load, key=natural_key):
        node = nodes.get(node_name)
        for resource in sorted(load[node_name]):
            demand = load[node_name][resource]
            if demand > node.capacity(resource):
                violations.append(
                    Violation(
                        kind=ViolationKind.NODE_OVERLOAD,
                        node=node_name,
                        resource=resource,
                        required=demand,
                        found=node.capacity(resource),
                    )
                )

    outgoing: Counter[tuple[str, str]] = Counter()
    incoming: Counter[tuple[str, str]] = Counter()
    for binding in config.bindings:
        outgoing[(binding.requirer, binding.interface)] += 1
        incoming[(binding.provider, binding.interface)] += 1

    providers: dict[str, list[str]] = defaultdict(list)
    for instance in config.instances:
        for interface in universe.get(config.type_of[instance]).provides:
            providers[interface].append(instance)

    final_only: list[Violation] = []
    for instance in config.instances:
        t = universe.get(config.type_of[instance])
        for interface, arity in sorted(t.strong_requires.items()):
            found = outgoing[(instance, interface)]
            if found < arity:
                violations.append(
                    Violation(
                        kind=ViolationKind.UNMET_STRONG,
                        instance=instance,
                        interface=interface,
                        required=arity,
                        found=found,
                    )
                )
        for interface, capacity in sorted(t.provides.items()):
            found = incoming[(instance, interface)]
            if is_finite(capacity) and found > int(capacity):
                violations.append(
                    Violation(
                        kind=ViolationKind.CAPACITY_EXCEEDED,
                        instance=instance,
                        interface=interface,
                        required=int(capacity),
                        found=found,
                    )
                )
        for interface, arity in sorted(t.weak_requires.items()):
            found = outgoing[(instance, interface)]
            if found < arity:
                final_only.append(
                    Violation(
                        kind=ViolationKind.UNMET_WEAK,
                        instance=instance,
                        interface=interface,
                        required=arity,
                        found=found,
                    )
                )
        for interface in sorted(t.conflicts):
            for other in providers.get(interface, []):
                if other != instance:
                    final_only.append(
                        Violation(
                            kind=ViolationKind.CONFLICT,
                            instance=instance,
                            interface=interface,
                            other=other,
                        )
                    )
    return CorrectnessReport(violations=tuple(violations + final_only))


def check_provisional(
    config: Configuration, universe: Universe, nodes: NodePool
) -> CorrectnessReport:
    """Report node overloads, unmet strong requirements and exceeded port capacities.

    Weak-requirement and conflict findings are reported as well so the verdict tells a
    merely provisionally correct configuration from a correct one; only the other kinds
    make the verdict ``invalid``.
    """
    return _inspect(config, universe, nodes)


def check_correct(config: Configuration, universe: Universe, nodes: NodePool) -> CorrectnessReport:
    """Full correctness: provisional checks plus weak arities and conflicts"""
    return _inspect(config, universe, nodes)


# Transition semantics


def _instance_type(config: Configuration, instance: str, universe: Universe) -> MicroserviceType:
    if instance not in config.type_of:
        raise ActionError(ActionErrorKind.UNKNOWN_INSTANCE, f"no instance named {instance!r}")
    type_name = config.type_of[instance]
    if not universe.has(type_name):
        raise ActionError(ActionErrorKind.UNKNOWN_TYPE, f"{instance} has unknown type {type_name}")
    return universe.get(type_name)


def _check_weak_port(
    config: Configuration, action: Union[Bind, Unbind], universe: Universe
) -> Binding:
    requirer = _instance_type(config, action.requirer, universe)
    provider = _instance_type(config, action.provider, universe)
    if action.requirer == action.provider:
        raise ActionError(ActionErrorKind.SELF_BINDING, f"{action.requirer} cannot bind to itself")
    if action.interface in requirer.strong_requires:
        raise ActionError(
            ActionErrorKind.STRONG_PORT_BIND,
            f"{action.interface} is a strong requirement of {requirer.name}; strong ports are "
            "bound only when the instance is created",
        )
    if action.interface not in requirer.weak_requires:
        raise ActionError(
            ActionErrorKind.UNKNOWN_INTERFACE_USE,
            f"{requirer.name} does not require {action.interface}",
        )
    if action.interface not in provider.provides:
        raise ActionError(
            ActionErrorKind.INVALID_PROVIDER,
            f"{action.provider} ({provider.name}) does not provide {action.interface}",
        )
    return Binding(interface=action.interface, requirer=action.requirer, provider=action.provider)


def apply_action(
    config: Configuration, action: Union[Bind, Unbind, New, Del], universe: Universe
) -> Configuration:
    """Execute one action; returns a new configuration or raises ActionError"""
    if isinstance(action, Bind):
        binding = _check_weak_port(config, action, universe)
        if binding in config.bindings:
            raise ActionError(
                ActionErrorKind.DUPLICATE_BINDING, f"{describe_action(action)} already present"
            )
        return config.model_copy(update={"bindings": config.bindings | {binding}})

    if isinstance(action, Unbind):
        binding = _check_weak_port(config, action, universe)
        if binding not in config.bindings:
            raise ActionError(
                ActionErrorKind.MISSING_BINDING, f"{describe_action(action)} is not present"
            )
        return config.model_copy(update={"bindings": config.bindings - {binding}})

    if isinstance(action, New):
        return _apply_new(config, action, universe)

    if action.id not in config.type_of:
        raise ActionError(ActionErrorKind.UNKNOWN_INSTANCE, f"no instance named {action.id!r}")
    return Configuration(
        type_of={z: t for z, t in config.type_of.items() if z != action.id},
        node_of={z: o for z, o in config.node_of.items() if z != action.id},
        bindings=frozenset(
            b for b in config.bindings if action.id not in (b.requirer, b.provider)
        ),
    )


def _apply_new(config: Configuration, action: New, universe: Universe) -> Configuration:
    if action.id in config.type_of:
        raise ActionError(ActionErrorKind.INSTANCE_EXISTS, f"instance {action.id} already exists")
    if not universe.has(action.type):
        raise ActionError(ActionErrorKind.UNKNOWN_TYPE, f"unknown type {action.type!r}")
    t = universe.get(action.type)

    extra = sorted(set(action.strong_bindings) - set(t.strong_requires))
    if extra:
        raise ActionError(
            ActionErrorKind.UNKNOWN_INTERFACE_USE,
            f"{t.name} has no strong requirement on {', '.join(extra)}",
        )
    added: set[Binding] = set()
    for interface, arity in sorted(t.strong_requires.items()):
        providers = action.strong_bindings.get(interface, frozenset())
        if len(providers) < arity:
            raise ActionError(
                ActionErrorKind.STRONG_REQUIREMENT_UNCOVERED,
                f"{action.id} needs {arity} providers of {interface}, got {len(providers)}",
            )
        for provider in providers:
            provider_type = _instance_type(config, provider, universe)
            if interface not in provider_type.provides:
                raise ActionError(
                    ActionErrorKind.INVALID_PROVIDER,
                    f"{provider} ({provider_type.name}) does not provide {interface}",
                )
            added.add(Binding(interface=interface, requirer=action.id, provider=provider))

    return Configuration(
        type_of={**config.type_of, action.id: action.type},
        node_of={**config.node_of, action.id: action.node},
        bindings=config.bindings | added,
    )


def config_cost(config: Configuration, nodes: NodePool) -> int:
    return sum(nodes.get(name).cost for name in set(config.node_of.values()))


def rename_instances(config: Configuration, mapping: dict[str, str]) -> Configuration:
    """Rename instances by ``mapping``; ids absent from it keep their name"""

    def rename(z: str) -> str:
        return mapping.get(z, z)

    return Configuration(
        type_of={rename(z): t for z, t in config.type_of.items()},
        node_of={rename(z): o for z, o in config.node_of.items()},
        bindings=frozenset(
            Binding(interface=b.interface, requirer=rename(b.requirer), provider=rename(b.provider))
            for b in config.bindings
        ),
    )
