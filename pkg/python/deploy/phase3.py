"""
Phase 3: turn a target configuration into an ordered deployment plan.

Scratch mode tears the initial configuration down and builds the target from nothing.
Incremental mode keeps the initial instances whose type and node reappear in the
target and only reconciles the difference.
"""

import logging
from typing import Sequence, Union

import networkx as nx

from python.deploy.errors import InputError, InternalError
from python.deploy.model import (
    Bind,
    Binding,
    Configuration,
    Del,
    DeploymentPlan,
    New,
    NodePool,
    Unbind,
    Universe,
    buildup_rank,
    check_correct,
    check_provisional,
    natural_key,
)
from python.deploy.phase2 import BindingPlan, PlacedInstance

logger = logging.getLogger(__name__)


def assemble_target(
    instances: Sequence[PlacedInstance],
    binding_plan: BindingPlan,
    universe: Universe,
    nodes: NodePool,
) -> Configuration:
    try:
        target = Configuration(
            type_of={inst.id: inst.type for inst in instances},
            node_of={inst.id: inst.node for inst in instances},
            bindings=binding_plan.bindings,
        )
    except ValueError as exc:
        raise InternalError(f"phase 2 output does not form a configuration: {exc}") from exc
    report = check_correct(target, universe, nodes)
    if not report.is_correct:
        findings = "; ".join(v.describe() for v in report.violations)
        raise InternalError(f"assembled target configuration is not correct: {findings}")
    return target


def _is_strong(binding: Binding, config: Configuration, universe: Universe) -> bool:
    return binding.interface in universe.get(config.type_of[binding.requirer]).strong_requires


def _require_provisional(initial: Configuration, universe: Universe, nodes: NodePool) -> None:
    blocking = check_provisional(initial, universe, nodes).blocking()
    if blocking:
        raise InputError(
            "initial configuration is not provisionally correct: "
            + "; ".join(v.describe() for v in blocking)
        )


def teardown_order(
    config: Configuration, doomed: Sequence[str], universe: Universe
) -> list[str]:
    """Deletion order: an instance goes only once nothing left holds a strong binding to it"""
    rank = buildup_rank(universe)
    graph: nx.DiGraph[str] = nx.DiGraph()
    graph.add_nodes_from(doomed)
    for b in config.bindings:
        if b.requirer in graph and b.provider in graph and _is_strong(b, config, universe):
            graph.add_edge(b.requirer, b.provider)
    return list(
        nx.lexicographical_topological_sort(
            graph, key=lambda z: (-rank[config.type_of[z]], natural_key(z))
        )
    )


def _buildup(
    target: Configuration,
    created: Sequence[str],
    universe: Universe,
    final_id: dict[str, str],
) -> list[New]:
    """``New`` actions in strong dependency order, providers first"""
    rank = buildup_rank(universe)
    graph: nx.DiGraph[str] = nx.DiGraph()
    graph.add_nodes_from(created)
    strong_of: dict[str, dict[str, set[str]]] = {z: {} for z in created}
    for b in target.bindings:
        if b.requirer in strong_of and _is_strong(b, target, universe):
            strong_of[b.requirer].setdefault(b.interface, set()).add(final_id[b.provider])
            if b.provider in graph:
                graph.add_edge(b.provider, b.requirer)
    order = nx.lexicographical_topological_sort(
        graph, key=lambda z: (rank[target.type_of[z]], natural_key(z))
    )
    actions = []
    for z in order:
        t = universe.get(target.type_of[z])
        actions.append(
            New(
                id=final_id[z],
                type=t.name,
                node=target.node_of[z],
                strong_bindings={
                    p: frozenset(strong_of[z].get(p, set())) for p in t.strong_requires
                },
            )
        )
    return actions


def _weak_bindings(config: Configuration, universe: Universe) -> list[Binding]:
    return [b for b in config.sorted_bindings() if not _is_strong(b, config, universe)]


def synthesize_scratch(
    initial: Configuration, target: Configuration, universe: Universe, nodes: NodePool
) -> DeploymentPlan:
    _require_provisional(initial, universe, nodes)
    actions: list[Union[Bind, Unbind, New, Del]] = [
        Unbind(interface=b.interface, requirer=b.requirer, provider=b.provider)
        for b in _weak_bindings(initial, universe)
    ]
    actions += [Del(id=z) for z in teardown_order(initial, initial.instances, universe)]
    actions += _buildup(target, target.instances, universe, {z: z for z in target.instances})
    actions += [
        Bind(interface=b.interface, requirer=b.requirer, provider=b.provider)
        for b in _weak_bindings(target, universe)
    ]
    logger.info("scratch plan: %d actions", len(actions))
    return DeploymentPlan(actions=tuple(actions))


def match_instances(
    initial: Configuration, candidates: Sequence[PlacedInstance]
) -> dict[str, str]:
    """Pair initial instances with candidates of equal (type, node), both in id order"""
    free = sorted(candidates, key=lambda inst: natural_key(inst.id))
    taken: set[str] = set()
    matching: dict[str, str] = {}
    for z in initial.instances:
        for candidate in free:
            if candidate.id in taken:
                continue
            if (candidate.type, candidate.node) == (initial.type_of[z], initial.node_of[z]):
                matching[z] = candidate.id
                taken.add(candidate.id)
                break
    return matching


def reuse_matching(
    initial: Configuration, target: Configuration, universe: Universe
) -> dict[str, str]:
    """Initial instances kept by incremental synthesis, mapped to their target instance.

    A kept instance must find its strong bindings reproduced exactly, since strong ports
    cannot be rebound; instances failing this are dropped until nothing changes.
    """
    candidates = [
        PlacedInstance(id=z, type=target.type_of[z], node=target.node_of[z])
        for z in target.instances
    ]
    matching = match_instances(initial, candidates)
    changed = True
    while changed:
        changed = False
        for z in sorted(matching, key=natural_key):
            kept_as = matching[z]
            before = {
                (b.interface, matching.get(b.provider))
                for b in initial.bindings
                if b.requirer == z and _is_strong(b, initial, universe)
            }
            after = {
                (b.interface, b.provider)
                for b in target.bindings
                if b.requirer == kept_as and _is_strong(b, target, universe)
            }
            if before != after:
                del matching[z]
                changed = True
    return matching


def target_renaming(
    initial: Configuration, target: Configuration, universe: Universe
) -> dict[str, str]:
    """Id each target instance carries after an incremental plan"""
    matching = reuse_matching(initial, target, universe)
    renaming = {kept_as: z for z, kept_as in matching.items()}
    reserved = set(initial.type_of) | set(target.type_of)
    for z in target.instances:
        if z in renaming:
            continue
        if z not in initial.type_of:
            renaming[z] = z
            continue
        k = 1
        while f"{target.type_of[z]}#{k}" in reserved:
            k += 1
        fresh = f"{target.type_of[z]}#{k}"
        reserved.add(fresh)
        renaming[z] = fresh
    return renaming


def _renamed(binding: Binding, renaming: dict[str, str]) -> Binding:
    return Binding(
        interface=binding.interface,
        requirer=renaming[binding.requirer],
        provider=renaming[binding.provider],
    )


def synthesize_incremental(
    initial: Configuration, target: Configuration, universe: Universe, nodes: NodePool
) -> DeploymentPlan:
    _require_provisional(initial, universe, nodes)
    matching = reuse_matching(initial, target, universe)
    renaming = target_renaming(initial, target, universe)
    wanted = {_renamed(b, renaming) for b in target.bindings}

    actions: list[Union[Bind, Unbind, New, Del]] = [
        Unbind(interface=b.interface, requirer=b.requirer, provider=b.provider)
        for b in _weak_bindings(initial, universe)
        if b not in wanted
    ]
    surplus = [z for z in initial.instances if z not in matching]
    actions += [Del(id=z) for z in teardown_order(initial, surplus, universe)]

    kept_targets = set(matching.values())
    created = [z for z in target.instances if z not in kept_targets]
    actions += _buildup(target, created, universe, renaming)

    missing = [_renamed(b, renaming) for b in _weak_bindings(target, universe)]
    actions += [
        Bind(interface=b.interface, requirer=b.requirer, provider=b.provider)
        for b in sorted(missing, key=Binding.sort_key)
        if b not in initial.bindings
    ]
    logger.info(
        "incremental plan: kept %d of %d instances, %d actions",
        len(matching),
        len(initial.type_of),
        len(actions),
    )
    return DeploymentPlan(actions=tuple(actions))
