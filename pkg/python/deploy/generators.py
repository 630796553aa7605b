"""
Problem generators: the partition and bin-packing reductions, and seeded random instances
"""

import logging
import random
from typing import Sequence, Union

from python.deploy.errors import InputError
from python.deploy.fixtures import GeneratedProblem
from python.deploy.formats import NodeSpec
from python.deploy.model import (
    INFINITE,
    Configuration,
    MicroserviceType,
    NodePool,
    Universe,
    natural_key,
    rename_instances,
)
from python.deploy.phase2 import BindingWeight, WeightedMetric
from python.deploy.planner import PlannerOptions
from python.deploy.solver import Sense

logger = logging.getLogger(__name__)

PARTITION_TARGET = "Partition"
BINPACK_TARGET = "Packing"


def partition(values: Sequence[int]) -> GeneratedProblem:
    """Partition gadget: the weighted binding metric equals the difference of the two sums.

    Every element type provides ``p`` to exactly one of ``SetA`` and ``SetB``; the metric
    weighs an element ``+v`` on the A side and ``-v`` on the B side, is kept non-negative
    and is minimised.
    """
    if not values:
        raise InputError("partition needs at least one element")
    if any(v < 0 for v in values):
        raise InputError("partition elements must be natural numbers")

    elements = [f"T{i}" for i in range(1, len(values) + 1)]
    types = [
        MicroserviceType(
            name=name,
            provides={"p": 1, "q": 1, f"single{i}": INFINITE},
            conflicts=frozenset({f"single{i}"}),
        )
        for i, name in enumerate(elements, start=1)
    ]
    for side in ("A", "B"):
        types.append(
            MicroserviceType(
                name=f"Set{side}",
                provides={"q": 1, f"single{side}": INFINITE},
                weak_requires={"p": 0},
                conflicts=frozenset({f"single{side}"}),
            )
        )
    types.append(MicroserviceType(name=PARTITION_TARGET, strong_requires={"q": len(values) + 2}))

    weights = []
    for name, value in zip(elements, values):
        weights.append(BindingWeight(interface="p", requirer="SetA", provider=name, weight=value))
        weights.append(BindingWeight(interface="p", requirer="SetB", provider=name, weight=-value))
    metric = WeightedMetric(
        weights=tuple(weights), sense=Sense.MINIMIZE, saturate=frozenset({"p"}), floor=0
    )
    universe = Universe(types=tuple(types))
    return GeneratedProblem(
        universe=universe,
        nodes=NodePool(nodes=tuple(NodeSpec(name="node", cost=1).expand())),
        target=PARTITION_TARGET,
        options=PlannerOptions(metric=metric, bounds={name: 1 for name in universe.names()}),
    )


def binpack(sizes: Sequence[int], capacity: int) -> GeneratedProblem:
    """Bin-packing gadget: items are microservices, bins are unit-cost nodes"""
    if not sizes:
        raise InputError("binpack needs at least one item")
    if capacity <= 0:
        raise InputError("bin capacity must be positive")
    if any(size < 0 for size in sizes):
        raise InputError("item sizes must be natural numbers")

    items = [
        MicroserviceType(name=f"Item{i}", provides={f"item{i}": 1}, resources={"size": size})
        for i, size in enumerate(sizes, start=1)
    ]
    target = MicroserviceType(
        name=BINPACK_TARGET, strong_requires={f"item{i}": 1 for i in range(1, len(sizes) + 1)}
    )
    universe = Universe(types=(*items, target))
    nodes = NodeSpec(name="bin", resources={"size": capacity}, cost=1, count=len(sizes))
    return GeneratedProblem(
        universe=universe,
        nodes=NodePool(nodes=tuple(nodes.expand())),
        target=BINPACK_TARGET,
        options=PlannerOptions(bounds={name: 1 for name in universe.names()}),
    )


def random_problem(
    seed: int, max_types: int = 4, max_nodes: int = 5, max_bound: int = 2
) -> GeneratedProblem:
    """A small seeded instance; strong requirements only point to higher-numbered types"""
    rng = random.Random(seed)
    n_types = rng.randint(1, max_types)
    interfaces = [f"i{k}" for k in range(rng.randint(1, 3))]

    provides: list[dict[str, Union[int, str]]] = []
    for _ in range(n_types):
        provides.append(
            {p: rng.choice([1, 2, INFINITE]) for p in interfaces if rng.random() < 0.4}
        )

    types = []
    for index in range(n_types):
        strong: dict[str, int] = {}
        for p in interfaces:
            providers = [j for j in range(n_types) if p in provides[j]]
            if providers and min(providers) > index and rng.random() < 0.3:
                strong[p] = rng.randint(1, 2)
        weak = {
            p: rng.randint(0, 2) for p in interfaces if p not in strong and rng.random() < 0.3
        }
        conflicts = frozenset(
            p for p in interfaces if p not in strong and p not in weak and rng.random() < 0.1
        )
        types.append(
            MicroserviceType(
                name=f"T{index}",
                provides=provides[index],
                strong_requires=strong,
                weak_requires=weak,
                conflicts=conflicts,
                resources={"cpu": rng.randint(1, 3), "ram": rng.randint(1, 3)},
            )
        )

    kinds = [
        {"cpu": rng.randint(2, 5), "ram": rng.randint(2, 5), "cost": rng.randint(1, 10)}
        for _ in range(rng.randint(1, 3))
    ]
    specs = []
    for k in range(1, rng.randint(1, max_nodes) + 1):
        kind = rng.choice(kinds)
        specs.append(
            NodeSpec(
                name=f"n{k}",
                resources={"cpu": kind["cpu"], "ram": kind["ram"]},
                cost=kind["cost"],
            )
        )
    bounds = {t.name: rng.randint(1, max_bound) for t in types}
    logger.debug("random problem %d: %d types, %d nodes", seed, n_types, len(specs))
    return GeneratedProblem(
        universe=Universe(types=tuple(types)),
        nodes=NodePool(nodes=tuple(node for spec in specs for node in spec.expand())),
        target="T0",
        options=PlannerOptions(bounds=bounds, seed=seed),
    )


def random_initial(config: Configuration, universe: Universe, seed: int) -> Configuration:
    """A provisionally correct part of ``config``.

    Kept instances are closed under strong providers; weak bindings are thinned at random.
    """
    rng = random.Random(seed)
    kept = {z for z in config.instances if rng.random() < 0.6}
    strong = [
        b
        for b in config.bindings
        if b.interface in universe.get(config.type_of[b.requirer]).strong_requires
    ]
    changed = True
    while changed:
        changed = False
        for b in strong:
            if b.requirer in kept and b.provider not in kept:
                kept.add(b.provider)
                changed = True

    bindings = frozenset(
        b
        for b in config.bindings
        if b.requirer in kept
        and b.provider in kept
        and (b in strong or rng.random() < 0.5)
    )
    initial = Configuration(
        type_of={z: config.type_of[z] for z in kept},
        node_of={z: config.node_of[z] for z in kept},
        bindings=bindings,
    )
    if rng.random() < 0.5:
        ordered = sorted(kept, key=natural_key)
        initial = rename_instances(initial, {z: f"old{k}" for k, z in enumerate(ordered, start=1)})
    return initial
