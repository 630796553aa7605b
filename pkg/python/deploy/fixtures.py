"""
Shipped example problems
"""

import math
from typing import Optional

from pydantic import BaseModel, ConfigDict

from python.deploy.formats import NodeSpec
from python.deploy.model import (
    INFINITE,
    Binding,
    Configuration,
    MicroserviceType,
    NodePool,
    Universe,
)
from python.deploy.phase2 import MaximizeBindings
from python.deploy.planner import PlannerOptions


class GeneratedProblem(BaseModel):
    """Everything ``plan`` needs: universe, node pool, target, options and an initial state"""

    model_config = ConfigDict(frozen=True)

    universe: Universe
    nodes: NodePool
    target: str
    options: PlannerOptions = PlannerOptions()
    initial: Optional[Configuration] = None


def _pool(*specs: NodeSpec) -> NodePool:
    return NodePool(nodes=tuple(node for spec in specs for node in spec.expand()))


# Running example: a message receiver fed by analyzers that need attachment analyzers


FIG1_TARGET = "MessageReceiver"


def fig1_universe() -> Universe:
    return Universe(
        types=(
            MicroserviceType(
                name="MessageReceiver",
                weak_requires={"MA": 3},
                resources={"CPU": 2, "RAM": 4},
            ),
            MicroserviceType(
                name="MessageAnalyzer",
                provides={"MA": INFINITE},
                strong_requires={"AA": 1},
                resources={"CPU": 2, "RAM": 3},
            ),
            MicroserviceType(
                name="AttachmentAnalyzer",
                provides={"AA": 2},
                resources={"CPU": 1, "RAM": 2},
            ),
        )
    )


def fig1_nodes() -> NodePool:
    return _pool(
        NodeSpec(name="large", resources={"CPU": 2, "RAM": 4}, cost=100, count=4),
        NodeSpec(name="xlarge", resources={"CPU": 4, "RAM": 8}, cost=199, count=4),
    )


def fig1_initial() -> Configuration:
    """Only provisionally correct: ``mr`` has one of the three analyzers it needs"""
    return Configuration(
        type_of={"mr": "MessageReceiver", "ma": "MessageAnalyzer", "aa": "AttachmentAnalyzer"},
        node_of={"mr": "large#1", "ma": "xlarge#1", "aa": "xlarge#1"},
        bindings=frozenset(
            {
                Binding(interface="MA", requirer="mr", provider="ma"),
                Binding(interface="AA", requirer="ma", provider="aa"),
            }
        ),
    )


def fig1_mini(with_initial: bool = False) -> GeneratedProblem:
    return GeneratedProblem(
        universe=fig1_universe(),
        nodes=fig1_nodes(),
        target=FIG1_TARGET,
        initial=fig1_initial() if with_initial else None,
    )


# Email processing pipeline: every service sits behind its own load balancer

# (service, cpu in millicores, ram in MiB, max load in thousands of requests; None is unbounded)
EMAIL_SERVICES: tuple[tuple[str, int, int, Optional[int]], ...] = (
    ("MessageReceiver", 500, 512, None),
    ("MessageParser", 500, 1024, 40),
    ("HeaderAnalyser", 500, 512, 40),
    ("LinkAnalyser", 500, 512, 40),
    ("TextAnalyser", 600, 1024, 15),
    ("SentimentAnalyser", 700, 1536, 15),
    ("AttachmentsManager", 500, 1024, 30),
    ("VirusScanner", 700, 1536, 13),
    ("ImageAnalyser", 600, 1024, 30),
    ("NSFWDetector", 600, 1024, 13),
    ("ImageRecognizer", 700, 1024, 13),
    ("MessageAnalyser", 400, 1024, 70),
)

EMAIL_STRONG: dict[str, tuple[str, ...]] = {
    "MessageParser": ("HeaderAnalyser", "LinkAnalyser", "TextAnalyser", "AttachmentsManager"),
    "TextAnalyser": ("SentimentAnalyser",),
    "AttachmentsManager": ("VirusScanner", "ImageAnalyser"),
    "ImageAnalyser": ("NSFWDetector", "ImageRecognizer"),
}

EMAIL_WEAK: dict[str, tuple[str, ...]] = {
    "MessageReceiver": ("MessageParser",),
    "HeaderAnalyser": ("MessageAnalyser",),
    "LinkAnalyser": ("MessageAnalyser",),
    "TextAnalyser": ("MessageAnalyser",),
    "SentimentAnalyser": ("MessageAnalyser",),
    "VirusScanner": ("MessageAnalyser",),
    "NSFWDetector": ("MessageAnalyser",),
    "ImageRecognizer": ("MessageAnalyser",),
}

BALANCER_CPU = 100
BALANCER_RAM = 128
EMAIL_TARGET = "MessageReceiverLB"


def replicas_for(load: int, max_load: Optional[int]) -> int:
    """Replicas a load balancer needs to serve ``load`` thousand requests"""
    if max_load is None:
        return 1
    return max(1, math.ceil(load / max_load))


def email_pipeline_universe(load: int = 10) -> Universe:
    services = []
    balancers = []
    for name, cpu, ram, max_load in EMAIL_SERVICES:
        services.append(
            MicroserviceType(
                name=name,
                provides={f"{name}Replica": 1},
                strong_requires={p: 1 for p in EMAIL_STRONG.get(name, ())},
                weak_requires={p: 1 for p in EMAIL_WEAK.get(name, ())},
                resources={"cpu": cpu, "ram": ram},
            )
        )
        balancers.append(
            MicroserviceType(
                name=f"{name}LB",
                provides={name: INFINITE},
                weak_requires={f"{name}Replica": replicas_for(load, max_load)},
                resources={"cpu": BALANCER_CPU, "ram": BALANCER_RAM},
            )
        )
    return Universe(types=tuple(services + balancers))


def email_pipeline_nodes(per_kind: int = 40) -> NodePool:
    return _pool(
        NodeSpec(name="c4_large", resources={"cpu": 2000, "ram": 3840}, cost=100, count=per_kind),
        NodeSpec(name="c4_xlarge", resources={"cpu": 4000, "ram": 7680}, cost=199, count=per_kind),
        NodeSpec(
            name="c4_2xlarge", resources={"cpu": 8000, "ram": 15360}, cost=398, count=per_kind
        ),
    )


def email_pipeline(load: int = 10) -> GeneratedProblem:
    """The pipeline sized for ``load`` thousand simultaneous requests; one balancer per service"""
    universe = email_pipeline_universe(load)
    bounds = {f"{name}LB": 1 for name, _, _, _ in EMAIL_SERVICES}
    return GeneratedProblem(
        universe=universe,
        nodes=email_pipeline_nodes(),
        target=EMAIL_TARGET,
        options=PlannerOptions(bounds=bounds),
    )


# A balancer that binds whatever backends exist


def load_balancer(providers: int) -> GeneratedProblem:
    """``providers`` backends and one balancer weak-requiring them with arity 0"""
    universe = Universe(
        types=(
            MicroserviceType(
                name="Backend",
                provides={"app": INFINITE, "replica": 1},
                resources={"cpu": 1},
            ),
            MicroserviceType(
                name="LoadBalancer",
                provides={"entry": INFINITE},
                weak_requires={"app": 0},
                resources={"cpu": 1},
            ),
            MicroserviceType(
                name="Cluster",
                strong_requires={"replica": providers, "entry": 1},
                resources={"cpu": 1},
            ),
        )
    )
    nodes = _pool(NodeSpec(name="host", resources={"cpu": providers + 2}, cost=10))
    return GeneratedProblem(
        universe=universe,
        nodes=nodes,
        target="Cluster",
        options=PlannerOptions(metric=MaximizeBindings(), bounds={"Backend": providers}),
    )
