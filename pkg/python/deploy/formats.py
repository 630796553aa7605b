"""
JSON file formats for universes, node pools, configurations, plans and options
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator

from python.deploy.errors import InputError
from python.deploy.model import (
    Action,
    Binding,
    Configuration,
    Identifier,
    MicroserviceType,
    Node,
    NodePool,
    Quantity,
    Universe,
    natural_key,
)

logger = logging.getLogger(__name__)


class NodeSpec(BaseModel):
    """One entry of a nodes file; ``count > 1`` expands to ``name#1..name#count``"""

    model_config = ConfigDict(frozen=True)

    name: Identifier
    resources: dict[Identifier, Quantity] = Field(default_factory=dict)
    cost: Quantity = 0
    count: int = Field(ge=1, default=1)

    def expand(self) -> list[Node]:
        if self.count == 1:
            return [Node(name=self.name, resources=self.resources, cost=self.cost)]
        return [
            Node(name=f"{self.name}#{k}", resources=self.resources, cost=self.cost)
            for k in range(1, self.count + 1)
        ]


class InstanceEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: Identifier
    type: Identifier
    node: Identifier


class ConfigurationFile(BaseModel):
    model_config = ConfigDict(frozen=True)

    instances: list[InstanceEntry] = Field(default_factory=list)
    bindings: list[Binding] = Field(default_factory=list)

    @field_validator("instances")
    @classmethod
    def unique_ids(cls, instances: list[InstanceEntry]) -> list[InstanceEntry]:
        ids = [entry.id for entry in instances]
        duplicates = sorted({z for z in ids if ids.count(z) > 1})
        if duplicates:
            raise ValueError(f"duplicate instance ids: {duplicates}")
        return instances

    def to_configuration(self) -> Configuration:
        return Configuration(
            type_of={entry.id: entry.type for entry in self.instances},
            node_of={entry.id: entry.node for entry in self.instances},
            bindings=frozenset(self.bindings),
        )

    @classmethod
    def from_configuration(cls, config: Configuration) -> "ConfigurationFile":
        return cls(
            instances=[
                InstanceEntry(id=z, type=config.type_of[z], node=config.node_of[z])
                for z in config.instances
            ],
            bindings=config.sorted_bindings(),
        )


class PlanFile(BaseModel):
    """A plan as written by ``plan`` and read by ``check``"""

    model_config = ConfigDict(frozen=True)

    universe_hash: Optional[str] = None
    target: Optional[str] = None
    mode: Optional[str] = None
    status: Optional[str] = None
    summary: Optional[dict[str, Any]] = None
    actions: list[Action] = Field(default_factory=list)


_TYPES = TypeAdapter(list[MicroserviceType])
_NODES = TypeAdapter(list[NodeSpec])


def read_json(path: Path) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def write_json(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    logger.debug("wrote %s", path)


def parse_universe(data: Any) -> Universe:
    return Universe(types=tuple(_TYPES.validate_python(data)))


def dump_universe(universe: Universe) -> list[dict[str, Any]]:
    return [t.model_dump(mode="json", by_alias=True) for t in universe.types]


def parse_nodes(data: Any) -> NodePool:
    nodes = [node for spec in _NODES.validate_python(data) for node in spec.expand()]
    return NodePool(nodes=tuple(nodes))


def dump_nodes(nodes: NodePool) -> list[dict[str, Any]]:
    return [node.model_dump(mode="json") for node in nodes.nodes]


def parse_configuration(data: Any) -> Configuration:
    return ConfigurationFile.model_validate(data).to_configuration()


def dump_configuration(config: Configuration) -> dict[str, Any]:
    return ConfigurationFile.from_configuration(config).model_dump(mode="json")


def load_universe(path: Path) -> Universe:
    return parse_universe(read_json(path))


def load_nodes(path: Path) -> NodePool:
    return parse_nodes(read_json(path))


def load_configuration(path: Path) -> Configuration:
    return parse_configuration(read_json(path))


def load_plan(path: Path) -> PlanFile:
    return PlanFile.model_validate(read_json(path))


def universe_hash(universe: Universe) -> str:
    """SHA-256 of the canonical JSON form, independent of type order"""
    canonical = sorted(dump_universe(universe), key=lambda t: t["name"])
    text = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def parse_bound_overrides(items: list[str]) -> dict[str, int]:
    """``TYPE=N`` strings from the command line"""
    bounds: dict[str, int] = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise InputError(f"bound override {item!r} is not of the form TYPE=N")
        try:
            bound = int(value)
        except ValueError:
            raise InputError(f"bound override {item!r} needs an integer") from None
        if bound < 0:
            raise InputError(f"bound override {item!r} must be >= 0")
        bounds[name] = bound
    return dict(sorted(bounds.items(), key=lambda kv: natural_key(kv[0])))
