"""
Pytest configuration and shared fixtures
"""

import pytest

from python.deploy.fixtures import fig1_initial, fig1_nodes, fig1_universe
from python.deploy.model import Binding, Configuration, MicroserviceType, Node, NodePool, Universe


@pytest.fixture
def universe():
    """Fixture for the running example universe (MessageReceiver, analyzers)"""
    return fig1_universe()


@pytest.fixture
def nodes():
    """Fixture for four large and four xlarge nodes"""
    return fig1_nodes()


@pytest.fixture
def initial():
    """Fixture for the provisionally correct initial configuration mr, ma, aa"""
    return fig1_initial()


@pytest.fixture
def full_config():
    """Fixture for the correct configuration with three analyzers and two attachment analyzers"""
    type_of = {
        "mr": "MessageReceiver",
        "ma1": "MessageAnalyzer",
        "ma2": "MessageAnalyzer",
        "ma3": "MessageAnalyzer",
        "aa1": "AttachmentAnalyzer",
        "aa2": "AttachmentAnalyzer",
    }
    node_of = {
        "mr": "large#1",
        "ma1": "xlarge#1",
        "aa1": "xlarge#1",
        "aa2": "xlarge#1",
        "ma2": "xlarge#2",
        "ma3": "xlarge#2",
    }
    bindings = {Binding(interface="MA", requirer="mr", provider=f"ma{k}") for k in (1, 2, 3)}
    bindings |= {
        Binding(interface="AA", requirer="ma1", provider="aa1"),
        Binding(interface="AA", requirer="ma2", provider="aa1"),
        Binding(interface="AA", requirer="ma3", provider="aa2"),
    }
    return Configuration(type_of=type_of, node_of=node_of, bindings=frozenset(bindings))


@pytest.fixture
def empty_config():
    """Fixture for the empty configuration"""
    return Configuration.empty()


@pytest.fixture
def ram_node():
    """Fixture for a single node with 4 RAM"""
    return NodePool(nodes=(Node(name="small", resources={"RAM": 4}, cost=100),))


@pytest.fixture
def ram_universe():
    """Fixture for a universe with one type consuming 4 RAM"""
    return Universe(types=(MicroserviceType(name="Big", resources={"RAM": 4}),))
