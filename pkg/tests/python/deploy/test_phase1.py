import pytest
from pydantic import ValidationError

from python.deploy.errors import BoundsError, InputError
from python.deploy.model import MicroserviceType, Node, NodePool, Universe
from python.deploy.phase1 import (
    AggregateBinding,
    InstanceBounds,
    InstancePlan,
    Placement,
    check_instance_plan,
    derive_bounds,
    encode_phase1,
    extract_instance_plan,
)
from python.deploy.solver import SolveStatus, evaluate, solve


def _solve(universe, nodes, target, bounds=None, **kwargs):
    bounds = bounds or derive_bounds(universe, nodes)
    model, variables = encode_phase1(universe, nodes, target, bounds, **kwargs)
    return model, variables, solve(model)


class TestDeriveBounds:
    def test_running_example(self, universe, nodes):
        bounds = derive_bounds(universe, nodes)
        # 4 large hosting one each plus 4 xlarge hosting two each
        assert bounds.of("MessageReceiver") == 12
        assert bounds.of("MessageAnalyzer") == 12
        assert bounds.of("AttachmentAnalyzer") == 24

    def test_override(self, universe, nodes):
        bounds = derive_bounds(universe, nodes, {"MessageReceiver": 1})
        assert bounds.of("MessageReceiver") == 1
        assert bounds.of("MessageAnalyzer") == 12

    def test_override_for_unknown_type(self, universe, nodes):
        with pytest.raises(InputError):
            derive_bounds(universe, nodes, {"Ghost": 1})

    def test_type_without_resources(self, nodes):
        universe = Universe(types=(MicroserviceType(name="Free"),))
        with pytest.raises(BoundsError, match="Free"):
            derive_bounds(universe, nodes)
        assert derive_bounds(universe, nodes, {"Free": 3}).of("Free") == 3

    def test_missing_bound(self):
        with pytest.raises(BoundsError):
            InstanceBounds(bounds={"A": 1}).of("B")

    def test_negative_bound(self):
        with pytest.raises(ValidationError):
            InstanceBounds(bounds={"A": -1})


class TestEncodePhase1:
    def test_variable_names(self, universe, nodes):
        model, _ = encode_phase1(universe, nodes, "MessageReceiver", derive_bounds(universe, nodes))
        names = {var.name for var in model.variables}
        assert "inst(MessageReceiver)" in names
        assert "used(large#1)" in names
        assert "inst(AttachmentAnalyzer,xlarge#4)" in names
        assert "bind(MA,MessageReceiver,MessageAnalyzer)" in names
        assert "cost" in names
        assert model.var("inst(MessageReceiver)").hi == 12

    def test_unknown_target(self, universe, nodes):
        with pytest.raises(InputError):
            encode_phase1(universe, nodes, "Ghost", derive_bounds(universe, nodes))

    def test_running_example_optimum(self, universe, nodes):
        model, variables, outcome = _solve(universe, nodes, "MessageReceiver")
        assert outcome.status == SolveStatus.OPTIMAL
        assert outcome.objective_value == 498
        assert evaluate(model, outcome.assignment).satisfied

        plan = extract_instance_plan(outcome.assignment, variables)
        assert plan.count("MessageReceiver") == 1
        assert plan.count("MessageAnalyzer") == 3
        assert plan.count("AttachmentAnalyzer") == 2
        assert plan.cost == 498
        assert len(plan.used_nodes) == 3
        assert check_instance_plan(plan, universe, nodes, "MessageReceiver") == []

    def test_analyzer_alone(self, universe, nodes):
        _, variables, outcome = _solve(universe, nodes, "MessageAnalyzer")
        plan = extract_instance_plan(outcome.assignment, variables)
        # one analyzer and one attachment analyzer fit a single xlarge node
        assert plan.cost == 199
        assert plan.count("MessageReceiver") == 0

    def test_unprovided_strong_requirement(self, nodes):
        universe = Universe(
            types=(MicroserviceType(name="A", strong_requires={"p": 1}, resources={"CPU": 1}),)
        )
        _, _, outcome = _solve(universe, nodes, "A")
        assert outcome.status == SolveStatus.UNSAT

    def test_target_too_large_for_any_node(self, ram_node):
        universe = Universe(types=(MicroserviceType(name="Huge", resources={"RAM": 5}),))
        _, _, outcome = _solve(universe, ram_node, "Huge", InstanceBounds(bounds={"Huge": 2}))
        assert outcome.status == SolveStatus.UNSAT

    def test_conflicting_requirement(self):
        universe = Universe(
            types=(
                MicroserviceType(
                    name="A",
                    weak_requires={"p": 1},
                    conflicts=frozenset({"q"}),
                    resources={"cpu": 1},
                ),
                MicroserviceType(name="B", provides={"p": 1, "q": 1}, resources={"cpu": 1}),
            )
        )
        pool = NodePool(nodes=(Node(name="n", resources={"cpu": 4}, cost=1),))
        _, _, outcome = _solve(universe, pool, "A")
        assert outcome.status == SolveStatus.UNSAT

    def test_self_conflict_limits_count(self):
        universe = Universe(
            types=(
                MicroserviceType(name="Root", weak_requires={"p": 2}, resources={"cpu": 1}),
                MicroserviceType(
                    name="Solo", provides={"p": 1}, conflicts=frozenset({"p"}), resources={"cpu": 1}
                ),
            )
        )
        pool = NodePool(nodes=(Node(name="n", resources={"cpu": 8}, cost=1),))
        _, _, outcome = _solve(universe, pool, "Root")
        assert outcome.status == SolveStatus.UNSAT

    def test_self_binding_needs_two_instances(self):
        universe = Universe(
            types=(
                MicroserviceType(
                    name="Peer", provides={"p": 1}, weak_requires={"p": 1}, resources={"cpu": 1}
                ),
            )
        )
        pool = NodePool(nodes=(Node(name="n", resources={"cpu": 4}, cost=3),))
        _, variables, outcome = _solve(universe, pool, "Peer")
        plan = extract_instance_plan(outcome.assignment, variables)
        assert plan.count("Peer") >= 2
        assert plan.cost == 3

    def test_retain_keeps_existing_placements(self, universe, nodes):
        retain = {("MessageReceiver", "large#1"): 1, ("AttachmentAnalyzer", "xlarge#1"): 1}
        model, variables, outcome = _solve(
            universe, nodes, "MessageReceiver", retain=retain, cost_cap=498
        )
        assert outcome.objective_value == 2
        plan = extract_instance_plan(outcome.assignment, variables)
        assert plan.cost == 498
        assert plan.placement("MessageReceiver", "large#1") == 1
        assert plan.placement("AttachmentAnalyzer", "xlarge#1") >= 1
        assert "kept(MessageReceiver,large#1)" in {var.name for var in model.variables}


def _optimum(universe, nodes, target="MessageReceiver"):
    _, _, outcome = _solve(universe, nodes, target)
    return outcome.objective_value if outcome.has_solution else None


def _with_receiver_arity(universe, arity):
    receiver = MicroserviceType(
        name="MessageReceiver", weak_requires={"MA": arity}, resources={"CPU": 2, "RAM": 4}
    )
    return Universe(types=(receiver,) + universe.types[1:])


class TestMonotonicity:
    @pytest.mark.parametrize(
        "removed",
        [
            ["large#1"],
            ["xlarge#4"],
            ["xlarge#3", "xlarge#4"],
            ["xlarge#2", "xlarge#3", "xlarge#4"],
            ["xlarge#1", "xlarge#2", "xlarge#3", "xlarge#4"],
        ],
    )
    def test_fewer_nodes_never_cheaper(self, universe, nodes, removed):
        fewer = NodePool(nodes=tuple(n for n in nodes.nodes if n.name not in removed))
        cost = _optimum(universe, fewer)
        assert cost is None or cost >= 498

    def test_higher_arity_never_cheaper(self, universe, nodes):
        costs = [_optimum(_with_receiver_arity(universe, k), nodes) for k in range(1, 5)]
        assert None not in costs
        assert costs == sorted(costs)
        assert costs[2] == 498

    def test_smaller_provided_capacity_never_cheaper(self, universe, nodes):
        single = MicroserviceType(
            name="AttachmentAnalyzer", provides={"AA": 1}, resources={"CPU": 1, "RAM": 2}
        )
        narrowed = Universe(types=universe.types[:2] + (single,))
        cost = _optimum(narrowed, nodes)
        assert cost is None or cost >= 498


class TestInstancePlan:
    def test_totals_must_match_placements(self):
        with pytest.raises(ValidationError):
            InstancePlan(
                total={"A": 2},
                placements=(Placement(type="A", node="n", count=1),),
                used_nodes=frozenset({"n"}),
            )

    def test_used_nodes_must_match_placements(self):
        with pytest.raises(ValidationError):
            InstancePlan(
                total={"A": 1},
                placements=(Placement(type="A", node="n", count=1),),
                used_nodes=frozenset({"n", "m"}),
            )

    def test_check_reports_broken_constraints(self, universe, nodes):
        plan = InstancePlan(
            total={"MessageReceiver": 1, "MessageAnalyzer": 1, "AttachmentAnalyzer": 0},
            placements=(
                Placement(type="MessageReceiver", node="large#1", count=1),
                Placement(type="MessageAnalyzer", node="large#1", count=1),
            ),
            aggregate_bindings=(
                AggregateBinding(
                    interface="MA", requirer="MessageReceiver", provider="MessageAnalyzer", count=1
                ),
            ),
            used_nodes=frozenset({"large#1"}),
            cost=100,
        )
        problems = check_instance_plan(plan, universe, nodes, "MessageReceiver")
        assert any("MessageReceiver has 1 bindings on MA" in p for p in problems)
        assert any("MessageAnalyzer has 0 bindings on AA" in p for p in problems)
        assert any("node large#1 needs" in p for p in problems)

    def test_check_missing_target(self, universe, nodes):
        problems = check_instance_plan(InstancePlan(), universe, nodes, "MessageReceiver")
        assert problems == ["no instance of MessageReceiver"]
