import pytest
from pydantic import TypeAdapter

from python.deploy.errors import InputError
from python.deploy.model import Binding, MicroserviceType, Universe
from python.deploy.phase1 import InstancePlan, Placement
from python.deploy.phase2 import (
    BindingMetric,
    BindingPlan,
    BindingWeight,
    MaximizeBindings,
    MinimizeCrossNode,
    NoMetric,
    PlacedInstance,
    WeightedMetric,
    encode_phase2,
    extract_binding_plan,
    materialize_instances,
    weighted_value,
)
from python.deploy.solver import Sense, SolveStatus, solve


@pytest.fixture
def optimal_plan():
    """Fixture for the cost-498 instance plan of the running example"""
    return InstancePlan(
        total={"MessageReceiver": 1, "MessageAnalyzer": 3, "AttachmentAnalyzer": 2},
        placements=(
            Placement(type="MessageReceiver", node="large#1", count=1),
            Placement(type="MessageAnalyzer", node="xlarge#2", count=2),
            Placement(type="MessageAnalyzer", node="xlarge#1", count=1),
            Placement(type="AttachmentAnalyzer", node="xlarge#1", count=2),
        ),
        used_nodes=frozenset({"large#1", "xlarge#1", "xlarge#2"}),
        cost=498,
    )


def _bindings(instances, universe, metric=None, **kwargs):
    model, variables = encode_phase2(instances, universe, metric, **kwargs)
    outcome = solve(model)
    assert outcome.has_solution
    return outcome, extract_binding_plan(outcome.assignment, variables)


class TestMaterialize:
    def test_ids_follow_node_order(self, optimal_plan):
        instances = materialize_instances(optimal_plan)
        assert [(i.id, i.node) for i in instances] == [
            ("MessageReceiver#1", "large#1"),
            ("MessageAnalyzer#1", "xlarge#1"),
            ("MessageAnalyzer#2", "xlarge#2"),
            ("MessageAnalyzer#3", "xlarge#2"),
            ("AttachmentAnalyzer#1", "xlarge#1"),
            ("AttachmentAnalyzer#2", "xlarge#1"),
        ]

    def test_numbers_compare_numerically(self):
        plan = InstancePlan(
            total={"Web": 3},
            placements=(
                Placement(type="Web", node="large#10", count=1),
                Placement(type="Web", node="large#2", count=2),
            ),
            used_nodes=frozenset({"large#2", "large#10"}),
        )
        assert [(i.id, i.node) for i in materialize_instances(plan)] == [
            ("Web#1", "large#2"),
            ("Web#2", "large#2"),
            ("Web#3", "large#10"),
        ]

    def test_empty_plan(self):
        assert materialize_instances(InstancePlan()) == []


class TestEncodePhase2:
    def test_arities_respected(self, optimal_plan, universe):
        instances = materialize_instances(optimal_plan)
        _, plan = _bindings(instances, universe)
        assert len(plan.on("MA")) == 3
        assert len(plan.on("AA")) == 3
        per_provider = {}
        for b in plan.on("AA"):
            per_provider[b.provider] = per_provider.get(b.provider, 0) + 1
        assert max(per_provider.values()) <= 2
        assert {b.requirer for b in plan.on("AA")} == {
            "MessageAnalyzer#1",
            "MessageAnalyzer#2",
            "MessageAnalyzer#3",
        }

    def test_insufficient_capacity(self, universe):
        instances = [
            PlacedInstance(id=f"ma{k}", type="MessageAnalyzer", node="xlarge#1") for k in (1, 2, 3)
        ]
        instances.append(PlacedInstance(id="aa", type="AttachmentAnalyzer", node="xlarge#2"))
        model, _ = encode_phase2(instances, universe)
        assert solve(model).status == SolveStatus.UNSAT

    def test_no_self_binding(self):
        universe = Universe(
            types=(MicroserviceType(name="Peer", provides={"p": 1}, weak={"p": 1}),)
        )
        instances = [PlacedInstance(id=f"z{k}", type="Peer", node="n") for k in (1, 2)]
        _, plan = _bindings(instances, universe)
        assert plan.bindings == {
            Binding(interface="p", requirer="z1", provider="z2"),
            Binding(interface="p", requirer="z2", provider="z1"),
        }

    def test_min_cross_node(self, universe):
        instances = [
            PlacedInstance(id="ma", type="MessageAnalyzer", node="xlarge#1"),
            PlacedInstance(id="far", type="AttachmentAnalyzer", node="xlarge#2"),
            PlacedInstance(id="near", type="AttachmentAnalyzer", node="xlarge#1"),
        ]
        outcome, plan = _bindings(instances, universe, MinimizeCrossNode())
        assert outcome.objective_value == 0
        assert plan.bindings == {Binding(interface="AA", requirer="ma", provider="near")}

    def test_max_bind_with_zero_arity(self):
        universe = Universe(
            types=(
                MicroserviceType(name="LB", weak={"app": 0}),
                MicroserviceType(name="Backend", provides={"app": 1}),
            )
        )
        instances = [PlacedInstance(id="lb", type="LB", node="n")]
        instances += [PlacedInstance(id=f"b{k}", type="Backend", node="n") for k in (1, 2, 3)]
        _, unranked = _bindings(instances, universe)
        assert len(unranked.bindings) <= 3
        outcome, ranked = _bindings(instances, universe, MaximizeBindings())
        assert outcome.objective_value == 3
        assert len(ranked.on("app")) == 3

    def test_weighted_metric(self, universe):
        instances = [
            PlacedInstance(id="ma", type="MessageAnalyzer", node="xlarge#1"),
            PlacedInstance(id="aa1", type="AttachmentAnalyzer", node="xlarge#1"),
        ]
        metric = WeightedMetric(
            weights=(
                BindingWeight(
                    interface="AA",
                    requirer="MessageAnalyzer",
                    provider="AttachmentAnalyzer",
                    weight=5,
                ),
            ),
            sense=Sense.MAXIMIZE,
        )
        outcome, plan = _bindings(instances, universe, metric)
        assert outcome.objective_value == 5
        assert weighted_value(plan, instances, metric) == 5

    def test_weighted_metric_unknown_interface(self, universe):
        metric = WeightedMetric(
            weights=(BindingWeight(interface="ZZ", requirer="A", provider="B", weight=1),)
        )
        with pytest.raises(InputError):
            encode_phase2([], universe, metric)

    def test_floor_can_make_it_infeasible(self, universe):
        instances = [
            PlacedInstance(id="ma", type="MessageAnalyzer", node="xlarge#1"),
            PlacedInstance(id="aa", type="AttachmentAnalyzer", node="xlarge#1"),
        ]
        metric = WeightedMetric(
            weights=(
                BindingWeight(
                    interface="AA",
                    requirer="MessageAnalyzer",
                    provider="AttachmentAnalyzer",
                    weight=1,
                ),
            ),
            floor=2,
        )
        model, _ = encode_phase2(instances, universe, metric)
        assert solve(model).status == SolveStatus.UNSAT

    def test_pinned_and_closed(self, universe):
        instances = [
            PlacedInstance(id="mr", type="MessageReceiver", node="large#1"),
            *(
                PlacedInstance(id=f"ma{k}", type="MessageAnalyzer", node="xlarge#1")
                for k in (1, 2, 3)
            ),
            PlacedInstance(id="aa1", type="AttachmentAnalyzer", node="xlarge#2"),
            PlacedInstance(id="aa2", type="AttachmentAnalyzer", node="xlarge#2"),
        ]
        pin = Binding(interface="AA", requirer="ma1", provider="aa2")
        _, plan = _bindings(instances, universe, pinned=[pin], closed=[("ma1", "AA")])
        assert pin in plan.bindings
        assert [b.provider for b in plan.bindings if b.requirer == "ma1"] == ["aa2"]

    def test_pin_outside_candidates(self, universe):
        instances = [PlacedInstance(id="mr", type="MessageReceiver", node="large#1")]
        with pytest.raises(InputError):
            encode_phase2(
                instances,
                universe,
                pinned=[Binding(interface="AA", requirer="mr", provider="x")],
            )


class TestMetricParsing:
    @pytest.mark.parametrize(
        "data,kind",
        [
            ({"kind": "none"}, NoMetric),
            ({"kind": "min-cross"}, MinimizeCrossNode),
            ({"kind": "max-bind"}, MaximizeBindings),
            ({"kind": "weighted", "weights": [], "sense": "max"}, WeightedMetric),
        ],
    )
    def test_discriminated_union(self, data, kind):
        assert isinstance(TypeAdapter(BindingMetric).validate_python(data), kind)

    def test_binding_plan_lookup(self):
        plan = BindingPlan(
            bindings=frozenset(
                {
                    Binding(interface="p", requirer="a", provider="b#10"),
                    Binding(interface="p", requirer="a", provider="b#2"),
                    Binding(interface="q", requirer="a", provider="c"),
                }
            )
        )
        assert [b.provider for b in plan.on("p")] == ["b#2", "b#10"]
