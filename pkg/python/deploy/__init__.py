from .errors import (
    ActionError,
    ActionErrorKind,
    BoundsError,
    DeploymentError,
    InputError,
    InternalError,
    ModelError,
    OracleOverflow,
)
from .model import (
    Action,
    Bind,
    Binding,
    Configuration,
    CorrectnessReport,
    Del,
    DeploymentPlan,
    MicroserviceType,
    New,
    Node,
    NodePool,
    Unbind,
    Universe,
    Verdict,
    Violation,
    ViolationKind,
    apply_action,
    check_correct,
    check_provisional,
    check_universe,
    config_cost,
    interfaces_of,
)
from .phase1 import (
    InstanceBounds,
    InstancePlan,
    derive_bounds,
    encode_phase1,
    extract_instance_plan,
)
from .phase2 import (
    BindingPlan,
    MaximizeBindings,
    MinimizeCrossNode,
    NoMetric,
    PlacedInstance,
    WeightedMetric,
    encode_phase2,
    extract_binding_plan,
    materialize_instances,
)
from .phase3 import assemble_target, synthesize_incremental, synthesize_scratch
from .planner import PlanMode, PlannerOptions, PlanResult, PlanStatus, plan_deployment
from .solver import Model, SolveBudget, SolveOutcome, SolveStatus, evaluate, export_model, solve
from .verifier import PlanTrace, brute_force_oracle, check_problem_output, run_plan

__all__ = [
    "DeploymentError",
    "InputError",
    "BoundsError",
    "ModelError",
    "ActionError",
    "ActionErrorKind",
    "OracleOverflow",
    "InternalError",
    "MicroserviceType",
    "Node",
    "NodePool",
    "Universe",
    "Binding",
    "Configuration",
    "Bind",
    "Unbind",
    "New",
    "Del",
    "Action",
    "DeploymentPlan",
    "Violation",
    "ViolationKind",
    "Verdict",
    "CorrectnessReport",
    "interfaces_of",
    "check_universe",
    "check_provisional",
    "check_correct",
    "apply_action",
    "config_cost",
    "Model",
    "SolveBudget",
    "SolveOutcome",
    "SolveStatus",
    "solve",
    "evaluate",
    "export_model",
    "InstanceBounds",
    "InstancePlan",
    "derive_bounds",
    "encode_phase1",
    "extract_instance_plan",
    "PlacedInstance",
    "BindingPlan",
    "NoMetric",
    "MinimizeCrossNode",
    "MaximizeBindings",
    "WeightedMetric",
    "materialize_instances",
    "encode_phase2",
    "extract_binding_plan",
    "assemble_target",
    "synthesize_scratch",
    "synthesize_incremental",
    "PlanTrace",
    "run_plan",
    "check_problem_output",
    "brute_force_oracle",
    "PlanMode",
    "PlannerOptions",
    "PlanResult",
    "PlanStatus",
    "plan_deployment",
]
