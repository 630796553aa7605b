"""
Plan the running example deployment and save the results to disk
"""

import json
from pathlib import Path

from python.deploy import fixtures
from python.deploy.formats import PlanFile, dump_configuration, universe_hash, write_json
from python.deploy.model import describe_action
from python.deploy.phase2 import MinimizeCrossNode
from python.deploy.planner import PlanMode, PlannerOptions, PlanResult, plan_deployment


def save_plan_to_disk(name: str, result: PlanResult, output_dir: str = "output") -> list[Path]:
    """Write the plan file, the final configuration and a text summary"""
    out = Path(output_dir)
    out.mkdir(exist_ok=True)
    stem = name.replace(" ", "_")
    universe = fixtures.fig1_universe()

    plan_path = out / f"{stem}_plan.json"
    plan_file = PlanFile(
        universe_hash=universe_hash(universe),
        target=fixtures.FIG1_TARGET,
        status=result.status.value,
        summary=result.summary.model_dump(mode="json"),
        actions=list(result.plan.actions) if result.plan else [],
    )
    write_json(plan_path, plan_file.model_dump(mode="json"))
    print(f"Saved plan to: {plan_path}")

    saved = [plan_path]
    if result.target is not None:
        final_path = out / f"{stem}_final.json"
        write_json(final_path, dump_configuration(result.target))
        print(f"Saved final configuration to: {final_path}")
        saved.append(final_path)

    stats_path = out / f"{stem}_stats.txt"
    summary = result.summary
    with open(stats_path, "w", encoding="utf-8") as f:
        f.write(f"Plan: {name}\n")
        f.write(f"Status: {summary.status.value}\n")
        f.write(f"Cost: {summary.cost}\n")
        f.write(f"Used nodes: {', '.join(summary.used_nodes)}\n")
        f.write(f"Kept initial instances: {summary.kept_instances}\n")
        if summary.metric_value is not None:
            f.write(f"Binding metric: {summary.metric_value}\n")
        f.write("\nActions:\n")
        for index, action in enumerate(result.plan.actions if result.plan else (), start=1):
            f.write(f"  {index:3d}. {describe_action(action)}\n")
    print(f"Saved statistics to: {stats_path}")
    saved.append(stats_path)
    return saved


def main() -> None:
    universe = fixtures.fig1_universe()
    nodes = fixtures.fig1_nodes()
    initial = fixtures.fig1_initial()

    print("Planning from an empty configuration...")
    scratch = plan_deployment(universe, nodes, fixtures.FIG1_TARGET)
    print(f"Status: {scratch.status.value}, cost {scratch.summary.cost}")
    print(json.dumps(scratch.summary.counts, indent=2))
    save_plan_to_disk("Fig1 Scratch", scratch)

    print("\n" + "=" * 50)
    print("Completing the initial configuration incrementally...")
    options = PlannerOptions(mode=PlanMode.INCREMENTAL, metric=MinimizeCrossNode())
    incremental = plan_deployment(universe, nodes, fixtures.FIG1_TARGET, initial, options)
    print(f"Status: {incremental.status.value}, {incremental.summary.actions} actions")
    for action in incremental.plan.actions if incremental.plan else ():
        print(f"  {describe_action(action)}")
    save_plan_to_disk("Fig1 Incremental", incremental)


if __name__ == "__main__":
    main()
