#!/usr/bin/env python3
"""
Timing of the planning pipeline on the shipped and generated problems.
"""

import argparse
import json
import os
import sys
import time
from typing import Any, Callable

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from python.deploy import fixtures, generators  # noqa: E402
from python.deploy.fixtures import GeneratedProblem  # noqa: E402
from python.deploy.planner import PlanResult, plan_deployment  # noqa: E402


class PlanningBenchmark:
    """Runs the planner on a series of problems and records the timings."""

    def __init__(self) -> None:
        self.results: list[dict[str, Any]] = []

    def measure_time(self, func: Callable[[], PlanResult]) -> tuple[float, PlanResult]:
        start = time.perf_counter()
        result = func()
        return (time.perf_counter() - start) * 1000, result

    def format_time(self, ms: float) -> str:
        if ms < 1000:
            return f"{ms:.1f} ms"
        return f"{ms / 1000:.2f} s"

    def run_problem(self, benchmark: str, label: str, problem: GeneratedProblem) -> None:
        time_ms, result = self.measure_time(
            lambda: plan_deployment(
                problem.universe, problem.nodes, problem.target, problem.initial, problem.options
            )
        )
        summary = result.summary
        elapsed = self.format_time(time_ms)
        print(f"  {label}: {elapsed}, {summary.status.value}, cost {summary.cost}")
        self.results.append(
            {
                "benchmark": benchmark,
                "problem": label,
                "types": len(problem.universe.types),
                "nodes": len(problem.nodes.nodes),
                "time_ms": time_ms,
                "status": summary.status.value,
                "cost": summary.cost,
                "actions": summary.actions,
            }
        )

    def run_running_example(self) -> None:
        print("\nRunning example")
        print("-" * 60)
        self.run_problem("fig1", "scratch", fixtures.fig1_mini())
        self.run_problem("fig1", "from initial", fixtures.fig1_mini(with_initial=True))

    def run_load_balancer(self, sizes: list[int]) -> None:
        print("\nLoad balancer")
        print("-" * 60)
        for k in sizes:
            self.run_problem("load-balancer", f"{k} backends", fixtures.load_balancer(k))

    def run_partition(self, sizes: list[int]) -> None:
        print("\nPartition gadget")
        print("-" * 60)
        for n in sizes:
            values = [(7 * k) % 11 + 1 for k in range(n)]
            self.run_problem("partition", f"{n} values", generators.partition(values))

    def run_random(self, seeds: int) -> None:
        print("\nRandom problems")
        print("-" * 60)
        for seed in range(seeds):
            self.run_problem("random", f"seed {seed}", generators.random_problem(seed))

    def run_email_pipeline(self, loads: list[int], time_limit: float) -> None:
        print(f"\nEmail pipeline ({time_limit:g} s limit per load)")
        print("-" * 60)
        for load in loads:
            problem = fixtures.email_pipeline(load)
            options = problem.options.model_copy(update={"time_limit": time_limit})
            problem = problem.model_copy(update={"options": options})
            self.run_problem("email-pipeline", f"load {load}", problem)

    def save_results(self, filename: str) -> None:
        with open(filename, "w", encoding="utf-8") as f:
            json.dump(self.results, f, indent=2)
        print(f"\nResults saved to {filename}")


def main() -> int:
    parser = argparse.ArgumentParser(description="Planning pipeline benchmarks")
    parser.add_argument("--quick", action="store_true", help="skip the email pipeline")
    parser.add_argument("--output", default="benchmark_results_planning.json")
    parser.add_argument(
        "--time-limit",
        type=float,
        default=60.0,
        help="seconds per email pipeline load; larger loads stop as feasible_unproven",
    )
    args = parser.parse_args()

    benchmark = PlanningBenchmark()
    benchmark.run_running_example()
    benchmark.run_load_balancer([1, 3, 5, 8])
    benchmark.run_partition([3, 5, 7])
    benchmark.run_random(10)
    if not args.quick:
        benchmark.run_email_pipeline([10, 30], args.time_limit)
    benchmark.save_results(args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
