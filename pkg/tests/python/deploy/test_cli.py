import json

import pytest

from python.deploy.cli import (
    EXIT_INTERNAL,
    EXIT_INVALID_INPUT,
    EXIT_NO_PLAN,
    EXIT_OK,
    EXIT_TIMEOUT,
    EXIT_UNPROVEN,
    _STATUS_EXIT,
    build_options,
    build_parser,
    main,
    parse_metric,
)
from python.deploy.errors import InputError, InternalError
from python.deploy.formats import dump_configuration, dump_nodes, dump_universe, write_json
from python.deploy.model import Configuration, MicroserviceType, Universe
from python.deploy.phase2 import MaximizeBindings, NoMetric, WeightedMetric
from python.deploy.planner import PlanMode, PlanStatus
from python.deploy.solver import FORMAT_HEADER, SolveOutcome, SolveStatus


@pytest.fixture
def fig1_dir(tmp_path, capsys):
    """Fixture for a directory holding the generated running example with its initial state"""
    assert main(["gen", "fig1-mini", "--with-initial", "--out", str(tmp_path)]) == EXIT_OK
    capsys.readouterr()
    return tmp_path


def _problem_args(directory, initial=False):
    args = ["--universe", str(directory / "universe.json")]
    args += ["--nodes", str(directory / "nodes.json")]
    if initial:
        args += ["--initial", str(directory / "initial.json")]
    return args


def _plan(directory, *extra):
    out = directory / "plan.json"
    argv = ["plan", *_problem_args(directory), "--target", "MessageReceiver", "--out", str(out)]
    return main(argv + list(extra)), out


@pytest.mark.integration
class TestValidate:
    def test_ok(self, fig1_dir, capsys):
        assert main(["validate", *_problem_args(fig1_dir, initial=True)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "ok: 3 types, 8 nodes, 3 initial instances" in out
        assert "provisionally_correct_only" in out

    def test_strong_cycle(self, tmp_path, fig1_dir, capsys):
        universe = Universe(
            types=(
                MicroserviceType(name="A", strong={"p": 1}, provides={"q": 1}),
                MicroserviceType(name="B", provides={"p": 1}, strong={"q": 1}),
            )
        )
        write_json(tmp_path / "cycle.json", dump_universe(universe))
        argv = ["validate", "--universe", str(tmp_path / "cycle.json")]
        argv += ["--nodes", str(fig1_dir / "nodes.json")]
        assert main(argv) == EXIT_INVALID_INPUT
        out = capsys.readouterr().out
        assert out.startswith("strong dependency cycle: ")
        assert "A" in out and "B" in out

    def test_overloaded_initial(self, tmp_path, ram_universe, ram_node, capsys):
        write_json(tmp_path / "universe.json", dump_universe(ram_universe))
        write_json(tmp_path / "nodes.json", dump_nodes(ram_node))
        config = Configuration(
            type_of={"a": "Big", "b": "Big"}, node_of={"a": "small", "b": "small"}
        )
        write_json(tmp_path / "initial.json", dump_configuration(config))
        assert main(["validate", *_problem_args(tmp_path, initial=True)]) == EXIT_INVALID_INPUT
        assert "node small overloaded on RAM" in capsys.readouterr().out

    def test_missing_file(self, tmp_path, capsys):
        argv = ["validate", "--universe", str(tmp_path / "nope.json")]
        argv += ["--nodes", str(tmp_path / "nope.json")]
        assert main(argv) == EXIT_INVALID_INPUT
        assert capsys.readouterr().err.startswith("error:")

    def test_malformed_json(self, tmp_path, fig1_dir):
        (tmp_path / "bad.json").write_text("[{", encoding="utf-8")
        argv = ["validate", "--universe", str(tmp_path / "bad.json")]
        argv += ["--nodes", str(fig1_dir / "nodes.json")]
        assert main(argv) == EXIT_INVALID_INPUT


@pytest.mark.integration
class TestPlanAndCheck:
    def test_scratch_plan_passes_check(self, fig1_dir, capsys):
        code, out = _plan(fig1_dir)
        assert code == EXIT_OK
        printed = capsys.readouterr().out
        assert "status: optimal" in printed
        assert "cost: 498" in printed

        plan = json.loads(out.read_text(encoding="utf-8"))
        assert len(plan["actions"]) == 9
        assert plan["summary"]["counts"]["MessageAnalyzer"] == 3
        assert plan["target"] == "MessageReceiver"

        assert main(["check", *_problem_args(fig1_dir), "--plan", str(out)]) == EXIT_OK
        assert "valid: 9 steps, final cost 498" in capsys.readouterr().out

    def test_incremental_plan(self, fig1_dir, capsys):
        out = fig1_dir / "incremental.json"
        argv = ["plan", *_problem_args(fig1_dir, initial=True), "--target", "MessageReceiver"]
        argv += ["--mode", "incremental", "--out", str(out)]
        assert main(argv) == EXIT_OK
        kinds = [a["kind"] for a in json.loads(out.read_text(encoding="utf-8"))["actions"]]
        assert sorted(kinds) == ["bind", "bind", "new", "new", "new"]
        check = ["check", *_problem_args(fig1_dir, initial=True), "--plan", str(out)]
        assert main(check) == EXIT_OK

    def test_plan_to_stdout(self, fig1_dir, capsys):
        argv = ["plan", *_problem_args(fig1_dir), "--target", "MessageReceiver"]
        assert main(argv) == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert data["status"] == "optimal"
        assert data["universe_hash"]

    def test_emit_model(self, fig1_dir):
        model_path = fig1_dir / "model" / "phase1.txt"
        code, _ = _plan(fig1_dir, "--emit-model", str(model_path))
        assert code == EXIT_OK
        lines = model_path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == FORMAT_HEADER
        assert "var inst(MessageReceiver) 0 12" in lines

    def test_no_plan(self, tmp_path, fig1_dir, capsys):
        universe = Universe(
            types=(MicroserviceType(name="A", strong={"p": 1}, resources={"CPU": 1}),)
        )
        write_json(tmp_path / "universe.json", dump_universe(universe))
        argv = ["plan", "--universe", str(tmp_path / "universe.json")]
        argv += ["--nodes", str(fig1_dir / "nodes.json"), "--target", "A"]
        assert main(argv) == EXIT_NO_PLAN
        assert capsys.readouterr().out.strip() == "no"

    def test_unknown_target(self, fig1_dir):
        argv = ["plan", *_problem_args(fig1_dir), "--target", "Ghost"]
        assert main(argv) == EXIT_INVALID_INPUT

    def test_bind_on_strong_port(self, fig1_dir, capsys):
        plan = {
            "actions": [
                {"kind": "new", "id": "a", "type": "AttachmentAnalyzer", "node": "xlarge#1"},
                {
                    "kind": "new",
                    "id": "m",
                    "type": "MessageAnalyzer",
                    "node": "xlarge#1",
                    "strong_bindings": {"AA": ["a"]},
                },
                {"kind": "bind", "interface": "AA", "requirer": "m", "provider": "a"},
            ]
        }
        write_json(fig1_dir / "edited.json", plan)
        argv = ["check", *_problem_args(fig1_dir), "--plan", str(fig1_dir / "edited.json")]
        argv += ["--target", "MessageAnalyzer"]
        assert main(argv) == EXIT_NO_PLAN
        out = capsys.readouterr().out
        assert out.startswith("violation at step 3:")
        assert "strong_port_bind" in out

    def test_missing_final_binds(self, fig1_dir, capsys):
        _, out = _plan(fig1_dir)
        plan = json.loads(out.read_text(encoding="utf-8"))
        plan["actions"] = [a for a in plan["actions"] if a["kind"] != "bind"]
        write_json(out, plan)
        capsys.readouterr()
        assert main(["check", *_problem_args(fig1_dir), "--plan", str(out)]) == EXIT_NO_PLAN
        assert "violation at final configuration" in capsys.readouterr().out

    def test_universe_mismatch(self, tmp_path, fig1_dir, ram_universe):
        _, out = _plan(fig1_dir)
        write_json(tmp_path / "other.json", dump_universe(ram_universe))
        argv = ["check", "--universe", str(tmp_path / "other.json")]
        argv += ["--nodes", str(fig1_dir / "nodes.json"), "--plan", str(out)]
        assert main(argv) == EXIT_INVALID_INPUT


@pytest.mark.integration
class TestExitCodes:
    @pytest.mark.slow
    def test_unproven_partition(self, tmp_path, capsys):
        # odd total, so a zero difference can only be ruled out by exhausting the search
        values = [str(v) for v in range(3, 33, 2)]
        assert main(["gen", "partition", "--values", *values, "--out", str(tmp_path)]) == EXIT_OK
        capsys.readouterr()
        argv = ["plan", *_problem_args(tmp_path), "--options", str(tmp_path / "options.json")]
        argv += ["--target", "Partition", "--time-limit", "0.5", "--out", str(tmp_path / "p.json")]
        assert main(argv) == EXIT_UNPROVEN
        assert "status: feasible_unproven" in capsys.readouterr().out
        plan = json.loads((tmp_path / "p.json").read_text(encoding="utf-8"))
        assert plan["status"] == "feasible_unproven"
        assert plan["actions"]

    def test_timeout_without_plan(self, fig1_dir, capsys, monkeypatch):
        def out_of_time(model, budget=None):
            return SolveOutcome(status=SolveStatus.TIMEOUT_NO_SOLUTION)

        monkeypatch.setattr("python.deploy.planner.solve", out_of_time)
        code, out = _plan(fig1_dir, "--time-limit", "0.001")
        assert code == EXIT_TIMEOUT
        printed = capsys.readouterr().out.splitlines()
        assert printed[0] == "timeout: no plan found within the time limit"
        assert "status: timeout" in printed
        plan = json.loads(out.read_text(encoding="utf-8"))
        assert plan["status"] == "timeout"
        assert plan["actions"] == []

    def test_internal_error(self, fig1_dir, capsys, monkeypatch):
        def broken(*args, **kwargs):
            raise InternalError("synthesised plan fails replay")

        monkeypatch.setattr("python.deploy.cli.plan_deployment", broken)
        code, _ = _plan(fig1_dir)
        assert code == EXIT_INTERNAL
        assert "internal error: synthesised plan fails replay" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "status,code",
        [
            (PlanStatus.OPTIMAL, 0),
            (PlanStatus.NO_PLAN, 1),
            (PlanStatus.FEASIBLE_UNPROVEN, 3),
            (PlanStatus.TIMEOUT, 4),
        ],
    )
    def test_status_codes(self, status, code):
        assert _STATUS_EXIT[status] == code

    def test_distinct_codes(self):
        codes = [EXIT_OK, EXIT_NO_PLAN, EXIT_INVALID_INPUT, EXIT_UNPROVEN, EXIT_TIMEOUT]
        assert len(set(codes + [EXIT_INTERNAL])) == 6


@pytest.mark.integration
class TestGen:
    def test_partition_options_drive_the_metric(self, tmp_path, capsys):
        argv = ["gen", "partition", "--values", "1", "2", "3", "--out", str(tmp_path)]
        assert main(argv) == EXIT_OK
        printed = capsys.readouterr().out
        assert "--options" in printed

        options = json.loads((tmp_path / "options.json").read_text(encoding="utf-8"))
        assert options["metric"]["kind"] == "weighted"
        argv = ["plan", *_problem_args(tmp_path), "--options", str(tmp_path / "options.json")]
        argv += ["--target", "Partition", "--out", str(tmp_path / "plan.json")]
        assert main(argv) == EXIT_OK
        assert "binding metric: 0" in capsys.readouterr().out

    def test_binpack(self, tmp_path, capsys):
        argv = ["gen", "binpack", "--sizes", "3", "3", "3", "--capacity", "6"]
        assert main(argv + ["--out", str(tmp_path)]) == EXIT_OK
        argv = ["plan", *_problem_args(tmp_path), "--options", str(tmp_path / "options.json")]
        argv += ["--target", "Packing", "--out", str(tmp_path / "plan.json")]
        assert main(argv) == EXIT_OK
        assert "cost: 2" in capsys.readouterr().out

    @pytest.mark.parametrize(
        "argv",
        [
            ["gen", "partition"],
            ["gen", "binpack", "--sizes", "1", "--capacity", "0"],
            ["gen", "binpack", "--sizes", "1"],
            ["gen", "load-balancer", "--providers", "0"],
        ],
    )
    def test_invalid(self, tmp_path, argv):
        assert main(argv + ["--out", str(tmp_path)]) == EXIT_INVALID_INPUT

    def test_random(self, tmp_path):
        assert main(["gen", "random", "--seed", "3", "--out", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "universe.json").exists()
        assert not (tmp_path / "initial.json").exists()


class TestOptions:
    @pytest.mark.parametrize("text,kind", [("none", NoMetric), ("max-bind", MaximizeBindings)])
    def test_parse_metric(self, text, kind):
        assert isinstance(parse_metric(text), kind)

    def test_weighted_metric_file(self, tmp_path):
        write_json(
            tmp_path / "w.json",
            {"weights": [{"interface": "p", "requirer": "A", "provider": "B", "weight": 2}]},
        )
        metric = parse_metric(f"weighted:{tmp_path / 'w.json'}")
        assert isinstance(metric, WeightedMetric)
        assert metric.weight_of("p", "A", "B") == 2

    def test_unknown_metric(self):
        with pytest.raises(InputError):
            parse_metric("fastest")

    def test_flags_override_options_file(self, tmp_path):
        write_json(
            tmp_path / "options.json",
            {
                "mode": "incremental",
                "seed": 4,
                "bounds": {"A": 1, "B": 2},
                "metric": {"kind": "none"},
            },
        )
        args = build_parser().parse_args(
            [
                "plan",
                "--universe",
                "u.json",
                "--nodes",
                "n.json",
                "--target",
                "A",
                "--options",
                str(tmp_path / "options.json"),
                "--metric",
                "min-cross",
                "--bound",
                "B=5",
            ]
        )
        options = build_options(args)
        assert options.mode == PlanMode.INCREMENTAL
        assert options.seed == 4
        assert options.bounds == {"A": 1, "B": 5}
        assert options.metric.kind == "min-cross"

    def test_defaults(self):
        args = build_parser().parse_args(
            ["plan", "--universe", "u.json", "--nodes", "n.json", "--target", "A"]
        )
        options = build_options(args)
        assert options.mode == PlanMode.SCRATCH
        assert isinstance(options.metric, NoMetric)
        assert options.time_limit is None
