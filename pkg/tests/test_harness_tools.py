import json
import random

import pytest
from conftest import trace_bytes

from touchsim.bus import Trace
from touchsim.harness.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main
from touchsim.harness.fuzz import (
    DescriptorTable, EntityTable, atmel_reference, fuzz, random_descriptor_table, random_entity_table,
    run_atmel_case, run_corpus_item, run_synaptics_case, synaptics_reference,
)
from touchsim.harness.report import attribute, functions_in, summarize_trace


# fuzz ---------------------------------------------------------------------------

def test_corpus_synaptics_1680():
    case = run_corpus_item("synaptics_1680")
    assert case.matches_reference and case.final_count == 1680
    assert case.classification == "irq map overflow"
    assert len(case.overflows) == 106


def test_corpus_atmel_2048():
    case = run_corpus_item("atmel_2048")
    (ov,) = case.overflows
    assert (ov["region"], ov["offset"], ov["len"]) == ("entity_buffer", 80, 1968)
    assert case.crashed and case.matches_reference


def test_unknown_corpus_item():
    with pytest.raises(KeyError):
        run_corpus_item("nope")


@pytest.mark.parametrize("profile", ["synaptics", "atmel"])
def test_benign_generator_is_clean(profile):
    summary = fuzz(profile, seed=1, iterations=1000, benign=True, corpus=False)
    assert summary.violating == [] and summary.mismatches == [] and summary.ok


def test_random_atmel_tables_match_reference():
    summary = fuzz("atmel", seed=3, iterations=200)
    assert summary.mismatches == [] and summary.violating


def test_same_seed_same_summary():
    a = fuzz("synaptics", seed=42, iterations=50).to_json()
    b = fuzz("synaptics", seed=42, iterations=50).to_json()
    assert a == b


def test_fuzz_argument_checks():
    with pytest.raises(ValueError):
        fuzz("synaptics", seed=1, iterations=0)
    with pytest.raises(ValueError):
        fuzz("goodix", seed=1, iterations=1)


def test_reference_and_driver_agree_on_hand_tables():
    rng = random.Random(0)
    for _ in range(20):
        t = random_descriptor_table(rng)
        assert run_synaptics_case(t).matches_reference
        e = random_entity_table(rng)
        assert run_atmel_case(e).matches_reference


def test_reference_boundary_entity_of_81_bytes():
    res = atmel_reference(EntityTable([(9, 0x0140, 81)]))
    (ov,) = res.overflows
    assert (ov["offset"], ov["len"]) == (80, 1) and res.crashed


def test_reference_on_empty_descriptor_table():
    res = synaptics_reference(DescriptorTable([[]]))
    assert res.overflows == [] and res.final_count == 0 and not res.crashed


# report ----------------------------------------------------------------------------

def test_report_attributes_traffic_to_functions(runs):
    _, world = runs.get("selfie")
    fns = functions_in(world.bus.trace)
    assert [f.function_id for f in fns] == [0x01, 0x12, 0x51]
    assert attribute(0x0008, fns) == "0x12"
    assert attribute(0x00E9, fns) == "descriptors"
    summary = summarize_trace(world.bus.trace)
    assert summary.violations == 0 and summary.replay.startswith("scenario selfie")
    assert summary.busy_us == world.bus.busy_ticks
    assert json.loads(summary.to_json())["records"] == len(world.bus.trace.records)


def test_report_recovers_exploit_violations_by_replay(runs):
    _, world = runs.get("exploit")
    summary = summarize_trace(world.bus.trace)
    assert summary.violations == world.violations > 0
    assert summary.kernel["setuid_checks_enabled"] is False


def test_report_single_boot_replay_of_unnamed_trace(runs):
    _, world = runs.get("exploit")
    t = world.bus.trace
    unnamed = Trace(seed=t.seed, profile=t.profile, records=list(t.records))
    summary = summarize_trace(unnamed)
    assert summary.violations == world.violations
    assert summary.replay.startswith("single-boot replay")


def test_report_without_replay():
    s = summarize_trace(Trace(seed=0, profile="atmel_like"), replay=False)
    assert s.violations is None and "unknown" in s.to_text()


# cli --------------------------------------------------------------------------------

def test_cli_run_phishing(capsys):
    assert main(["run", "scenarios/phishing.json"]) == EXIT_OK
    assert "scenario phishing: PASS" in capsys.readouterr().out


def test_cli_run_exploit_behind_firewall(capsys, tmp_path):
    out = tmp_path / "exploit.jsonl"
    assert main(["run", "scenarios/exploit.json", "--firewall", "policies/default.json",
                 "--trace-out", str(out), "--json"]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["blocked"] > 0 and rep["violations"] == 0
    assert main(["replay", str(out)]) == EXIT_OK
    capsys.readouterr()
    assert main(["report", str(out), "--json"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["scenario"] == "exploit" and summary["blocked"] == rep["blocked"]
    assert summary["violations"] == 0


def test_cli_failing_expectation_exits_1(tmp_path):
    script = {"v": 1, "name": "impossible", "budget_seconds": 1,
              "expects": [{"check": "root_shell"}], "steps": [{"action": "wait", "args": {"ms": 5}}]}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(script))
    assert main(["run", str(path)]) == EXIT_FAILED


@pytest.mark.parametrize("argv", [
    ["replay", "missing.file"],
    ["report", "missing.file"],
    ["run", "no_such_scenario"],
    ["run", "phishing", "--firewall", "no_such_policy"],
    ["run", "phishing", "--seed", "-1"],
    ["fuzz", "--profile", "goodix", "--seed", "1", "-n", "1"],
    ["fuzz", "--profile", "synaptics", "--seed", "1", "-n", "0"],
    ["bogus"],
    [],
])
def test_cli_usage_errors_exit_2(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_cli_malformed_trace_exits_2(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"v":1,"seed":1,"profile":"synaptics_like"}\n{"t":')
    assert main(["replay", str(path)]) == EXIT_USAGE


def test_cli_help_exits_0(capsys):
    assert main(["--help"]) == EXIT_OK


def test_cli_fuzz(capsys):
    assert main(["fuzz", "--profile", "atmel", "--seed", "1", "-n", "20", "--json"]) == EXIT_OK
    obj = json.loads(capsys.readouterr().out)
    assert obj["mismatches"] == 0 and obj["iterations"] == 20 and obj["ok"] is True


def test_cli_replay_named_trace(runs, tmp_path, capsys):
    _, world = runs.get("pattern_exfil")
    path = tmp_path / "p.jsonl"
    path.write_bytes(trace_bytes(world.bus.trace))
    assert main(["replay", str(path), "--json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["passed"] is True
