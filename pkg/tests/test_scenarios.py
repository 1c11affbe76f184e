import dataclasses
import json

import pytest
from conftest import trace_bytes

from touchsim.controller import ReplayMiss, TouchState
from touchsim.driver import TouchEventOut
from touchsim.harness import (
    SHIPPED_SCENARIOS, Effect, PhoneUiState, Screen, ScenarioScript, ScriptError, SystemEvent,
    default_ui, replay_scenario, run_scenario, ui_step,
)
from touchsim.harness.phone import points_to_dots

UI = default_ui()


def tap(target: str, state=TouchState.DOWN) -> TouchEventOut:
    x, y = UI.center(target)
    return TouchEventOut(0, x, y, 40, state)


def drive(state, events, origin=None):
    effects = []
    for ev in events:
        state, eff = ui_step(state, ev, UI, origin)
        effects += eff
    return state, effects


# phone ------------------------------------------------------------------------------

def test_correct_pattern_unlocks():
    dots = PhoneUiState.unlock_pattern
    evs = [TouchEventOut(0, *UI.dots[dots[0]], 40, TouchState.DOWN)]
    evs += [TouchEventOut(0, *UI.dots[d], 40, TouchState.MOVE) for d in dots[1:]]
    evs.append(TouchEventOut(0, *UI.dots[dots[-1]], 0, TouchState.UP))
    state, eff = drive(PhoneUiState(), evs)
    assert state.screen is Screen.HOME and eff == [Effect("unlocked")]


def test_wrong_pattern_stays_locked():
    evs = [TouchEventOut(0, *UI.dots[0], 40, TouchState.DOWN),
           TouchEventOut(0, *UI.dots[1], 0, TouchState.UP)]
    state, eff = drive(PhoneUiState(), evs)
    assert state.screen is Screen.LOCK_PATTERN and eff[0].kind == "unlock_failed"


def test_points_to_dots_dedupes():
    pts = [UI.dots[0], UI.dots[0], (0, 0), UI.dots[4]]
    assert points_to_dots(pts, UI) == [0, 4]


def test_store_accept_installs_app():
    state = dataclasses.replace(PhoneUiState(screen=Screen.PLAY_STORE), store_app="memory cleaner")
    state, eff = drive(state, [tap("PlayStore.install"), tap("PlayStore.accept")])
    assert "memory cleaner" in state.installed_apps
    assert [e.kind for e in eff] == ["permission_prompt", "installed"]


def test_dark_screen_ignores_user_but_not_injection():
    dark = PhoneUiState(screen=Screen.HOME, screen_on=False)
    same, eff = ui_step(dark, tap("Home.Browser"), UI, "user")
    assert same == dark and eff == []
    moved, eff = ui_step(dark, tap("Home.Browser"), UI, "injected")
    assert moved.screen is Screen.BROWSER


def test_system_events():
    s, eff = ui_step(PhoneUiState(screen=Screen.HOME), SystemEvent("blank"))
    assert not s.screen_on and eff == [Effect("screen_off")]
    s, _ = ui_step(s, SystemEvent("lock"))
    assert s.screen is Screen.LOCK_PATTERN
    s, eff = ui_step(dataclasses.replace(s, installed_apps=frozenset({"x"})), SystemEvent("boot"))
    assert s.installed_apps == {"x"} and eff == [Effect("booted")]


def test_typing_into_url_bar():
    state = PhoneUiState(screen=Screen.BROWSER, focus="url")
    keys = [TouchEventOut(0, *UI.keyboard.find(c, state.ime_mode).center, 40, TouchState.DOWN)
            for c in "abc"]
    state, _ = drive(state, keys)
    assert state.url_buffer == "abc"


def test_unknown_event_type():
    with pytest.raises(TypeError):
        ui_step(PhoneUiState(), object())


# shipped scenarios -------------------------------------------------------------------

@pytest.mark.parametrize("name", SHIPPED_SCENARIOS)
def test_shipped_scenario_passes(runs, name):
    report, _ = runs.get(name)
    assert report.passed, report.to_text()
    assert report.duration_s <= report.budget_s


@pytest.mark.parametrize("name", SHIPPED_SCENARIOS)
def test_shipped_scenario_passes_behind_default_firewall(runs, name):
    report, world = runs.get(name, "default")
    assert report.passed, report.to_text()
    assert world.violations == 0 and all(k.pristine() for k in world.kernels)


def test_phishing_window_and_result(runs):
    report, world = runs.get("phishing")
    assert world.ui_state.url_buffer == "bank-login.com"
    assert report.duration_s < 1.0
    kinds = [k for _, k, _ in world.attacker_events()]
    assert kinds[:3] == ["phish_trigger", "phish_start", "phish_done"]
    assert any(e.kind == "navigate" and e.data == ("bank-login.com",) for _, e in world.effects)


def test_pattern_exfil_logs_the_configured_pattern(runs):
    _, world = runs.get("pattern_exfil")
    assert world.logged_pattern() == list(world.ui_state.unlock_pattern)


def test_full_compromise_state(runs):
    report, world = runs.get("full_compromise")
    k = world.kernel
    assert "memory cleaner" in world.ui_state.installed_apps
    assert k.selinux_enforcing is False and k.selinux_reporting is True and k.clear_refs_vulnerable
    assert "root_shell" in world.effect_kinds()
    assert report.duration_s <= 65
    assert len(world.drivers) == 2


def test_seed_override_still_passes():
    a, _ = run_scenario("phishing", seed=100)
    assert a.passed


def test_report_json_is_stable(runs):
    report, _ = runs.get("selfie")
    obj = json.loads(report.to_json())
    assert obj["scenario"] == "selfie" and obj["passed"] is True
    assert {"effect", "budget"} <= {o["check"] for o in obj["outcomes"]}
    assert json.loads(report.to_json()) == obj


# script loading ------------------------------------------------------------------------

def _minimal(**over):
    obj = {"v": 1, "name": "t", "budget_seconds": 1, "expects": [], "steps": [{"action": "wait", "args": {"ms": 1}}]}
    obj.update(over)
    return obj


def test_unknown_action_rejected():
    with pytest.raises(ScriptError):
        ScenarioScript.from_dict(_minimal(steps=[{"action": "teleport"}]))


def test_unsorted_steps_rejected():
    steps = [{"at_ms": 5, "action": "wait"}, {"at_ms": 1, "action": "wait"}]
    with pytest.raises(ScriptError):
        ScenarioScript.from_dict(_minimal(steps=steps))


def test_missing_scenario():
    with pytest.raises(ScriptError):
        ScenarioScript.load("nope")


def test_unknown_check_is_an_error():
    script = ScenarioScript.from_dict(_minimal(expects=[{"check": "telepathy"}]))
    with pytest.raises(ScriptError):
        run_scenario(script)


# replay ---------------------------------------------------------------------------------

@pytest.mark.parametrize("name", SHIPPED_SCENARIOS)
@pytest.mark.parametrize("policy", [None, "default"])
def test_replay_reproduces_trace_and_outcomes(runs, tmp_path, name, policy):
    report, world = runs.get(name, policy)
    path = tmp_path / f"{name}.jsonl"
    path.write_bytes(trace_bytes(world.bus.trace))
    again, replayed = replay_scenario(path)
    assert trace_bytes(replayed.bus.trace) == trace_bytes(world.bus.trace)
    assert again.replayable_view() == report.replayable_view()
    assert again.passed


def test_replay_needs_a_script():
    from touchsim.bus import Trace
    with pytest.raises(ScriptError):
        replay_scenario(Trace(seed=0, profile="synaptics_like"))


def test_replay_of_tampered_trace_diverges(runs):
    from touchsim.bus import Kind, Trace
    _, world = runs.get("exploit")
    recs = list(world.bus.trace.records)
    first_read = next(i for i, r in enumerate(recs) if r.kind is Kind.READ)
    del recs[first_read]
    with pytest.raises(ReplayMiss):
        replay_scenario(Trace(seed=world.seed, profile="synaptics_like", records=recs, scenario="exploit"))
