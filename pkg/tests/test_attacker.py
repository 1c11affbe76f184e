from fractions import Fraction

import pytest

from touchsim.attacker import (
    ChipInTheMiddle, KeyboardMode, KeyStreamDecoder, NoMapping, Trigger, TypingState, UnreachableSymbol,
    decode_key, default_layout, exploit_respond, load_phish_map, logged_touches, plan_keys, plan_taps,
    step_keyboard_mode, step_typing, substitute_url,
)
from touchsim.attacker.exploit import (
    ExploitState, build_overflow_payload, compute_crafted_irq_total, craft_descriptor_set,
    next_irq_count, plan_irq_counts,
)
from touchsim.attacker.keyboard import BACKSPACE, ENTER, Focus, mode_switch
from touchsim.bus import Bus, Kind, Source
from touchsim.controller import (
    STATUS_REG, ControllerProfile, FunctionDescriptor, SynapticsController, TouchFrame, TouchState,
    all_slot_addresses,
)
from touchsim.driver import GadgetCatalog, PayloadId, SynapticsDriver
from touchsim.harness.phone import default_ui

L = KeyboardMode.LETTERS


def center(symbol: str, mode: KeyboardMode = L) -> tuple[int, int]:
    return default_layout().find(symbol, mode).center


# keyboard ----------------------------------------------------------------------

def test_decode_letter_at_its_center():
    assert decode_key(*center("g"), L) == "g"


def test_same_point_in_numbers_mode():
    layout = default_layout()
    x, y = center("g")
    want = next(r.symbol for r in layout.regions[KeyboardMode.NUMBERS] if r.contains(x, y))
    assert decode_key(x, y, KeyboardMode.NUMBERS) == want != "g"


def test_tap_above_keyboard_is_nothing():
    assert decode_key(700, 100, L) is None


@pytest.mark.parametrize("mode, key, after", [
    (L, mode_switch(KeyboardMode.SYMBOLS), KeyboardMode.SYMBOLS),
    (L, "a", L),
    (KeyboardMode.EMOJI, mode_switch(L), L),
    (KeyboardMode.NUMBERS, None, KeyboardMode.NUMBERS),
])
def test_mode_machine(mode, key, after):
    assert step_keyboard_mode(mode, key) is after


def _type(state, text):
    fired = []
    for k in text:
        state, f = step_typing(state, k)
        fired += f
    return state, fired


def test_trigger_fires_on_enter_and_again_after_retyping():
    t = Trigger("bank.com", "phish")
    state = TypingState(triggers=(t,))
    state, fired = _type(state, list("bank.com"))
    assert fired == []
    state, fired = step_typing(state, ENTER)
    assert fired == [t] and state.buffer == ""
    state, _ = _type(state, list("bank.com"))
    assert step_typing(state, ENTER)[1] == [t]


def test_backspace_on_empty_buffer():
    state = TypingState(triggers=(Trigger("", "x"),))
    after, fired = step_typing(state, BACKSPACE)
    assert after == state and fired == []


def test_trigger_respects_focus_and_regex():
    t = Trigger(r"bank\.\w+", "phish", focus=Focus.URL_BAR, regex=True)
    assert t.matches("bank.org", Focus.URL_BAR)
    assert not t.matches("bank.org", Focus.OTHER)


def test_key_stream_decoder_follows_modes():
    dec = KeyStreamDecoder()
    for key, mode in [("a", L), (mode_switch(KeyboardMode.NUMBERS), L),
                      ("1", KeyboardMode.NUMBERS), (BACKSPACE, KeyboardMode.NUMBERS),
                      ("2", KeyboardMode.NUMBERS)]:
        dec.feed(*center(key, mode))
    assert dec.text() == "a2" and dec.mode is KeyboardMode.NUMBERS


# injection plans ---------------------------------------------------------------------

def test_three_letters_take_fifty_ms():
    plan = plan_taps("abc")
    assert plan.taps == 3 and plan.duration == Fraction(3, 60) == Fraction(50, 1000)
    assert plan.keys == ["a", "b", "c"]


def test_letter_digit_needs_mode_switches():
    plan = plan_taps("a1")
    assert plan.taps == 4 and plan.duration == Fraction(4, 60)
    assert plan.keys == ["a", mode_switch(KeyboardMode.NUMBERS), "1", mode_switch(L)]


def test_empty_plan():
    plan = plan_taps("")
    assert plan.taps == 0 and plan.duration == 0 and plan.steps == []


def test_plan_frames_alternate_down_up_half_a_period_apart():
    plan = plan_taps("ab")
    states = [s.frame.points[0].state for s in plan.steps]
    assert states == [TouchState.DOWN, TouchState.UP] * 2
    assert [s.offset for s in plan.steps] == [0, Fraction(1, 120), Fraction(1, 60), Fraction(1, 40)]
    assert plan.schedule_us()[1][0] == 8334


def test_unreachable_symbol():
    with pytest.raises(UnreachableSymbol):
        plan_taps("A")


def test_rate_above_cap_rejected():
    with pytest.raises(ValueError):
        plan_taps("a", rate=61)


def test_phishing_substitution_is_23_taps():
    plan = substitute_url("bank.com", load_phish_map())
    # erase 8, type 14, press Enter
    assert plan.taps == len("bank.com") + len("bank-login.com") + 1 == 23
    assert plan.duration == Fraction(23, 60) < 1
    assert round(float(plan.duration) * 1000) == 383
    assert plan.keys[:8] == [BACKSPACE] * 8 and plan.keys[-1] == ENTER


def test_unmapped_url():
    with pytest.raises(NoMapping):
        substitute_url("example.com", load_phish_map())
    with pytest.raises(NoMapping):
        substitute_url("bank.com", {})


def test_plan_keys_accepts_control_keys():
    plan = plan_keys([ENTER])
    assert plan.taps == 1


# interposer ------------------------------------------------------------------------

def _citm_stack(phish=None):
    ctl = SynapticsController()
    bus = Bus(ctl)
    mitm = ChipInTheMiddle(phish_map=phish)
    bus.install(mitm)
    got = []
    drv = SynapticsDriver(bus, sink=got.extend)
    drv.boot_probe()
    return ctl, bus, mitm, got


def test_config_write_passes_untouched():
    ctl, bus, mitm, _ = _citm_stack()
    before = list(mitm.log)
    bus.write_reg(0x0014, b"\x01")
    assert mitm.log == before
    assert ctl.regs[0x14] == 1 and bus.trace.records[-1].data == b"\x01"


def test_user_touch_is_logged_and_relayed():
    ctl, bus, mitm, got = _citm_stack()
    ctl.queue_touch(TouchFrame.tap(300, 400, TouchState.DOWN))
    bus.sched.run()
    assert len(mitm.log) == 1 and mitm.log[0].events[0].x == 300
    assert [(e.x, e.y) for e in got] == [(300, 400)]


def test_nine_tap_pattern_logged_in_order():
    ctl, bus, mitm, _ = _citm_stack()
    ui = default_ui()
    order = [0, 3, 6, 7, 8, 5, 2, 4, 1]
    t = 0
    for dot in order:
        x, y = ui.dots[dot]
        for state in (TouchState.DOWN, TouchState.UP):
            bus.sched.call_at(t, lambda f=TouchFrame.tap(x, y, state): ctl.queue_touch(f))
            t += 40_000
    bus.sched.run()
    downs = [e for lt in mitm.log for e in lt.events if e.state is TouchState.DOWN]
    assert [ui.dot_at(e.x, e.y) for e in downs] == order


def test_wire_observer_matches_interposer_log():
    ctl, bus, mitm, _ = _citm_stack()
    for i, state in enumerate((TouchState.DOWN, TouchState.MOVE, TouchState.UP)):
        bus.sched.call_at(i * 30_000, lambda s=state: ctl.queue_touch(TouchFrame.tap(50, 60, s)))
    bus.sched.run()
    wire = logged_touches(bus.trace.records)
    assert [lt.events for lt in wire] == [lt.events for lt in mitm.log]


def test_suppressed_user_never_reaches_host():
    ctl, bus, mitm, got = _citm_stack()
    mitm.suppress_user = True
    ctl.queue_touch(TouchFrame.tap(10, 10, TouchState.DOWN))
    bus.sched.run()
    assert len(mitm.log) == 1 and got == []


def test_injected_plan_reaches_driver_at_plan_rate():
    ctl, bus, mitm, got = _citm_stack()
    t0 = bus.now
    plan = plan_taps("hi")
    last = mitm.inject(plan)
    bus.sched.run()
    assert [e.state for e in got] == [TouchState.DOWN, TouchState.UP] * 2
    assert last == t0 + plan.schedule_us()[-1][0] and mitm.injected_frames == 4
    assert all(r.source is Source.INTERPOSER for r in bus.trace.records
               if r.kind is Kind.READ and r.reg_addr == STATUS_REG and r.tick > 0)


# exploit ---------------------------------------------------------------------------

@pytest.mark.parametrize("n, total", [(210, 1680), (4, 32), (1, 8)])
def test_crafted_total(n, total):
    assert compute_crafted_irq_total(n) == total == n * 8


def test_counter_step_reaches_into_its_own_bytes():
    assert next_irq_count(3, 7) == 10
    # bits 32..36 are bits 0..4 of the counter's low byte
    assert next_irq_count(30, 7) == (30 | 0b11111) + 7 == 38


def test_plan_is_shortest_and_lands_on_target():
    counts = plan_irq_counts(3, 1680, 47)
    c = 3
    for n in counts:
        c = next_irq_count(c, n)
    assert c == 1680 and len(counts) == 22
    with pytest.raises(ValueError):
        plan_irq_counts(3, 1680, 21)


def test_crafted_set_uses_high_slots_only():
    crafted = craft_descriptor_set()
    high = [a for a in all_slot_addresses() if a > 0x500]
    assert crafted.slots == tuple(high[:22])
    assert crafted.final_count == 1680 and crafted.initial_count == 3
    assert len(crafted.serialized()) == 22 * 6


def _state(payloads=()):
    profile = ControllerProfile.load("synaptics_like")
    return ExploitState(SynapticsController(profile), craft_descriptor_set(profile),
                        payloads=list(payloads))


def test_low_slots_are_genuine():
    state = _state()
    genuine = SynapticsController()
    assert exploit_respond(0xE9, 6, state) == genuine.read(0xE9, 6)
    assert exploit_respond(0xD7, 6, state) == bytes(6)


def test_high_slot_serves_next_crafted_descriptor():
    state = _state()
    first = state.crafted.descriptors[0]
    got = exploit_respond(0x5E9, 6, state)
    assert FunctionDescriptor.from_bytes(got) == first and state.served_slots == [0x5E9]


def test_triggered_status_read_returns_payload_bytes():
    from collections import deque
    p = build_overflow_payload(PayloadId.DISABLE_SETUID_CHECKS)
    state = _state()
    state.payloads = deque([p])
    state.triggered = True
    assert exploit_respond(STATUS_REG, 210, state) == p.data
    assert state.delivered == [p]


def test_untriggered_long_status_read_keeps_return_path():
    state = _state()
    frame = exploit_respond(STATUS_REG, 210, state)
    lr = int.from_bytes(frame[24:32], "little")
    assert lr == GadgetCatalog.load().symbol("irq_handler_return")
