"""End-to-end acceptance checks, one test per criterion.

Each test records its verdict in ``conftest.ACCEPTANCE``; the terminal
summary prints one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import dataclasses
import io
import random
import time

import pytest
from conftest import ACCEPTANCE, trace_bytes

from touchsim.bus import Bus, Kind, Source, busy_time, transfer_time, wire_bytes
from touchsim.controller import (
    STATUS_REG, AtmelController, ControllerProfile, SynapticsController, TouchFrame, TouchPoint,
    TouchState, encode_touch_report, finger_bitmap, is_descriptor_slot,
)
from touchsim.driver import (
    KernelState, PayloadId, SynapticsDriver, atmel_probe, decode_touch,
    default_patch_sites,
)
from touchsim.driver.rop import WRITE_WORD, GadgetCatalog
from touchsim.firewall import Action, History, Policy, evaluate, install
from touchsim.harness.fuzz import fuzz
from touchsim.harness.scenario import SHIPPED_SCENARIOS, ScenarioScript, run_scenario
from touchsim.trace import export_trace, import_trace

TABLE_1 = {
    0x01: (0x3F, 0x36, 0x14, 0x06),
    0x12: (0x5C, 0x00, 0x1B, 0x08),
    0x51: (0x04, 0x00, 0x00, 0x00),
}
CEILING = 0x500


def verdict(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (ok, detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# 1 ---------------------------------------------------------------------------

def test_1_boot_conformance():
    t = time.perf_counter()
    bus = Bus(SynapticsController())
    drv = SynapticsDriver(bus)
    probe = drv.boot_probe()
    elapsed = time.perf_counter() - t
    found = {d.function_id: (d.query_addr, d.command_addr, d.control_addr, d.data_addr)
             for _, d in probe.functions}
    ok = (found == TABLE_1 and len(probe.functions) == 3 and drv.sandbox.violations == 0
          and not probe.crashed and elapsed < 1.0)
    verdict(1, ok, f"functions {sorted(hex(f) for f in found)}, "
                   f"{drv.sandbox.violations} violations, {elapsed * 1000:.1f} ms")


# 2 ---------------------------------------------------------------------------

def _exploit_script(payload: PayloadId) -> ScenarioScript:
    base = ScenarioScript.load("exploit")
    site = default_patch_sites()[payload]
    flag, value = site.sets[0]
    actors = {"exploit": {"payloads": [payload.value], "arm_at_boot": True}}
    expects = [e for e in base.expects if e["check"] != "kernel"]
    expects.append({"check": "kernel", "flag": flag, "equals": value})
    return dataclasses.replace(base, actors=actors, expects=expects, name=f"exploit_{payload.value}")


def _chain_findings(world, payload: PayloadId) -> dict:
    recs = world.bus.trace.records
    genuine = SynapticsController(world.profile)
    site = default_patch_sites()[payload]
    drv = world.driver
    crafted = [r for r in recs if r.kind is Kind.READ and is_descriptor_slot(r.reg_addr)
               and r.data and r.data != genuine.read(r.reg_addr, r.read_len)]
    status_210 = [r for r in recs if r.kind is Kind.READ and r.reg_addr == STATUS_REG
                  and r.read_len == 210]
    order = [k for _, k, _ in drv.log]
    calls = [c for i in drv.interrupts if i.rop is not None for c in i.rop.call_log]
    target = GadgetCatalog.load().symbol(WRITE_WORD)
    flag, value = site.sets[0]
    return {
        "a": bool(crafted) and all(r.reg_addr > CEILING for r in crafted),
        "b": any(o.region == "irq_enable_map" for o in drv.sandbox.overflow_log)
        and "heap_overflow" in order,
        "c": drv.irq_source_count == 1680,
        "d": len(status_210) == 1 and all(r.read_len <= 4 for r in recs
                                          if r.kind is Kind.READ and r.reg_addr == STATUS_REG
                                          and r is not status_210[0]),
        "e": [(c.target, c.arg0, c.arg1) for c in calls] == [(target, site.address, site.word)],
        "f": getattr(world.kernel, flag) == value,
        "order": (order.index("heap_overflow") < order.index("irq_count")
                  < order.index("status_read") < order.index("rop_call") < order.index("kernel_patch")
                  and max(r.tick for r in crafted) < status_210[0].tick) if status_210 and crafted
        and {"heap_overflow", "rop_call", "kernel_patch"} <= set(order) else False,
    }


@pytest.mark.parametrize("payload", list(PayloadId))
def test_2_exploit_chain(payload):
    t = time.perf_counter()
    report, world = run_scenario(_exploit_script(payload))
    elapsed = time.perf_counter() - t
    found = _chain_findings(world, payload)
    failed = [k for k, v in found.items() if not v]
    ok = not failed and report.passed and elapsed < 5.0
    prior = ACCEPTANCE.get(2, (True, ""))
    detail = f"{payload.value}: {'ok' if ok else 'missing ' + ','.join(failed)} in {elapsed:.2f} s"
    ACCEPTANCE[2] = (prior[0] and ok, (prior[1] + "; " if prior[1] else "") + detail)
    print(f"criterion 2 [{payload.value}]: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, (detail, report.to_text())


# 3 ---------------------------------------------------------------------------

def _benign_touch_run(n_events: int, policy: Policy | None, seed: int = 7):
    """Boot the benign stack and deliver ``n_events`` touch frames at human pace."""
    bus = Bus(SynapticsController(), seed=seed)
    fw = install(bus, policy) if policy is not None else None
    delivered = []
    drv = SynapticsDriver(bus, sink=delivered.extend)
    drv.boot_probe()
    rng = random.Random(seed)
    t = bus.now + 1000
    sent = 0
    while sent < n_events:
        x, y = rng.randrange(1440), rng.randrange(2560)
        moves = rng.randrange(0, 4)
        gesture = [TouchState.DOWN] + [TouchState.MOVE] * moves + [TouchState.UP]
        for state in gesture[: n_events - sent]:
            frame = TouchFrame.tap(x, y, state, pressure=0 if state is TouchState.UP else 40)
            bus.sched.call_at(t, lambda f=frame: bus.slave.queue_touch(f))
            t += 12_000 if state is not TouchState.UP else 150_000
            x = min(1439, x + rng.randrange(0, 20))
            sent += 1
    bus.sched.run()
    return bus, fw, drv, delivered


def test_3_firewall_efficacy():
    t = time.perf_counter()
    report, world = run_scenario("exploit", policy="default")
    elapsed = time.perf_counter() - t
    blocks = world.firewall.blocks
    first_block = blocks[0] if blocks else None
    at_descriptor = (first_block is not None and first_block[1].rule_id == "descriptor_above_ceiling"
                     and is_descriptor_slot(first_block[0].reg_addr))
    exploit_ok = (at_descriptor and world.violations == 0 and world.kernel.pristine()
                  and world.kernel.flags() == KernelState().flags())

    # recorded benign boot plus 1000 touch events, judged offline by the policy
    policy = Policy.load("default")
    bus, _, drv, delivered = _benign_touch_run(1000, None)
    history = History(policy.window_us)
    offline = [evaluate(r, policy, history) for r in bus.trace.records
               if r.kind in (Kind.READ, Kind.WRITE, Kind.IRQ_ASSERT, Kind.IRQ_CLEAR)]
    offline_pass = all(v.action is Action.PASS for v in offline)
    # and the same workload live behind the firewall
    _, fw, drv2, delivered2 = _benign_touch_run(1000, policy)
    live_pass = not fw.blocks and len(delivered2) == 1000 and drv2.sandbox.violations == 0
    ok = report.passed and exploit_ok and offline_pass and live_pass and len(delivered) == 1000 and elapsed < 5.0
    verdict(3, ok, f"first block {first_block[1].rule_id if first_block else None}, "
                   f"{world.violations} violations, kernel pristine={world.kernel.pristine()}, "
                   f"benign {sum(v.action is Action.PASS for v in offline)}/{len(offline)} offline pass, "
                   f"{len(delivered2)}/1000 events live")


# 4 ---------------------------------------------------------------------------

def test_4_phishing_timing(runs):
    report, world = runs.get("phishing")
    url = world.ui_state.url_buffer
    ok = report.passed and report.duration_s < 1.0 and url == "bank-login.com"
    verdict(4, ok, f"substitution took {report.duration_s:.3f} s, url_buffer={url!r}")


# 5 ---------------------------------------------------------------------------

def test_5_table_budgets(runs):
    budgets = {"install": 21, "selfie": 14, "pattern_exfil": 16, "full_compromise": 65}
    parts, ok = [], True
    for name, limit in budgets.items():
        report, world = runs.get(name)
        this = report.passed and report.duration_s <= limit
        if name == "pattern_exfil":
            this = this and world.logged_pattern() == list(world.ui_state.unlock_pattern)
        if name == "full_compromise":
            this = (this and world.kernel.selinux_enforcing is False
                    and "root_shell" in world.effect_kinds())
        ok = ok and this
        parts.append(f"{name} {report.duration_s:.2f}/{limit} s {'ok' if this else 'FAIL'}")
    verdict(5, ok, ", ".join(parts))


# 6 ---------------------------------------------------------------------------

def _atmel_profile(last_size: int | None) -> ControllerProfile:
    base = ControllerProfile.load("atmel_like")
    if last_size is None:
        return base
    entities = [dict(e) for e in base.entities]
    entities[-1]["size"] = last_size
    return dataclasses.replace(base, entities=entities)


def test_6_atmel_profile():
    bus = Bus(AtmelController(_atmel_profile(2048)), profile="atmel_like")
    result, sandbox = atmel_probe(bus)
    ov = sandbox.overflow_log
    bad_ok = (len(ov) == 1 and ov[0].offset == 80 and ov[0].length == 1968
              and result.outcome == "DriverCrash")
    bus2 = Bus(AtmelController(_atmel_profile(None)), profile="atmel_like")
    result2, sandbox2 = atmel_probe(bus2)
    benign_ok = sandbox2.violations == 0 and result2.outcome == "ok"
    detail = (f"oversized: {[(o.offset, o.length) for o in ov]} {result.outcome}; "
              f"benign: {sandbox2.violations} violations {result2.outcome}")
    verdict(6, bad_ok and benign_ok, detail)


# 7 ---------------------------------------------------------------------------

def test_7_oracle_equivalence():
    t = time.perf_counter()
    summary = fuzz("synaptics_like", seed=1, iterations=1000)
    elapsed = time.perf_counter() - t
    random_cases = [c for c in summary.cases if c.name == "random"]
    ok = (len(random_cases) >= 1000 and not summary.mismatches and summary.violating
          and elapsed < 60.0)
    verdict(7, ok, f"{len(random_cases)} random tables, {len(summary.violating)} violating, "
                   f"{len(summary.mismatches)} mismatches, {elapsed:.1f} s")


# 8 ---------------------------------------------------------------------------

def _random_frame(rng: random.Random) -> TouchFrame:
    ids = rng.sample(range(10), rng.randrange(0, 11))
    return TouchFrame(tuple(TouchPoint(i, rng.randrange(0x10000), rng.randrange(0x10000),
                                       rng.randrange(256), rng.choice(list(TouchState)))
                            for i in ids))


def test_8_round_trips(shipped_traces):
    rng = random.Random(8)
    frames_ok = 0
    for _ in range(10_000):
        f = _random_frame(rng)
        events = decode_touch(encode_touch_report(f), finger_bitmap(f))
        got = [(e.finger_id, e.x, e.y, e.pressure, e.state) for e in events]
        want = [(p.finger_id, p.x, p.y, p.pressure, p.state) for p in f.sorted_points()]
        frames_ok += got == want
    traces_ok = 0
    for _, trace in shipped_traces:
        text = trace_bytes(trace)
        again = import_trace(io.StringIO(text.decode("utf-8")))
        traces_ok += trace_bytes(again) == text and again.records == trace.records
    determinism = 0
    for name in SHIPPED_SCENARIOS:
        a = trace_bytes(run_scenario(name)[1].bus.trace)
        b = trace_bytes(run_scenario(name)[1].bus.trace)
        determinism += a == b
    ok = frames_ok == 10_000 and traces_ok == len(shipped_traces) and determinism == len(SHIPPED_SCENARIOS)
    verdict(8, ok, f"frames {frames_ok}/10000, traces {traces_ok}/{len(shipped_traces)}, "
                   f"deterministic {determinism}/{len(SHIPPED_SCENARIOS)}")


# 9 ---------------------------------------------------------------------------

def test_9_timing_model(runs, shipped_traces):
    sums_ok = 0
    for label, trace in shipped_traces:
        name, _, fw = label.partition("+")
        world = runs.get(name, "default" if fw else None)[1]
        total = sum(transfer_time(wire_bytes(r)) for r in trace.records)
        sums_ok += total == world.bus.busy_ticks == busy_time(trace.records)
    bus = Bus(SynapticsController())
    before = bus.now
    bus.read_reg(0x0400, 210)
    advance = bus.now - before
    ok = sums_ok == len(shipped_traces) and advance == 4725 and transfer_time(210) == 4725
    verdict(9, ok, f"busy totals agree on {sums_ok}/{len(shipped_traces)} traces, "
                   f"210-byte read advanced {advance} us")


def test_9_every_record_source_is_known(shipped_traces):
    # guard for the criterion above: every record kind is costed by the timing law
    for _, trace in shipped_traces:
        for r in trace.records:
            assert isinstance(r.source, Source)
            assert wire_bytes(r) >= 0


def test_export_to_file_matches_in_memory(tmp_path, runs):
    _, world = runs.get("phishing")
    path = tmp_path / "phishing.jsonl"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        export_trace(world.bus.trace, fh)
    assert path.read_bytes() == trace_bytes(world.bus.trace)
