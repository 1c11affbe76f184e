"""Scripted end-to-end runs of the attacks against the simulated phone.

A script is a list of timed steps (user gestures, attacker actions and
system events) plus expectations checked at the end. The world wires a
bus, a controller, the driver, the phone UI and whichever attacker parts
the script arms, optionally with a firewall on the host side.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from ..attacker.exploit import BENIGN_CEILING, ExploitPersona
from ..attacker.injection import (
    InjectionPlan, load_phish_map, plan_keys, plan_points, plan_stroke,
)
from ..attacker.interposer import ChipInTheMiddle
from ..bus import Bus, Kind, Source, Trace, transfer_time, wire_bytes
from ..controller import (
    PDT_ENTRY_SIZE, STATUS_REG, ControllerProfile, ReplayController, SynapticsController,
    TouchFrame, TouchState, is_descriptor_slot, load_json_resource,
)
from ..driver.driver import DriverProfile, SynapticsDriver, TouchEventOut
from ..driver.kernel import KernelState, PayloadId
from ..driver.rop import WRITE_WORD, GadgetCatalog
from ..firewall import Firewall, Policy, install
from ..trace import export_trace, import_trace
from .phone import Effect, PhoneUiState, Screen, SystemEvent, default_ui, points_to_dots, ui_step

US = 1_000_000
BOOT_DURATION_US = 20 * US
PROBE_DELAY_US = 2 * US
AUTOSTART_DELAY_US = 3 * US
USER_DWELL_US = 80_000
CLEAR_REFS = "/prof/self/clear_refs"


class ScriptError(ValueError):
    pass


@dataclass(frozen=True)
class Step:
    action: str
    args: dict
    at_ms: float | None = None
    after_ms: float = 0.0


@dataclass
class ScenarioScript:
    name: str
    steps: list[Step]
    budget_seconds: float
    expects: list[dict]
    expects_with_firewall: list[dict] | None = None
    actors: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    profile: str = "synaptics_like"
    seed: int = 0
    budget_strict: bool = False
    window: str = "run"
    source: str | None = None

    @classmethod
    def from_dict(cls, obj: dict, source: str | None = None) -> "ScenarioScript":
        from ..schemas import SchemaError, validate
        try:
            validate(obj, "scenario")
        except SchemaError as exc:
            raise ScriptError(str(exc)) from None
        steps = [Step(s["action"], dict(s.get("args", {})), s.get("at_ms"), s.get("after_ms", 0.0))
                 for s in obj["steps"]]
        last = -1.0
        for s in steps:
            if s.action not in ACTIONS:
                raise ScriptError(f"unknown action {s.action!r}")
            if s.at_ms is not None:
                if s.at_ms < last:
                    raise ScriptError("steps must be sorted by at_ms")
                last = s.at_ms
        return cls(obj["name"], steps, float(obj["budget_seconds"]), list(obj["expects"]),
                   obj.get("expects_with_firewall"), dict(obj.get("actors", {})),
                   dict(obj.get("initial", {})), obj.get("profile", "synaptics_like"),
                   int(obj.get("seed", 0)), bool(obj.get("budget_strict", False)),
                   obj.get("window", "run"), source)

    @classmethod
    def load(cls, name_or_path: str | Path) -> "ScenarioScript":
        p = Path(name_or_path)
        try:
            if p.exists():
                obj = json.loads(p.read_text(encoding="utf-8"))
            else:
                obj = load_json_resource("scenarios", p.stem + ".json")
        except FileNotFoundError:
            raise ScriptError(f"no scenario {name_or_path}") from None
        except json.JSONDecodeError as exc:
            raise ScriptError(f"{name_or_path}: {exc}") from None
        return cls.from_dict(obj, str(name_or_path))


SHIPPED_SCENARIOS = ("install", "selfie", "phishing", "pattern_exfil", "full_compromise", "exploit")


class World:
    """Everything one run needs, built from a script."""

    def __init__(self, script: ScenarioScript, *, policy: Policy | None = None,
                 seed: int | None = None, replay_of: Trace | None = None):
        self.script = script
        self.seed = script.seed if seed is None else seed
        self.rng = random.Random(self.seed)
        self.profile = ControllerProfile.load(script.profile)
        self.ui = default_ui()
        self.catalog = GadgetCatalog.load()
        self.replaying = replay_of is not None
        if replay_of is None:
            self.controller = SynapticsController(self.profile)
        else:
            self.controller = ReplayController(replay_of)
        self.bus = Bus(self.controller, slave_addr=self.profile.slave_addr, seed=self.seed,
                       profile=self.profile.name)
        self.bus.trace.scenario = script.name
        self.firewall: Firewall | None = None
        self.mitm: ChipInTheMiddle | None = None
        self.persona: ExploitPersona | None = None
        if not self.replaying:
            if policy is not None:
                self.firewall = install(self.bus, policy)
                self.bus.trace.policy = policy.name
            exploit = script.actors.get("exploit")
            if exploit is not None:
                payloads = [PayloadId(p) for p in exploit.get("payloads", ["DisableSetuidChecks"])]
                self.persona = ExploitPersona(payloads, self.profile, self.catalog)
                self.bus.install(self.persona)
                if exploit.get("arm_at_boot"):
                    self.persona.arm()
            mitm = script.actors.get("mitm")
            if mitm is not None:
                phish = load_phish_map(mitm["phish_map"]) if mitm.get("phish_map") not in (None, "default") \
                    else load_phish_map()
                self.mitm = ChipInTheMiddle(self.ui.keyboard, phish if mitm.get("phishing", False) else {})
                self.bus.install(self.mitm)
        else:
            self.bus.trace.policy = replay_of.policy
            self._schedule_replay(replay_of)
        init = script.initial
        self.ui_state = PhoneUiState(
            screen=Screen(init.get("screen", "Home")),
            screen_on=init.get("screen_on", True),
            focus=init.get("focus", "url" if init.get("screen") == "Browser" else None),
            installed_apps=frozenset(init.get("installed_apps", [])),
            unlock_pattern=tuple(init.get("unlock_pattern", PhoneUiState.unlock_pattern)),
        )
        self.effects: list[tuple[int, Effect]] = []
        self.kernels: list[KernelState] = []
        self.drivers: list[SynapticsDriver] = []
        self.step_log: list[tuple[int, str]] = []
        self._start_driver()

    # plumbing ---------------------------------------------------------------

    @property
    def now(self) -> int:
        return self.bus.now

    @property
    def driver(self) -> SynapticsDriver:
        return self.drivers[-1]

    @property
    def kernel(self) -> KernelState:
        return self.kernels[-1]

    def _schedule_replay(self, trace: Trace) -> None:
        """Edges recorded right as a read finished are re-raised by that read;
        the rest are replayed at their recorded tick, as are power cuts made
        by something other than the host."""
        reads = -1
        read_end = None
        for rec in trace.records:
            if rec.kind in (Kind.POWER_OFF, Kind.POWER_ON) and rec.source is not Source.DRIVER:
                if rec.tick <= self.now:
                    self.bus.record(rec)
                else:
                    self.bus.sched.call_at(rec.tick, lambda r=rec: self.bus.record(r))
                continue
            if rec.kind is Kind.READ:
                reads += 1
                read_end = rec.tick + transfer_time(wire_bytes(rec))
                continue
            if rec.kind not in (Kind.IRQ_ASSERT, Kind.IRQ_CLEAR):
                read_end = None
                continue
            edge = (rec.kind is Kind.IRQ_ASSERT, rec.source)
            if read_end is not None and rec.tick == read_end:
                self.controller.irq_after.setdefault(reads, []).append(edge)
            else:
                self.bus.sched.call_at(rec.tick, lambda e=edge: self.bus.set_irq(*e))

    def _start_driver(self) -> None:
        self.kernels.append(KernelState())
        drv = SynapticsDriver(self.bus, DriverProfile.from_controller_profile(self.profile), catalog=self.catalog,
                              kernel=self.kernels[-1], embedded_firmware=self.profile.firmware_version,
                              sink=self._deliver)
        self.drivers.append(drv)
        drv.boot_probe()

    def _deliver(self, events: list[TouchEventOut]) -> None:
        origin = None
        if self.mitm is not None:
            origin = self.mitm.frame_origin
        elif not self.replaying:
            origin = "user"
        for ev in events:
            self._ui(ev, origin)

    def _ui(self, event, origin=None) -> None:
        self.ui_state, effects = ui_step(self.ui_state, event, self.ui, origin)
        for e in effects:
            self.effects.append((self.now, e))

    def _system(self, kind: str) -> None:
        self._ui(SystemEvent(kind))

    # gestures ------------------------------------------------------------------

    def _point(self, args: dict) -> tuple[int, int]:
        if "target" in args:
            return self.ui.center(args["target"])
        return int(args["x"]), int(args["y"])

    def _user_frames(self, frames: list[tuple[int, TouchFrame]]) -> int:
        start = self.now
        for off, frame in frames:
            if not self.replaying:
                self.bus.sched.call_at(start + off, lambda f=frame: self._user_touch(f))
        return start + (frames[-1][0] if frames else 0)

    def _user_touch(self, frame: TouchFrame) -> None:
        if getattr(self.controller, "powered", False):
            self.controller.queue_touch(frame)

    def _user_keys(self, keys: list[str], interval_ms: float) -> int:
        frames, t = [], 0
        mode_plan = plan_keys(keys, self.ui.keyboard, rate=1)
        for down in mode_plan.steps[::2]:  # steps alternate finger-down, finger-up
            p = down.frame.points[0]
            frames.append((t, TouchFrame.tap(p.x, p.y, TouchState.DOWN)))
            frames.append((t + USER_DWELL_US, TouchFrame.tap(p.x, p.y, TouchState.UP, pressure=0)))
            jitter = self.rng.uniform(0.8, 1.2)
            t += int(interval_ms * 1000 * jitter)
        return self._user_frames(frames)

    def _inject(self, plan: InjectionPlan) -> int:
        if self.mitm is None:
            # replay: keep the clock arithmetic identical to the live run
            return self.now + (plan.schedule_us()[-1][0] if plan.steps else 0)
        return self.mitm.inject(plan)

    # actions -----------------------------------------------------------------------

    def do(self, step: Step) -> int:
        self.step_log.append((self.now, step.action))
        return ACTIONS[step.action](self, step.args)

    def a_user_tap(self, args):
        x, y = self._point(args)
        return self._user_frames([(0, TouchFrame.tap(x, y, TouchState.DOWN)),
                                  (USER_DWELL_US, TouchFrame.tap(x, y, TouchState.UP, pressure=0))])

    def a_user_type(self, args):
        return self._user_keys(list(args["text"]), args.get("interval_ms", 250))

    def a_user_key(self, args):
        return self._user_keys([args["key"]], args.get("interval_ms", 250))

    def a_user_pattern(self, args):
        dots = args.get("pattern", list(self.ui_state.unlock_pattern))
        step_us = int(args.get("interval_ms", 150) * 1000)
        frames = []
        for i, d in enumerate(dots):
            x, y = self.ui.dots[d]
            frames.append((i * step_us, TouchFrame.tap(x, y, TouchState.DOWN if i == 0 else TouchState.MOVE)))
        x, y = self.ui.dots[dots[-1]]
        frames.append((len(dots) * step_us, TouchFrame.tap(x, y, TouchState.UP, pressure=0)))
        return self._user_frames(frames)

    def a_inject_tap(self, args):
        return self._inject(plan_points([self._point(args)]))

    def a_inject_taps(self, args):
        return self._inject(plan_points([self.ui.center(t) for t in args["targets"]]))

    def a_inject_text(self, args):
        keys = list(args["text"]) + (["{Enter}"] if args.get("enter") else [])
        return self._inject(plan_keys(keys, self.ui.keyboard))

    def a_inject_key(self, args):
        return self._inject(plan_keys([args["key"]], self.ui.keyboard))

    def a_inject_pattern(self, args):
        dots = args.get("pattern")
        if dots is None:
            dots = self.logged_pattern()
        return self._inject(plan_stroke([self.ui.dots[d] for d in dots]))

    def a_exfil_pattern(self, args):
        """Redraw the logged unlock pattern on the whiteboard canvas."""
        dots = self.logged_pattern() if not self.replaying else list(self.ui_state.unlock_pattern)
        x0, y0, x1, y1 = self.ui.targets["Browser"]["canvas"]
        cw, ch = (x1 - x0) // 4, (y1 - y0) // 4
        pts = [(x0 + cw * (1 + d % 3), y0 + ch * (1 + d // 3)) for d in dots]
        return self._inject(plan_stroke(pts))

    def a_blank_screen(self, args):
        self._system("blank")
        return self.now

    def a_unblank_screen(self, args):
        self._system("unblank")
        return self.now

    def a_lock(self, args):
        self._system("lock")
        return self.now

    def a_suppress_user(self, args):
        if self.mitm is not None:
            self.mitm.suppress_user = bool(args.get("on", True))
        return self.now

    def a_arm_exploit(self, args):
        if self.persona is not None:
            self.persona.arm()
        return self.now

    def a_reboot(self, args):
        self.bus.on_interrupt(None)
        self.bus.power(False)
        self.bus.power(True)
        if args.get("arm_exploit") and self.persona is not None:
            self.persona.arm()
        self._system("boot")
        t0 = self.now
        self.bus.sched.call_at(t0 + PROBE_DELAY_US, self._start_driver)
        self.bus.sched.call_at(t0 + BOOT_DURATION_US, lambda: self._ui_effect("boot_complete"))
        for app in sorted(self.ui_state.installed_apps):
            self.bus.sched.call_at(t0 + BOOT_DURATION_US + AUTOSTART_DELAY_US,
                                   lambda a=app: self._autostart(a))
        return t0 + BOOT_DURATION_US + AUTOSTART_DELAY_US

    def a_wait(self, args):
        return self.now + int(args.get("ms", 0) * 1000)

    def _ui_effect(self, kind: str, *data) -> None:
        self.effects.append((self.now, Effect(kind, tuple(data))))

    def _autostart(self, app: str) -> None:
        """The installed app pokes clear_refs; it only gains root on a backdoored kernel."""
        self._ui_effect("app_started", app)
        self._ui_effect("syscall", app, CLEAR_REFS)
        if self.kernel.clear_refs_vulnerable:
            self._ui_effect("root_shell", app)

    # derived views ---------------------------------------------------------------------

    def logged_pattern(self) -> list[int]:
        if self.mitm is None:
            return []
        pts = [(e.x, e.y) for lt in self.mitm.log for e in lt.events
               if e.state in (TouchState.DOWN, TouchState.MOVE)
               and self.ui.dot_at(e.x, e.y) is not None]
        return points_to_dots(pts, self.ui)

    def attacker_events(self) -> list[tuple[int, str, dict]]:
        evs = []
        for actor in (self.mitm, self.persona):
            if actor is not None:
                evs.extend(actor.events)
        return sorted(evs, key=lambda e: e[0])

    @property
    def violations(self) -> int:
        return sum(d.sandbox.violations for d in self.drivers)

    def effect_kinds(self) -> list[str]:
        return [e.kind for _, e in self.effects]


ACTIONS = {name[2:]: fn for name, fn in vars(World).items() if name.startswith("a_")}


# -- expectations ----------------------------------------------------------------

def _calls(world: World) -> list[dict]:
    out = []
    for d in world.drivers:
        for r in d.interrupts:
            if r.rop is not None:
                out.extend({"target": c.target, "arg0": c.arg0, "arg1": c.arg1} for c in r.rop.call_log)
    return out


def _descriptor_reads(world: World) -> list:
    return [r for r in world.bus.trace.records
            if r.kind is Kind.READ and r.read_len == PDT_ENTRY_SIZE and r.reg_addr > BENIGN_CEILING]


# checks that can be judged from the host-side trace, driver, kernel and UI alone
REPLAYABLE = {"screen", "url_buffer", "installed", "effect", "no_effect", "kernel", "kernel_pristine",
              "violations", "root_shell", "irq_source_count", "status_read_len", "rop_calls",
              "crafted_descriptors", "descriptor_blocked", "exfil_pattern"}


def check(world: World, exp: dict, duration_s: float) -> tuple[bool, str]:
    kind = exp["check"]
    st = world.ui_state
    if kind == "screen":
        return st.screen.value == exp["equals"], st.screen.value
    if kind == "url_buffer":
        return st.url_buffer == exp["equals"], st.url_buffer
    if kind == "installed":
        return exp["app"] in st.installed_apps, ",".join(sorted(st.installed_apps))
    if kind == "effect":
        found = [e for _, e in world.effects if e.kind == exp["kind"]]
        if "data" in exp:
            found = [e for e in found if list(e.data) == exp["data"]]
        return bool(found), f"{len(found)} {exp['kind']}"
    if kind == "no_effect":
        n = world.effect_kinds().count(exp["kind"])
        return n == 0, f"{n} {exp['kind']}"
    if kind == "root_shell":
        return "root_shell" in world.effect_kinds(), "present" if "root_shell" in world.effect_kinds() else "absent"
    if kind == "kernel":
        value = getattr(world.kernel, exp["flag"])
        return value == exp["equals"], f"{exp['flag']}={value}"
    if kind == "kernel_pristine":
        ok = all(k.pristine() for k in world.kernels)
        return ok, "pristine" if ok else "patched"
    if kind == "violations":
        v = world.violations
        ok = exp.get("min", 0) <= v <= exp.get("max", v)
        return ok, str(v)
    if kind == "irq_source_count":
        v = world.driver.irq_source_count
        return v == exp["equals"], str(v)
    if kind == "status_read_len":
        lens = [r.read_len for r in world.bus.trace.records
                if r.kind is Kind.READ and r.reg_addr == STATUS_REG and not r.blocked]
        n = lens.count(exp["equals"])
        return n == exp.get("count", 1), f"{n} reads of {exp['equals']} bytes"
    if kind == "rop_calls":
        calls = _calls(world)
        target = world.catalog.symbol(WRITE_WORD)
        ok = len(calls) == exp.get("count", 1) and all(c["target"] == target for c in calls)
        return ok, f"{len(calls)} calls"
    if kind == "crafted_descriptors":
        served = [r for r in _descriptor_reads(world) if any(r.data)]
        genuine = SynapticsController(world.profile)
        forged_low = [r for r in world.bus.trace.records
                      if r.kind is Kind.READ and r.reg_addr <= BENIGN_CEILING and r.data
                      and is_descriptor_slot(r.reg_addr)
                      and r.data != genuine.read(r.reg_addr, r.read_len)]
        ok = bool(served) and len(served) == exp.get("count", len(served)) and not forged_low
        return ok, f"{len(served)} crafted above, {len(forged_low)} forged below"
    if kind == "descriptor_blocked":
        blocked = [r for r in _descriptor_reads(world) if r.blocked]
        return bool(blocked), f"{len(blocked)} blocked"
    if kind == "logged_pattern":
        got = world.logged_pattern()
        return got == list(st.unlock_pattern), str(got)
    if kind == "exfil_pattern":
        strokes = [e.data for _, e in world.effects if e.kind == "whiteboard_stroke"]
        if not strokes:
            return False, "nothing drawn"
        x0, y0, x1, y1 = world.ui.targets["Browser"]["canvas"]
        cw, ch = (x1 - x0) // 4, (y1 - y0) // 4
        dots = [((y - y0) // ch - 1) * 3 + ((x - x0) // cw - 1) for x, y in strokes[-1]]
        return dots == list(st.unlock_pattern), str(dots)
    if kind == "phish_done":
        kinds = [k for _, k, _ in world.attacker_events()]
        return "phish_done" in kinds, ",".join(kinds)
    if kind == "duration_lt":
        return duration_s < exp["seconds"], f"{duration_s:.3f}s"
    if kind == "duration_le":
        return duration_s <= exp["seconds"], f"{duration_s:.3f}s"
    raise ScriptError(f"unknown check {kind!r}")


# -- reports ----------------------------------------------------------------------

@dataclass
class Outcome:
    check: str
    passed: bool
    detail: str
    expect: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {"check": self.check, "passed": self.passed, "detail": self.detail, "expect": self.expect}


@dataclass
class Report:
    scenario: str
    outcomes: list[Outcome]
    duration_s: float
    budget_s: float
    window: tuple[int, int]
    violations: int
    kernel: dict
    ui: dict
    effects: list[dict]
    trace_path: str | None = None
    firewall: str | None = None
    blocked: int = 0

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.outcomes)

    def replayable_view(self) -> dict:
        return {"ui": self.ui, "kernel": self.kernel, "violations": self.violations,
                "outcomes": [(o.check, o.passed) for o in self.outcomes if o.check in REPLAYABLE]}

    def to_obj(self) -> dict:
        return {"v": 1, "scenario": self.scenario, "passed": self.passed,
                "duration_s": self.duration_s, "budget_s": self.budget_s,
                "window_us": list(self.window), "violations": self.violations,
                "kernel": self.kernel, "ui": self.ui, "effects": self.effects,
                "outcomes": [o.to_obj() for o in self.outcomes], "trace": self.trace_path,
                "firewall": self.firewall, "blocked": self.blocked}

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"scenario {self.scenario}: {'PASS' if self.passed else 'FAIL'}",
                 f"  duration {self.duration_s:.3f} s (budget {self.budget_s:g} s)",
                 f"  sandbox violations {self.violations}"]
        if self.firewall:
            lines.append(f"  firewall {self.firewall}: {self.blocked} blocked")
        flags = ", ".join(f"{k}={v}" for k, v in self.kernel.items() if k != "patched_words")
        lines.append(f"  kernel {flags}")
        for o in self.outcomes:
            lines.append(f"  [{'ok' if o.passed else 'FAIL'}] {o.check}: {o.detail}")
        if self.trace_path:
            lines.append(f"  trace {self.trace_path}")
        return "\n".join(lines)


def _execute(world: World) -> None:
    end = world.now
    for step in world.script.steps:
        start = int(step.at_ms * 1000) if step.at_ms is not None else end + int(step.after_ms * 1000)
        # a step runs ahead of anything else due at its start tick
        world.bus.sched.run(until=max(start, world.now), inclusive=False)
        end = max(world.do(step), world.now)
    world.bus.sched.run()


def _window(world: World, t0: int) -> tuple[int, int]:
    if world.script.window == "attack":
        evs = [t for t, k, _ in world.attacker_events() if k != "armed"]
        if evs:
            return evs[0], evs[-1]
    return t0, world.now


def _report(world: World, t0: int, policy: Policy | None, trace_path: str | None,
            firewalled: bool | None = None) -> Report:
    window = _window(world, t0)
    duration = (window[1] - window[0]) / US
    script = world.script
    expects = script.expects
    if firewalled is None:
        firewalled = policy is not None
    if firewalled and script.expects_with_firewall is not None:
        expects = script.expects_with_firewall
    outcomes = []
    for exp in expects:
        if world.replaying and exp["check"] not in REPLAYABLE:
            continue
        ok, detail = check(world, exp, duration)
        outcomes.append(Outcome(exp["check"], bool(ok), detail, dict(exp)))
    if not world.replaying:
        within = duration < script.budget_seconds if script.budget_strict else duration <= script.budget_seconds
        rel = "<" if script.budget_strict else "<="
        outcomes.append(Outcome("budget", within, f"{duration:.3f}s {rel} {script.budget_seconds:g}s"))
    return Report(script.name, outcomes, duration, script.budget_seconds, window, world.violations,
                  world.kernel.snapshot(), world.ui_state.snapshot(),
                  [{"t": t, **e.to_obj()} for t, e in world.effects], trace_path,
                  policy.name if policy is not None else None,
                  len(world.firewall.blocks) if world.firewall is not None else 0)


def run_scenario(script: ScenarioScript | str | Path, *, policy: Policy | str | Path | None = None,
                 seed: int | None = None, trace_out: str | Path | None = None) -> tuple[Report, World]:
    if not isinstance(script, ScenarioScript):
        script = ScenarioScript.load(script)
    if policy is not None and not isinstance(policy, Policy):
        policy = Policy.load(policy)
    world = World(script, policy=policy, seed=seed)
    t0 = world.now
    _execute(world)
    path = None
    if trace_out is not None:
        path = str(trace_out)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            export_trace(world.bus.trace, fh)
    return _report(world, t0, policy, path), world


def replay_scenario(trace: Trace | str | Path,
                    script: ScenarioScript | str | Path | None = None) -> tuple[Report, World]:
    """Re-drive the driver and UI from a recorded trace instead of live devices.

    Without ``script`` the scenario named in the trace header is used.
    """
    if not isinstance(trace, Trace):
        trace = import_trace(trace)
    if script is None:
        if trace.scenario is None:
            raise ScriptError("trace does not name its scenario")
        script = trace.scenario
    if not isinstance(script, ScenarioScript):
        script = ScenarioScript.load(script)
    world = World(script, seed=trace.seed, replay_of=trace)
    t0 = world.now
    _execute(world)
    return _report(world, t0, None, None, firewalled=trace.policy is not None), world
