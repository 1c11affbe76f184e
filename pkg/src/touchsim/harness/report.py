"""Offline summary of a recorded bus trace.

Register traffic is attributed to the touch functions the driver found
during its descriptor scan, which the trace itself records. Sandbox
violations are recovered by replaying the trace into a fresh driver: the
full scenario when the header names one, otherwise a single boot.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from ..bus import Kind, Trace, busy_time
from ..controller import PDT_ENTRY_SIZE, FunctionDescriptor, ReplayMiss, is_descriptor_slot
from .scenario import ScenarioScript, ScriptError, World, _execute, replay_scenario


@dataclass
class FunctionWindow:
    function_id: int
    page: int
    bases: tuple[int, ...]  # full query/command/control/data addresses

    @property
    def label(self) -> str:
        return f"0x{self.function_id:02x}"


def functions_in(trace: Trace) -> list[FunctionWindow]:
    """Functions announced by descriptor reads the host actually received."""
    found = []
    for r in trace.records:
        if r.kind is not Kind.READ or r.read_len != PDT_ENTRY_SIZE or not is_descriptor_slot(r.reg_addr):
            continue
        if len(r.data) != PDT_ENTRY_SIZE:
            continue
        d = FunctionDescriptor.from_bytes(r.data)
        if d.terminator:
            continue
        page = r.reg_addr >> 8
        bases = tuple(sorted({page << 8 | a for a in (d.query_addr, d.command_addr, d.control_addr,
                                                      d.data_addr)}))
        found.append(FunctionWindow(d.function_id, page, bases))
    return found


def attribute(reg_addr: int, functions: list[FunctionWindow]) -> str:
    if is_descriptor_slot(reg_addr):
        return "descriptors"
    best, best_base = None, -1
    for fn in functions:
        for base in fn.bases:
            if best_base < base <= reg_addr and reg_addr - base < 0x40:
                best, best_base = fn, base
    return best.label if best is not None else "other"


@dataclass
class TraceSummary:
    scenario: str | None
    profile: str
    seed: int
    records: int
    duration_us: int
    busy_us: int
    sources: dict[str, int]
    per_function: dict[str, dict[str, int]]
    blocked: int
    violations: int | None
    kernel: dict | None = None
    replay: str = ""
    notes: list[str] = field(default_factory=list)

    def to_obj(self) -> dict:
        return {"v": 1, "scenario": self.scenario, "profile": self.profile, "seed": self.seed,
                "records": self.records, "duration_us": self.duration_us, "busy_us": self.busy_us,
                "sources": self.sources, "per_function": self.per_function, "blocked": self.blocked,
                "violations": self.violations, "kernel": self.kernel, "replay": self.replay}

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"trace {self.scenario or '(unnamed)'} profile={self.profile} seed={self.seed}",
                 f"  {self.records} records over {self.duration_us} us, bus busy {self.busy_us} us",
                 "  sources " + ", ".join(f"{k}={v}" for k, v in sorted(self.sources.items()))]
        for fn, counts in sorted(self.per_function.items()):
            lines.append(f"  {fn:<12} reads {counts['R']:>5}  writes {counts['W']:>5}")
        if self.blocked:
            lines.append(f"  firewall blocked {self.blocked}")
        if self.violations is None:
            lines.append(f"  sandbox violations unknown ({self.replay})")
        else:
            lines.append(f"  sandbox violations {self.violations} ({self.replay})")
        if self.kernel:
            flags = ", ".join(f"{k}={v}" for k, v in self.kernel.items() if k != "patched_words")
            lines.append(f"  kernel {flags}")
        return "\n".join(lines)


def _replay_violations(trace: Trace) -> tuple[int | None, dict | None, str]:
    if trace.scenario is not None:
        try:
            _, world = replay_scenario(trace)
            return world.violations, world.kernel.snapshot(), f"scenario {trace.scenario} replayed"
        except ScriptError:
            pass
        except ReplayMiss as exc:
            return None, None, f"replay diverged: {exc}"
    if trace.profile != "synaptics_like":
        return None, None, f"no driver replay for {trace.profile}"
    script = ScenarioScript("trace", [], 1.0, [], profile=trace.profile, seed=trace.seed)
    try:
        world = World(script, seed=trace.seed, replay_of=trace)
        _execute(world)
    except ReplayMiss as exc:
        return None, None, f"replay diverged: {exc}"
    note = "single-boot replay"
    if not world.controller.exhausted:
        note += f", {len(world.controller.records) - world.controller.cursor} reads left unplayed"
    return world.violations, world.kernel.snapshot(), note


def summarize_trace(trace: Trace, replay: bool = True) -> TraceSummary:
    recs = trace.records
    fns = functions_in(trace)
    per_fn: dict[str, Counter] = {}
    for r in recs:
        if r.kind in (Kind.READ, Kind.WRITE):
            per_fn.setdefault(attribute(r.reg_addr, fns), Counter({"R": 0, "W": 0}))[r.kind.value] += 1
    violations, kernel, how = _replay_violations(trace) if replay else (None, None, "not replayed")
    return TraceSummary(
        trace.scenario, trace.profile, trace.seed, len(recs),
        recs[-1].tick - recs[0].tick if recs else 0, busy_time(recs),
        dict(Counter(r.source.value for r in recs)),
        {k: dict(v) for k, v in per_fn.items()},
        sum(r.blocked for r in recs), violations, kernel, how)
