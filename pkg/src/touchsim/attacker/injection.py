"""Touch injection planning.

A plan is a sequence of tap slots at a fixed rate. Each slot holds a
finger-down frame at its start and a finger-up frame half a period later.
Times are exact fractions of a second so the rate law can be checked
without rounding noise; ``schedule_us`` converts them to bus ticks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from ..controller import TouchFrame, TouchState, load_json_resource
from .keyboard import (
    BACKSPACE, ENTER, KeyboardLayout, KeyboardMode, default_layout, mode_switch,
)

MAX_RATE = 60
INJECT_PRESSURE = 48


class UnreachableSymbol(ValueError):
    def __init__(self, char: str):
        super().__init__(f"no key produces {char!r}")
        self.char = char


class NoMapping(LookupError):
    pass


@dataclass(frozen=True)
class PlannedFrame:
    offset: Fraction  # seconds from plan start
    frame: TouchFrame
    label: str = ""


@dataclass
class InjectionPlan:
    rate: int = MAX_RATE
    slots: int = 0
    steps: list[PlannedFrame] = field(default_factory=list)
    keys: list[str] = field(default_factory=list)
    end_mode: KeyboardMode = KeyboardMode.LETTERS

    def __post_init__(self):
        if not 0 < self.rate <= MAX_RATE:
            raise ValueError(f"rate must be in (0, {MAX_RATE}] taps/s")

    @property
    def taps(self) -> int:
        return self.slots

    @property
    def duration(self) -> Fraction:
        """Seconds the plan occupies: one period per slot."""
        return Fraction(self.slots, self.rate)

    @property
    def period(self) -> Fraction:
        return Fraction(1, self.rate)

    def add_tap(self, x: int, y: int, label: str = "") -> None:
        t0 = self.slots * self.period
        self.steps.append(PlannedFrame(t0, TouchFrame.tap(x, y, TouchState.DOWN,
                                                          pressure=INJECT_PRESSURE), label))
        self.steps.append(PlannedFrame(t0 + self.period / 2,
                                       TouchFrame.tap(x, y, TouchState.UP, pressure=0), label))
        self.slots += 1

    def add_stroke(self, points: list[tuple[int, int]], label: str = "") -> None:
        """One finger drag through ``points``, one slot per point."""
        if not points:
            return
        for i, (x, y) in enumerate(points):
            state = TouchState.DOWN if i == 0 else TouchState.MOVE
            self.steps.append(PlannedFrame((self.slots + i) * self.period,
                                           TouchFrame.tap(x, y, state, pressure=INJECT_PRESSURE),
                                           label))
        x, y = points[-1]
        last = self.slots + len(points) - 1
        self.steps.append(PlannedFrame(last * self.period + self.period / 2,
                                       TouchFrame.tap(x, y, TouchState.UP, pressure=0), label))
        self.slots += len(points)

    def extend(self, other: "InjectionPlan") -> "InjectionPlan":
        if other.rate != self.rate:
            raise ValueError("cannot join plans with different rates")
        shift = self.slots * self.period
        self.steps.extend(PlannedFrame(s.offset + shift, s.frame, s.label) for s in other.steps)
        self.keys.extend(other.keys)
        self.slots += other.slots
        self.end_mode = other.end_mode
        return self

    def schedule_us(self) -> list[tuple[int, TouchFrame]]:
        """Frames with integer microsecond offsets (rounded up)."""
        return [(math.ceil(s.offset * 1_000_000), s.frame) for s in self.steps]


def _press(plan: InjectionPlan, layout: KeyboardLayout, key: str, mode: KeyboardMode) -> None:
    region = layout.find(key, mode)
    if region is None:
        raise UnreachableSymbol(key)
    plan.add_tap(*region.center, label=key)
    plan.keys.append(key)


def plan_keys(keys: list[str], layout: KeyboardLayout | None = None, rate: int = MAX_RATE,
              start_mode: KeyboardMode = KeyboardMode.LETTERS) -> InjectionPlan:
    """Plan key presses, switching modes as needed.

    Mode policy: after a run of keys that needed another mode, switch back
    to Letters before the next Letters key and at the end of the plan.
    """
    layout = layout or default_layout()
    plan = InjectionPlan(rate=rate)
    mode = start_mode
    for key in keys:
        if layout.find(key, mode) is None or (mode is not KeyboardMode.LETTERS
                                              and layout.find(key, KeyboardMode.LETTERS)):
            homes = layout.modes_with(key)
            if not homes:
                raise UnreachableSymbol(key)
            target = KeyboardMode.LETTERS if KeyboardMode.LETTERS in homes else homes[0]
            if target is not mode:
                _press(plan, layout, mode_switch(target), mode)
                mode = target
        _press(plan, layout, key, mode)
    if mode is not KeyboardMode.LETTERS:
        _press(plan, layout, mode_switch(KeyboardMode.LETTERS), mode)
        mode = KeyboardMode.LETTERS
    plan.end_mode = mode
    return plan


def plan_taps(text: str, layout: KeyboardLayout | None = None, rate: int = MAX_RATE,
              start_mode: KeyboardMode = KeyboardMode.LETTERS) -> InjectionPlan:
    """Plan the taps that type ``text`` on the on-screen keyboard."""
    return plan_keys(list(text), layout, rate, start_mode)


def plan_points(points: list[tuple[int, int]], rate: int = MAX_RATE, label: str = "") -> InjectionPlan:
    plan = InjectionPlan(rate=rate)
    for x, y in points:
        plan.add_tap(x, y, label)
    return plan


def plan_stroke(points: list[tuple[int, int]], rate: int = MAX_RATE, label: str = "") -> InjectionPlan:
    plan = InjectionPlan(rate=rate)
    plan.add_stroke(points, label)
    return plan


def load_phish_map(path: str | Path | None = None) -> dict[str, str]:
    if path is None:
        obj = load_json_resource("phish_map.json")
    else:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    from ..schemas import validate
    validate(obj, "phish_map")
    return dict(obj["map"])


def substitute_url(typed: str, phish_map: dict[str, str], layout: KeyboardLayout | None = None,
                   rate: int = MAX_RATE,
                   start_mode: KeyboardMode = KeyboardMode.LETTERS) -> InjectionPlan:
    """Erase the typed URL, type its phishing twin, then press Enter."""
    if typed not in phish_map:
        raise NoMapping(typed)
    layout = layout or default_layout()
    plan = InjectionPlan(rate=rate)
    # Backspace is on every mode, so erase from wherever the user left off
    for _ in typed:
        _press(plan, layout, BACKSPACE, start_mode)
    plan.extend(plan_taps(phish_map[typed], layout, rate, start_mode))
    _press(plan, layout, ENTER, plan.end_mode)
    return plan
