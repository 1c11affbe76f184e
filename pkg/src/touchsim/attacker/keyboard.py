"""On-screen keyboard model used by both the logger and the injector.

The attacker keeps two small state machines: one follows which keyboard
mode is showing, the other accumulates the characters typed so far and
fires triggers on completed entries.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..controller import load_json_resource

BACKSPACE = "{Backspace}"
ENTER = "{Enter}"
SHIFT = "{Shift}"
MODE_PREFIX = "{Mode:"


class KeyboardMode(str, enum.Enum):
    LETTERS = "Letters"
    SYMBOLS = "Symbols"
    NUMBERS = "Numbers"
    EMOJI = "Emoji"


def mode_switch(target: KeyboardMode) -> str:
    return f"{MODE_PREFIX}{target.value}}}"


def switch_target(key: str | None) -> KeyboardMode | None:
    if key and key.startswith(MODE_PREFIX) and key.endswith("}"):
        return KeyboardMode(key[len(MODE_PREFIX):-1])
    return None


def is_control(key: str) -> bool:
    return len(key) > 1 and key.startswith("{") and key.endswith("}")


@dataclass(frozen=True)
class KeyRegion:
    x0: int
    y0: int
    x1: int
    y1: int
    symbol: str
    mode: KeyboardMode

    def contains(self, x: int, y: int) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    @property
    def center(self) -> tuple[int, int]:
        return (self.x0 + self.x1) // 2, (self.y0 + self.y1) // 2


class KeyboardLayout:
    """Screen regions per keyboard mode."""

    def __init__(self, regions: list[KeyRegion]):
        self.regions: dict[KeyboardMode, list[KeyRegion]] = {m: [] for m in KeyboardMode}
        for r in regions:
            self.regions[r.mode].append(r)
        for mode, rs in self.regions.items():
            for i, a in enumerate(rs):
                for b in rs[i + 1:]:
                    if a.x0 < b.x1 and b.x0 < a.x1 and a.y0 < b.y1 and b.y0 < a.y1:
                        raise ValueError(f"{mode.value}: keys {a.symbol!r} and {b.symbol!r} overlap")

    @classmethod
    def from_dict(cls, obj: dict) -> "KeyboardLayout":
        from ..schemas import validate
        validate(obj, "layout")
        regions = []
        for mode_name, keys in obj["modes"].items():
            mode = KeyboardMode(mode_name)
            for k in keys:
                regions.append(KeyRegion(*k["rect"], symbol=k["symbol"], mode=mode))
        return cls(regions)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "KeyboardLayout":
        if path is None:
            return cls.from_dict(load_json_resource("layout.json"))
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def find(self, symbol: str, mode: KeyboardMode) -> KeyRegion | None:
        for r in self.regions[mode]:
            if r.symbol == symbol:
                return r
        return None

    def modes_with(self, symbol: str) -> list[KeyboardMode]:
        return [m for m in KeyboardMode if self.find(symbol, m) is not None]

    @property
    def bounds(self) -> tuple[int, int, int, int]:
        rs = [r for group in self.regions.values() for r in group]
        return (min(r.x0 for r in rs), min(r.y0 for r in rs),
                max(r.x1 for r in rs), max(r.y1 for r in rs))


_DEFAULT_LAYOUT: KeyboardLayout | None = None


def default_layout() -> KeyboardLayout:
    global _DEFAULT_LAYOUT
    if _DEFAULT_LAYOUT is None:
        _DEFAULT_LAYOUT = KeyboardLayout.load()
    return _DEFAULT_LAYOUT


def decode_key(x: int, y: int, mode: KeyboardMode, layout: KeyboardLayout | None = None) -> str | None:
    """Symbol under (x, y) in ``mode``, or None when the point misses every key."""
    for r in (layout or default_layout()).regions[mode]:
        if r.contains(x, y):
            return r.symbol
    return None


def step_keyboard_mode(mode: KeyboardMode, key: str | None) -> KeyboardMode:
    target = switch_target(key)
    return mode if target is None else target


class Focus(str, enum.Enum):
    UNKNOWN = "Unknown"
    URL_BAR = "UrlBar"
    OTHER = "Other"


@dataclass(frozen=True)
class Trigger:
    """Fires when an entry completed with Enter matches ``pattern`` exactly."""

    pattern: str
    action: str
    focus: Focus | None = None
    regex: bool = False

    def matches(self, text: str, focus: Focus) -> bool:
        if self.focus is not None and focus is not self.focus:
            return False
        if self.regex:
            return re.fullmatch(self.pattern, text) is not None
        return text == self.pattern


@dataclass(frozen=True)
class TypingState:
    buffer: str = ""
    focus: Focus = Focus.UNKNOWN
    triggers: tuple[Trigger, ...] = ()
    completed: tuple[str, ...] = field(default=(), compare=False)


def step_typing(state: TypingState, key: str | None) -> tuple[TypingState, list[Trigger]]:
    """Feed one decoded key; returns the new state and the triggers that fired.

    Triggers are checked when Enter completes an entry. There is no latch,
    so retyping the same text fires them again.
    """
    if key is None or switch_target(key) is not None or key == SHIFT:
        return state, []
    if key == BACKSPACE:
        return replace(state, buffer=state.buffer[:-1]), []
    if key == ENTER:
        fired = [t for t in state.triggers if t.matches(state.buffer, state.focus)]
        return replace(state, buffer="", completed=state.completed + (state.buffer,)), fired
    if is_control(key):
        return state, []
    return replace(state, buffer=state.buffer + key), []


@dataclass
class KeyStreamDecoder:
    """Turns a stream of touch-down points into keys, tracking the mode."""

    layout: KeyboardLayout = field(default_factory=default_layout)
    mode: KeyboardMode = KeyboardMode.LETTERS
    keys: list[str] = field(default_factory=list)

    def feed(self, x: int, y: int) -> str | None:
        key = decode_key(x, y, self.mode, self.layout)
        if key is not None:
            self.keys.append(key)
            self.mode = step_keyboard_mode(self.mode, key)
        return key

    def text(self) -> str:
        """Replay the decoded keys as an editor would."""
        out: list[str] = []
        for k in self.keys:
            if k == BACKSPACE:
                if out:
                    out.pop()
            elif k == ENTER:
                out.append("\n")
            elif not is_control(k):
                out.append(k)
        return "".join(out)
