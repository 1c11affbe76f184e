"""Abstract phone UI: just enough screens to carry the attack scripts.

``ui_step`` is a pure transition function. It takes the current state and
either a decoded touch event or a system event, and returns the next state
plus the effects the step emitted (page loads, installs, photos, mail).
Taps act on finger-down. Drags matter only on the lock screen and on the
whiteboard page.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..attacker.keyboard import (
    BACKSPACE, ENTER, KeyboardLayout, KeyboardMode, decode_key, default_layout, is_control,
    step_keyboard_mode,
)
from ..controller import TouchState, load_json_resource
from ..driver.driver import TouchEventOut


class Screen(str, enum.Enum):
    LOCK_PATTERN = "LockPattern"
    HOME = "Home"
    PLAY_STORE = "PlayStore"
    BROWSER = "Browser"
    CAMERA = "Camera"
    EMAIL = "Email"
    SETTINGS = "Settings"


FIELD_FOR = {Screen.BROWSER: "url", Screen.PLAY_STORE: "search", Screen.EMAIL: "to"}


@dataclass(frozen=True)
class UiLayout:
    dots: tuple[tuple[int, int], ...]
    dot_radius: int
    targets: dict[str, dict[str, tuple[int, int, int, int]]]
    whiteboard_url: str = "board.example.com"
    keyboard: KeyboardLayout = field(default_factory=default_layout, compare=False)

    @classmethod
    def from_dict(cls, obj: dict, keyboard: KeyboardLayout | None = None) -> "UiLayout":
        from ..schemas import validate
        validate(obj, "ui")
        targets = {screen: {name: tuple(rect) for name, rect in rects.items()}
                   for screen, rects in obj["targets"].items()}
        return cls(tuple(tuple(d) for d in obj["pattern_dots"]), obj.get("dot_radius", 120),
                   targets, obj.get("whiteboard_url", "board.example.com"),
                   keyboard or default_layout())

    @classmethod
    def load(cls, path: str | Path | None = None) -> "UiLayout":
        if path is None:
            return cls.from_dict(load_json_resource("ui.json"))
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def hit(self, screen: str, x: int, y: int) -> str | None:
        for name, (x0, y0, x1, y1) in self.targets.get(screen, {}).items():
            if x0 <= x < x1 and y0 <= y < y1:
                return name
        return None

    def center(self, target: str) -> tuple[int, int]:
        """Centre of ``"Screen.name"``."""
        screen, name = target.split(".", 1)
        x0, y0, x1, y1 = self.targets[screen][name]
        return (x0 + x1) // 2, (y0 + y1) // 2

    def dot_at(self, x: int, y: int) -> int | None:
        r2 = self.dot_radius ** 2
        for i, (dx, dy) in enumerate(self.dots):
            if (x - dx) ** 2 + (y - dy) ** 2 <= r2:
                return i
        return None

    def in_keyboard(self, x: int, y: int) -> bool:
        x0, y0, x1, y1 = self.keyboard.bounds
        return x0 <= x < x1 and y0 <= y < y1


_DEFAULT_UI: UiLayout | None = None


def default_ui() -> UiLayout:
    global _DEFAULT_UI
    if _DEFAULT_UI is None:
        _DEFAULT_UI = UiLayout.load()
    return _DEFAULT_UI


def points_to_dots(points, ui: UiLayout | None = None) -> list[int]:
    """Dot indices a drag passes over, in order, each counted once."""
    ui = ui or default_ui()
    seen: list[int] = []
    for x, y in points:
        d = ui.dot_at(x, y)
        if d is not None and d not in seen:
            seen.append(d)
    return seen


@dataclass(frozen=True)
class Effect:
    kind: str
    data: tuple = ()

    def to_obj(self) -> dict:
        return {"kind": self.kind, "data": [list(d) if isinstance(d, tuple) else d for d in self.data]}


@dataclass(frozen=True)
class SystemEvent:
    kind: str  # boot, blank, unblank, lock


@dataclass(frozen=True)
class PhoneUiState:
    screen: Screen = Screen.LOCK_PATTERN
    screen_on: bool = True
    url_buffer: str = ""
    page: str | None = None
    search_query: str = ""
    store_app: str | None = None
    email_to: str = ""
    attachment: str | None = None
    focus: str | None = None
    ime_mode: KeyboardMode = KeyboardMode.LETTERS
    installed_apps: frozenset = frozenset()
    running_apps: frozenset = frozenset()
    unlock_pattern: tuple[int, ...] = (0, 3, 6, 7, 8, 5, 2, 4, 1)
    pattern_entry: tuple[int, ...] = ()
    permission_prompts: tuple[str, ...] = ()
    front_camera: bool = False
    photos: int = 0
    stroke: tuple[tuple[int, int], ...] = ()

    def snapshot(self) -> dict:
        return {
            "screen": self.screen.value, "screen_on": self.screen_on, "url_buffer": self.url_buffer,
            "page": self.page, "search_query": self.search_query, "store_app": self.store_app,
            "email_to": self.email_to, "attachment": self.attachment, "focus": self.focus,
            "ime_mode": self.ime_mode.value, "installed_apps": sorted(self.installed_apps),
            "running_apps": sorted(self.running_apps), "pattern_entry": list(self.pattern_entry),
            "permission_prompts": list(self.permission_prompts), "photos": self.photos,
        }


def ui_step(state: PhoneUiState, event, ui: UiLayout | None = None,
            origin: str | None = None) -> tuple[PhoneUiState, list[Effect]]:
    """One transition. ``origin="user"`` taps are ignored while the screen is dark."""
    ui = ui or default_ui()
    if isinstance(event, SystemEvent):
        return _system(state, event)
    if not isinstance(event, TouchEventOut):
        raise TypeError(f"unsupported event {event!r}")
    if not state.screen_on and origin == "user":
        return state, []
    if state.screen is Screen.LOCK_PATTERN:
        return _pattern(state, event, ui)
    if state.screen is Screen.BROWSER and state.page == ui.whiteboard_url and state.focus is None:
        handled = _whiteboard(state, event, ui)
        if handled is not None:
            return handled
    if event.state is not TouchState.DOWN:
        return state, []
    return _tap(state, event.x, event.y, ui)


def _system(state: PhoneUiState, ev: SystemEvent) -> tuple[PhoneUiState, list[Effect]]:
    if ev.kind == "boot":
        return PhoneUiState(installed_apps=state.installed_apps,
                            unlock_pattern=state.unlock_pattern), [Effect("booted")]
    if ev.kind == "blank":
        return replace(state, screen_on=False), [Effect("screen_off")]
    if ev.kind == "unblank":
        return replace(state, screen_on=True), [Effect("screen_on")]
    if ev.kind == "lock":
        return replace(state, screen=Screen.LOCK_PATTERN, focus=None, pattern_entry=()), []
    return state, []


def _pattern(state, ev, ui):
    dot = ui.dot_at(ev.x, ev.y)
    if ev.state is TouchState.DOWN:
        return replace(state, pattern_entry=(dot,) if dot is not None else ()), []
    if ev.state is TouchState.MOVE:
        if dot is not None and dot not in state.pattern_entry:
            return replace(state, pattern_entry=state.pattern_entry + (dot,)), []
        return state, []
    entry = state.pattern_entry
    if dot is not None and dot not in entry:
        entry = entry + (dot,)
    if entry == state.unlock_pattern:
        return replace(state, screen=Screen.HOME, pattern_entry=()), [Effect("unlocked")]
    return replace(state, pattern_entry=()), [Effect("unlock_failed", (len(entry),))]


def _whiteboard(state, ev, ui):
    x0, y0, x1, y1 = ui.targets["Browser"]["canvas"]
    inside = x0 <= ev.x < x1 and y0 <= ev.y < y1
    if ev.state is TouchState.DOWN and inside:
        return replace(state, stroke=((ev.x, ev.y),)), []
    if ev.state is TouchState.MOVE and state.stroke:
        return replace(state, stroke=state.stroke + ((ev.x, ev.y),)), []
    if ev.state is TouchState.UP and state.stroke:
        return replace(state, stroke=()), [Effect("whiteboard_stroke", state.stroke)]
    return None


def _launch(state, screen: Screen):
    focus = "url" if screen is Screen.BROWSER and state.page is None else None
    return replace(state, screen=screen, focus=focus, ime_mode=KeyboardMode.LETTERS), \
        [Effect("launch", (screen.value,))]


def _tap(state: PhoneUiState, x: int, y: int, ui: UiLayout):
    nav = ui.hit("nav", x, y)
    if nav == "home":
        return replace(state, screen=Screen.HOME, focus=None), []
    if nav == "back":
        if state.focus is not None:
            return replace(state, focus=None), []
        return replace(state, screen=Screen.HOME), []
    if nav is not None:
        return state, []
    if state.focus is not None and ui.in_keyboard(x, y):
        return _type(state, decode_key(x, y, state.ime_mode, ui.keyboard))
    screen = state.screen
    hit = ui.hit(screen.value, x, y)
    if screen is Screen.HOME:
        if hit == "app":
            apps = sorted(state.installed_apps)
            if apps:
                return replace(state, running_apps=state.running_apps | {apps[0]}), \
                    [Effect("app_started", (apps[0],))]
            return state, []
        if hit in {s.value for s in Screen}:
            return _launch(state, Screen(hit))
        return state, []
    if screen is Screen.PLAY_STORE:
        if state.permission_prompts:
            app = state.permission_prompts[0]
            if hit == "accept":
                return replace(state, permission_prompts=state.permission_prompts[1:],
                               installed_apps=state.installed_apps | {app}), [Effect("installed", (app,))]
            if hit == "deny":
                return replace(state, permission_prompts=state.permission_prompts[1:]), []
            return state, []
        if hit == "search":
            return replace(state, focus="search", search_query=""), []
        if hit == "result" and state.search_query:
            return replace(state, store_app=state.search_query), [Effect("store_page", (state.search_query,))]
        if hit == "install" and state.store_app:
            app = state.store_app
            if app in state.installed_apps:
                return replace(state, running_apps=state.running_apps | {app}), [Effect("app_started", (app,))]
            return replace(state, permission_prompts=state.permission_prompts + (app,)), \
                [Effect("permission_prompt", (app,))]
        return state, []
    if screen is Screen.BROWSER:
        if hit == "url":
            return replace(state, focus="url"), []
        return state, []
    if screen is Screen.CAMERA:
        if hit == "flip":
            return replace(state, front_camera=not state.front_camera), []
        if hit == "shutter":
            photo = f"IMG_{state.photos + 1:04d}{'_front' if state.front_camera else ''}"
            return replace(state, photos=state.photos + 1, attachment=photo), \
                [Effect("photo_taken", (photo,))]
        if hit == "share" and state.attachment:
            return replace(state, screen=Screen.EMAIL, focus="to", email_to=""), []
        return state, []
    if screen is Screen.EMAIL:
        if hit == "to":
            return replace(state, focus="to"), []
        if hit == "send" and state.email_to:
            return replace(state, screen=Screen.HOME, focus=None), \
                [Effect("email_sent", (state.email_to, state.attachment))]
        return state, []
    return state, []


def _edit(text: str, key: str) -> str:
    if key == BACKSPACE:
        return text[:-1]
    if is_control(key):
        return text
    return text + key


def _type(state: PhoneUiState, key: str | None):
    if key is None:
        return state, []
    mode = step_keyboard_mode(state.ime_mode, key)
    if mode is not state.ime_mode:
        return replace(state, ime_mode=mode), []
    if key == ENTER:
        if state.focus == "url":
            return replace(state, page=state.url_buffer, focus=None), [Effect("navigate", (state.url_buffer,))]
        if state.focus == "search":
            return replace(state, focus=None), [Effect("search", (state.search_query,))]
        return replace(state, focus=None), []
    if state.focus == "url":
        return replace(state, url_buffer=_edit(state.url_buffer, key)), []
    if state.focus == "search":
        return replace(state, search_query=_edit(state.search_query, key)), []
    if state.focus == "to":
        return replace(state, email_to=_edit(state.email_to, key)), []
    return state, []
