"""Benign touch-controller emulation.

The Synaptics-like controller exposes a page-based function descriptor
table (6-byte records stored downward from 0x00E9 on every page), an
interrupt status register, a finger bitmap and a multi-finger report.

Register map used here (page 0)::

    0x06  interrupt status, one bit per interrupt source in descriptor order
    0x08  touch report, 8 bytes per finger present in the bitmap
    0x0C  finger bitmap, 2 bytes little-endian, bit n = finger n
    0xE9  first descriptor slot, then 0xE3, 0xDD, 0xD7, 0xD1

Report record layout (per finger, ascending finger id)::

    [finger_id << 4 | state, x_lo, x_hi, y_lo, y_hi, pressure, 0, 0]

with state Down=1, Move=2, Up=3.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .bus import Bus, BusTransaction, Kind, NoAck, Reply, Source, Trace

PDT_START = 0x00E9
PDT_END = 0x00D0
PDT_ENTRY_SIZE = 6
PAGES_TO_SERVICE = 10

STATUS_REG = 0x06
REPORT_REG = 0x08
BITMAP_REG = 0x0C
BITMAP_LEN = 2
RECORD_LEN = 8
MAX_FINGERS = 10

FN_CONTROL = 0x01
FN_TOUCH = 0x12
FN_FLASH = 0x51


def slot_addresses(page: int) -> list[int]:
    """Descriptor slot addresses on one page, in scan order."""
    base = page << 8
    return [base | a for a in range(PDT_START, PDT_END, -PDT_ENTRY_SIZE)]


def all_slot_addresses(pages: int = PAGES_TO_SERVICE) -> list[int]:
    return [a for p in range(pages) for a in slot_addresses(p)]


def is_descriptor_slot(reg_addr: int) -> bool:
    return (reg_addr & 0xFF) in slot_addresses(0) and (reg_addr >> 8) < PAGES_TO_SERVICE


@dataclass(frozen=True)
class FunctionDescriptor:
    function_id: int
    query_addr: int = 0
    command_addr: int = 0
    control_addr: int = 0
    data_addr: int = 0
    irq_source_count: int = 0

    def __post_init__(self):
        for name in ("function_id", "query_addr", "command_addr", "control_addr", "data_addr"):
            if not 0 <= getattr(self, name) <= 0xFF:
                raise ValueError(f"{name} must fit in a byte")
        if not 0 <= self.irq_source_count <= 7:
            raise ValueError("irq_source_count is a 3-bit field")

    def to_bytes(self) -> bytes:
        return bytes([self.function_id, self.query_addr, self.command_addr,
                      self.control_addr, self.data_addr, self.irq_source_count & 0x07])

    @classmethod
    def from_bytes(cls, raw: bytes) -> "FunctionDescriptor":
        if len(raw) != PDT_ENTRY_SIZE:
            raise ValueError(f"descriptor must be {PDT_ENTRY_SIZE} bytes, got {len(raw)}")
        return cls(raw[0], raw[1], raw[2], raw[3], raw[4], raw[5] & 0x07)

    @property
    def terminator(self) -> bool:
        return self.function_id == 0


TERMINATOR = FunctionDescriptor(0)


class TouchState(enum.IntEnum):
    DOWN = 1
    MOVE = 2
    UP = 3


@dataclass(frozen=True)
class TouchPoint:
    finger_id: int
    x: int
    y: int
    pressure: int = 40
    state: TouchState = TouchState.DOWN


class FrameOverflow(ValueError):
    pass


@dataclass(frozen=True)
class TouchFrame:
    points: tuple[TouchPoint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) > MAX_FINGERS:
            raise FrameOverflow(f"{len(self.points)} points, at most {MAX_FINGERS} supported")
        ids = [p.finger_id for p in self.points]
        if len(set(ids)) != len(ids):
            raise ValueError("finger ids must be unique within a frame")
        for p in self.points:
            if not 0 <= p.finger_id < MAX_FINGERS:
                raise ValueError("finger id out of range")
            if not (0 <= p.x <= 0xFFFF and 0 <= p.y <= 0xFFFF and 0 <= p.pressure <= 0xFF):
                raise ValueError("point field out of range")

    @classmethod
    def tap(cls, x: int, y: int, state: TouchState, finger_id: int = 0,
            pressure: int = 40) -> "TouchFrame":
        return cls((TouchPoint(finger_id, x, y, pressure, TouchState(state)),))

    def sorted_points(self) -> list[TouchPoint]:
        return sorted(self.points, key=lambda p: p.finger_id)

    def check_geometry(self, width: int, height: int) -> None:
        for p in self.points:
            if not (p.x < width and p.y < height):
                raise ValueError(f"point ({p.x},{p.y}) outside {width}x{height} panel")


def encode_touch_report(frame: TouchFrame) -> bytes:
    out = bytearray()
    for p in frame.sorted_points():
        out += bytes([(p.finger_id << 4) | int(p.state),
                      p.x & 0xFF, p.x >> 8, p.y & 0xFF, p.y >> 8, p.pressure, 0, 0])
    return bytes(out)


def finger_bitmap(frame: TouchFrame) -> int:
    bits = 0
    for p in frame.points:
        bits |= 1 << p.finger_id
    return bits


# -- profiles -------------------------------------------------------------

def _int(v) -> int:
    return int(v, 0) if isinstance(v, str) else int(v)


def load_json_resource(*parts: str):
    ref = resources.files("touchsim.data").joinpath(*parts)
    return json.loads(ref.read_text(encoding="utf-8"))


@dataclass
class ControllerProfile:
    name: str
    slave_addr: int = 0x20
    width: int = 1440
    height: int = 2560
    firmware_version: bytes = bytes([0x01, 0x00, 0x02, 0x07])
    descriptors: list[tuple[int, FunctionDescriptor]] = field(default_factory=list)
    entities: list[dict] = field(default_factory=list)
    driver: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj: dict) -> "ControllerProfile":
        from .schemas import validate
        validate(obj, "profile")
        descs = []
        for row in obj.get("descriptors", []):
            d = FunctionDescriptor(_int(row["function_id"]), _int(row["query"]),
                                   _int(row["command"]), _int(row["control"]),
                                   _int(row["data"]), int(row.get("irq_sources", 1)))
            descs.append((int(row.get("page", 0)), d))
        ents = [{"type": int(e["type"]), "start": _int(e["start"]), "size": int(e["size"]),
                 "instances": int(e.get("instances", 1))} for e in obj.get("entities", [])]
        panel = obj.get("panel", {})
        return cls(name=obj["name"], slave_addr=_int(obj.get("slave_addr", "0x20")),
                   width=int(panel.get("width", 1440)), height=int(panel.get("height", 2560)),
                   firmware_version=bytes.fromhex(obj.get("firmware_version", "01000207")),
                   descriptors=descs, entities=ents, driver=dict(obj.get("driver", {})))

    @classmethod
    def load(cls, name_or_path: str | Path) -> "ControllerProfile":
        p = Path(name_or_path)
        if p.suffix == ".json" and p.exists():
            return cls.from_dict(json.loads(p.read_text(encoding="utf-8")))
        return cls.from_dict(load_json_resource("profiles", f"{name_or_path}.json"))


# -- endpoints ------------------------------------------------------------

class SynapticsController:
    """Register-level model of a benign Synaptics-style controller."""

    def __init__(self, profile: ControllerProfile | None = None):
        self.profile = profile or ControllerProfile.load("synaptics_like")
        self.bus: Bus | None = None
        self.powered = True
        self.regs: dict[int, int] = {}
        self.readonly: set[int] = set()
        self.pending = 0
        self.frame = TouchFrame()
        self.frames_dropped = 0
        self._load_registers()

    def attach(self, bus: Bus) -> None:
        self.bus = bus

    def _load_registers(self) -> None:
        self.regs.clear()
        self.readonly.clear()
        pages: dict[int, list[FunctionDescriptor]] = {}
        for page, d in self.profile.descriptors:
            pages.setdefault(page, []).append(d)
        for page, descs in pages.items():
            slots = slot_addresses(page)
            if len(descs) >= len(slots):
                raise ValueError(f"page {page} holds at most {len(slots) - 1} descriptors")
            for addr, d in zip(slots, descs + [TERMINATOR]):
                for i, b in enumerate(d.to_bytes()):
                    self.regs[addr + i] = b
                    self.readonly.add(addr + i)
        flash = self.function(FN_FLASH)
        if flash is not None:
            for i, b in enumerate(self.profile.firmware_version):
                self.regs[flash.query_addr + i] = b
        touch = self.function(FN_TOUCH)
        if touch is not None:
            w, h = self.profile.width, self.profile.height
            for i, b in enumerate([MAX_FINGERS, w & 0xFF, w >> 8, h & 0xFF, h >> 8]):
                self.regs[touch.query_addr + i] = b

    def descriptor_table(self) -> list[FunctionDescriptor]:
        """Descriptors in scan order, closed by the zero terminator."""
        return [d for _, d in sorted(self.profile.descriptors, key=lambda pd: pd[0])] + [TERMINATOR]

    def function(self, function_id: int) -> FunctionDescriptor | None:
        for _, d in self.profile.descriptors:
            if d.function_id == function_id:
                return d
        return None

    def irq_bit(self, function_id: int) -> int:
        """Mask of the status bits owned by ``function_id``."""
        pos = 0
        for _, d in sorted(self.profile.descriptors, key=lambda pd: pd[0]):
            mask = ((1 << d.irq_source_count) - 1) << pos
            if d.function_id == function_id:
                return mask
            pos += d.irq_source_count
        return 0

    def set_power(self, on: bool) -> None:
        if self.powered and not on and self.pending and self.bus is not None:
            self.bus.clear_irq(Source.CONTROLLER)
        self.powered = on
        self.pending = 0
        self.frame = TouchFrame()
        if on:
            self._load_registers()

    def read(self, reg_addr: int, read_len: int) -> bytes:
        if not self.powered:
            raise NoAck("controller powered off")
        if reg_addr == STATUS_REG:
            status, self.pending = self.pending, 0
            if status and self.bus is not None:
                self.bus.clear_irq(Source.CONTROLLER)
            return status.to_bytes(max(read_len, 4), "little")[:read_len].ljust(read_len, b"\0")
        if reg_addr == BITMAP_REG:
            raw = finger_bitmap(self.frame).to_bytes(BITMAP_LEN, "little")
            return raw[:read_len].ljust(read_len, b"\0")
        if reg_addr == REPORT_REG:
            return encode_touch_report(self.frame)[:read_len].ljust(read_len, b"\0")
        return bytes(self.regs.get((reg_addr + i) & 0xFFFF, 0) for i in range(read_len))

    def write(self, reg_addr: int, data: bytes) -> None:
        if not self.powered:
            raise NoAck("controller powered off")
        for i, b in enumerate(data):
            addr = (reg_addr + i) & 0xFFFF
            if addr not in self.readonly:
                self.regs[addr] = b

    def queue_touch(self, frame: TouchFrame) -> None:
        if not isinstance(frame, TouchFrame):
            frame = TouchFrame(frame)
        if not self.powered:
            self.frames_dropped += 1
            return
        frame.check_geometry(self.profile.width, self.profile.height)
        was_pending = bool(self.pending)
        self.frame = frame
        self.pending |= self.irq_bit(FN_TOUCH)
        if not was_pending and self.bus is not None:
            self.bus.assert_irq(Source.CONTROLLER)


class ReplayMiss(LookupError):
    def __init__(self, reg_addr: int, read_len: int):
        super().__init__(f"no recorded response for read of 0x{reg_addr:04x} ({read_len} bytes)")
        self.reg_addr = reg_addr
        self.read_len = read_len


class ReplayController:
    """Answers reads from a recorded trace, strictly in recorded order."""

    def __init__(self, recorded: Trace):
        self.records = [r for r in recorded.records if r.kind is Kind.READ]
        self.cursor = 0
        # line changes that were raised while read k was on the wire
        self.irq_after: dict[int, list[tuple[bool, Source]]] = {}
        self.powered = True
        self.bus: Bus | None = None

    def attach(self, bus: Bus) -> None:
        self.bus = bus

    def set_power(self, on: bool) -> None:
        self.powered = on

    def _next(self, reg_addr: int, read_len: int) -> BusTransaction:
        if self.cursor >= len(self.records):
            raise ReplayMiss(reg_addr, read_len)
        rec = self.records[self.cursor]
        if rec.reg_addr != reg_addr or rec.read_len != read_len:
            raise ReplayMiss(reg_addr, read_len)
        self.cursor += 1
        return rec

    def read(self, reg_addr: int, read_len: int) -> bytes:
        rec = self._next(reg_addr, read_len)
        if rec.blocked:
            raise NoAck(f"recorded read of 0x{reg_addr:04x} was refused")
        return rec.data

    def read_reply(self, reg_addr: int, read_len: int) -> Reply:
        """The recorded read with its original source tag and refusal."""
        rec = self._next(reg_addr, read_len)
        for asserted, source in self.irq_after.get(self.cursor - 1, ()):
            self.bus.set_irq(asserted, source)
        return Reply(rec.data, rec.source, blocked=rec.blocked)

    def write(self, reg_addr: int, data: bytes) -> None:
        return None

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.records)


def replay_responses(recorded: Trace) -> ReplayController:
    return ReplayController(recorded)


# -- Atmel-like entity controller -------------------------------------------

INFO_BLOCK_ADDR = 0x0000
INFO_BLOCK_LEN = 7
ENTITY_TABLE_ADDR = 0x0007
ENTITY_RECORD_LEN = 6


def encode_entity(entity: dict) -> bytes:
    start, size = entity["start"], entity["size"]
    return bytes([entity["type"], start & 0xFF, start >> 8, size & 0xFF, size >> 8,
                  entity.get("instances", 1)])


def decode_entity(raw: bytes) -> dict:
    return {"type": raw[0], "start": raw[1] | raw[2] << 8, "size": raw[3] | raw[4] << 8,
            "instances": raw[5]}


class AtmelController:
    """Entity-table controller: info block, entity table, entity contents."""

    def __init__(self, profile: ControllerProfile | None = None):
        self.profile = profile or ControllerProfile.load("atmel_like")
        self.powered = True
        self.bus: Bus | None = None
        self.regs: dict[int, int] = {}
        info = [0xA4, 0x14, 0x20, 0xAA, 24, 14, len(self.profile.entities)]
        blob = bytes(info) + b"".join(encode_entity(e) for e in self.profile.entities)
        for i, b in enumerate(blob):
            self.regs[INFO_BLOCK_ADDR + i] = b
        for e in self.profile.entities:
            for i in range(e["size"]):
                self.regs[e["start"] + i] = (e["type"] + i) & 0xFF

    def attach(self, bus: Bus) -> None:
        self.bus = bus

    def set_power(self, on: bool) -> None:
        self.powered = on

    def read(self, reg_addr: int, read_len: int) -> bytes:
        if not self.powered:
            raise NoAck("controller powered off")
        return bytes(self.regs.get((reg_addr + i) & 0xFFFF, 0) for i in range(read_len))

    def write(self, reg_addr: int, data: bytes) -> None:
        if not self.powered:
            raise NoAck("controller powered off")
