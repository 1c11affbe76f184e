"""Vendor touch driver model with its unchecked probe and interrupt paths.

Nothing here validates what the peripheral says. Descriptor interrupt
counts are folded into a fixed 4-byte enable map without a bounds check,
the interrupt status read length is derived from a count that lives right
behind that map, and the Atmel-like probe copies whatever entity size the
device reports into an 80-byte global. All memory effects go through a
SandboxMemory so corruption is visible instead of real.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

from ..bus import Bus, BusError, NoAck
from ..controller import (
    BITMAP_LEN, ENTITY_RECORD_LEN, ENTITY_TABLE_ADDR, FN_CONTROL, FN_FLASH, FN_TOUCH,
    INFO_BLOCK_ADDR, INFO_BLOCK_LEN, PAGES_TO_SERVICE, PDT_ENTRY_SIZE, RECORD_LEN,
    ControllerProfile, FunctionDescriptor, TouchState, decode_entity, slot_addresses,
)
from .kernel import KernelState, UnknownPatchSite, apply_kernel_patch
from .rop import RESUME, WRITE_WORD, Call, GadgetCatalog, RopExecution, RopHalt, interpret_overflow
from .sandbox import SandboxMemory, atmel_sandbox, synaptics_sandbox

SAVED_FP_VALUE = 0xFFFFFFC07A3F1E40
BITMAP_OFFSET = 4  # finger bitmap sits 4 registers above the report base


class MalformedReport(ValueError):
    pass


class DriverCrash(Exception):
    """Modelled kernel oops; raised internally and reported as an outcome."""


@dataclass(frozen=True)
class DriverProfile:
    name: str = "synaptics_like"
    irq_map_capacity: int = 4
    status_read_max: int = 4
    entity_buffer_capacity: int = 80
    entity_read_max: int = 2048

    def __post_init__(self):
        for name in ("irq_map_capacity", "status_read_max", "entity_buffer_capacity",
                     "entity_read_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_controller_profile(cls, profile: ControllerProfile) -> "DriverProfile":
        return cls(name=profile.name, **profile.driver)


@dataclass(frozen=True)
class TouchEventOut:
    finger_id: int
    x: int
    y: int
    pressure: int
    state: TouchState


def decode_touch(report: bytes, bitmap: int) -> list[TouchEventOut]:
    """Decode a multi-finger report; inverse of ``encode_touch_report``."""
    fingers = [i for i in range(16) if bitmap >> i & 1]
    if len(report) != RECORD_LEN * len(fingers):
        raise MalformedReport(f"bitmap 0x{bitmap:04x} needs {RECORD_LEN * len(fingers)} "
                              f"report bytes, got {len(report)}")
    events = []
    for k, fid in enumerate(fingers):
        rec = report[k * RECORD_LEN:(k + 1) * RECORD_LEN]
        if rec[0] >> 4 != fid:
            raise MalformedReport(f"record {k} is for finger {rec[0] >> 4}, bitmap says {fid}")
        try:
            state = TouchState(rec[0] & 0x0F)
        except ValueError:
            raise MalformedReport(f"bad touch state {rec[0] & 0x0F}") from None
        events.append(TouchEventOut(fid, rec[1] | rec[2] << 8, rec[3] | rec[4] << 8, rec[5], state))
    return events


class FirmwareStatus(str, enum.Enum):
    UP_TO_DATE = "UpToDate"
    UPDATE_TRIGGERED = "UpdateTriggered"


def firmware_check(installed: bytes, embedded: bytes) -> FirmwareStatus:
    if bytes(installed) == bytes(embedded):
        return FirmwareStatus.UP_TO_DATE
    return FirmwareStatus.UPDATE_TRIGGERED


@dataclass
class ProbeResult:
    functions: list[tuple[int, FunctionDescriptor]] = field(default_factory=list)
    irq_source_count: int = 0
    firmware: FirmwareStatus | None = None
    crashed: bool = False

    @property
    def function_ids(self) -> list[int]:
        return [d.function_id for _, d in self.functions]


@dataclass
class InterruptResult:
    status_read_len: int
    events: list[TouchEventOut] = field(default_factory=list)
    rop: RopExecution | None = None
    crashed: bool = False
    dropped: bool = False


def reg(page: int, addr: int) -> int:
    return (page << 8) | addr


class SynapticsDriver:
    """Probe, interrupt handling and touch decoding for the Synaptics-like part."""

    def __init__(self, bus: Bus, profile: DriverProfile | None = None, *,
                 catalog: GadgetCatalog | None = None, kernel: KernelState | None = None,
                 embedded_firmware: bytes = bytes([0x01, 0x00, 0x02, 0x07]),
                 sink: Callable[[list[TouchEventOut]], object] | None = None):
        self.bus = bus
        self.profile = profile or DriverProfile()
        self.catalog = catalog or GadgetCatalog.load()
        self.kernel = kernel if kernel is not None else KernelState()
        self.embedded_firmware = bytes(embedded_firmware)
        self.sink = sink
        self.sandbox: SandboxMemory = synaptics_sandbox()
        self.functions: list[tuple[int, FunctionDescriptor]] = []
        self.irq_ranges: dict[int, tuple[int, int]] = {}
        self.ready = False
        self.crashed = False
        self.log: list[tuple[int, str, dict]] = []
        self.interrupts: list[InterruptResult] = []

    def _note(self, kind: str, **info) -> None:
        self.log.append((self.bus.now, kind, info))

    def function(self, function_id: int) -> tuple[int, FunctionDescriptor] | None:
        for page, d in self.functions:
            if d.function_id == function_id:
                return page, d
        return None

    @property
    def irq_source_count(self) -> int:
        return self.sandbox.read_u32("irq_source_count")

    # boot ----------------------------------------------------------------

    def boot_probe(self) -> ProbeResult:
        """Scan every descriptor page, build the interrupt map, check firmware."""
        self.functions = []
        self.irq_ranges = {}
        self.sandbox.write("irq_enable_map", 0, bytes(self.profile.irq_map_capacity))
        self.sandbox.write("irq_source_count", 0, bytes(4))
        result = ProbeResult()
        try:
            for page in range(PAGES_TO_SERVICE):
                for addr in slot_addresses(page):
                    try:
                        raw = self.bus.read_reg(addr, PDT_ENTRY_SIZE)
                    except BusError:
                        # a silent or refused slot ends this page
                        break
                    desc = FunctionDescriptor.from_bytes(raw)
                    if desc.terminator:
                        break
                    self.functions.append((page, desc))
                    self._note("descriptor", addr=addr, function_id=desc.function_id,
                               irq_sources=desc.irq_source_count)
                    self._add_irq_sources(desc)
        except DriverCrash:
            self.crashed = True
            result.crashed = True
            self._note("crash", stage="probe")
        result.functions = list(self.functions)
        result.irq_source_count = self.irq_source_count
        self._note("irq_count", value=result.irq_source_count)
        if self.crashed:
            return result
        flash = self.function(FN_FLASH)
        if flash is not None:
            result.firmware = self._check_firmware(*flash)
        self._configure()
        self.ready = True
        self.bus.on_interrupt(self._irq_entry)
        return result

    def _add_irq_sources(self, desc: FunctionDescriptor) -> None:
        # no bounds check: bit positions past the map land in whatever follows it
        n = desc.irq_source_count
        first = self.irq_source_count
        for ii in range(n):
            bit = first + ii
            offset = bit // 8
            cur = self.sandbox.peek("irq_enable_map", offset, 1)[0]
            rec = self.sandbox.write("irq_enable_map", offset, bytes([cur | 1 << (bit % 8)]))
            if rec.overflow:
                self._note("heap_overflow", offset=offset)
            if rec.wild:
                raise DriverCrash(f"wild write at irq_enable_map+{offset}")
        self.irq_ranges.setdefault(desc.function_id, (first, n))
        total = (self.irq_source_count + n) & 0xFFFFFFFF
        self.sandbox.write("irq_source_count", 0, total.to_bytes(4, "little"))

    def _check_firmware(self, page: int, flash: FunctionDescriptor) -> FirmwareStatus | None:
        try:
            installed = self.bus.read_reg(reg(page, flash.query_addr), len(self.embedded_firmware))
        except BusError:
            return None
        status = firmware_check(installed, self.embedded_firmware)
        self._note("firmware", status=status.value)
        if status is FirmwareStatus.UPDATE_TRIGGERED:
            try:
                self.bus.write_reg(reg(page, flash.data_addr), b"\x0b")
            except BusError:
                pass
        return status

    def _configure(self) -> None:
        ctl = self.function(FN_CONTROL)
        if ctl is None:
            return
        page, f01 = ctl
        enable = self.sandbox.peek("irq_enable_map", 0, self.profile.irq_map_capacity)
        try:
            self.bus.write_reg(reg(page, f01.control_addr), b"\x01")
            self.bus.write_reg(reg(page, f01.control_addr + 1), enable)
        except BusError:
            pass

    # interrupts --------------------------------------------------------------

    def _irq_entry(self) -> None:
        try:
            self.interrupts.append(self.on_interrupt())
        except BusError as exc:
            self._note("irq_error", error=str(exc))

    def _fresh_frame(self) -> None:
        for name in ("status_buf", "pad", "caller_area"):
            self.sandbox.poke(name, bytes(self.sandbox.regions[name].capacity))
        self.sandbox.poke("saved_fp", SAVED_FP_VALUE.to_bytes(8, "little"))
        self.sandbox.poke("saved_lr", self.catalog.symbol(RESUME).to_bytes(8, "little"))

    def on_interrupt(self) -> InterruptResult:
        if not self.ready or self.crashed:
            return InterruptResult(0, dropped=True)
        count = self.irq_source_count
        read_len = -(-count // 8)
        if read_len == 0:
            return InterruptResult(0, dropped=True)
        ctl = self.function(FN_CONTROL)
        status_addr = reg(ctl[0], ctl[1].data_addr) if ctl else 0x06
        self._fresh_frame()
        try:
            data = self.bus.read_reg(status_addr, read_len)
        except NoAck:
            return InterruptResult(read_len, dropped=True)
        self._note("status_read", length=read_len)
        self.sandbox.write("status_buf", 0, data)
        lr = self.sandbox.read_u64("saved_lr")
        if lr != self.catalog.symbol(RESUME):
            return self._hijacked(read_len)
        status = int.from_bytes(data, "little")
        result = InterruptResult(read_len)
        touch = self.function(FN_TOUCH)
        if touch is not None and self._owns(FN_TOUCH, status):
            result.events = self._read_touch(*touch)
            if result.events and self.sink is not None:
                self.sink(result.events)
        return result

    def _owns(self, function_id: int, status: int) -> bool:
        first, n = self.irq_ranges.get(function_id, (0, 0))
        return bool(status >> first & ((1 << n) - 1))

    def _read_touch(self, page: int, touch: FunctionDescriptor) -> list[TouchEventOut]:
        base = reg(page, touch.data_addr)
        bitmap = int.from_bytes(self.bus.read_reg(base + BITMAP_OFFSET, BITMAP_LEN), "little")
        n = bin(bitmap).count("1")
        if n == 0:
            return []
        report = self.bus.read_reg(base, RECORD_LEN * n)
        try:
            return decode_touch(report, bitmap)
        except MalformedReport as exc:
            self._note("malformed_report", error=str(exc))
            return []

    def _hijacked(self, read_len: int) -> InterruptResult:
        self._note("stack_smashed", saved_lr=self.sandbox.read_u64("saved_lr"))
        write_word = self.catalog.symbols.get(WRITE_WORD)

        def on_call(call: Call) -> None:
            self._note("rop_call", target=call.target, arg0=call.arg0, arg1=call.arg1)
            if call.target == write_word:
                try:
                    apply_kernel_patch(self.kernel, call.arg0, call.arg1)
                    self._note("kernel_patch", address=call.arg0, word=call.arg1)
                except UnknownPatchSite:
                    self._note("kernel_patch_unknown", address=call.arg0, word=call.arg1)

        try:
            execution = interpret_overflow(self.sandbox, self.catalog, on_call)
        except RopHalt as exc:
            self.crashed = True
            self._note("crash", stage="rop", address=exc.address)
            return InterruptResult(read_len, crashed=True)
        return InterruptResult(read_len, rop=execution)


# -- Atmel-like -------------------------------------------------------------

@dataclass
class AtmelProbeResult:
    entities: list[dict] = field(default_factory=list)
    outcome: str = "ok"  # "ok" or "DriverCrash"

    @property
    def crashed(self) -> bool:
        return self.outcome == "DriverCrash"


class AtmelDriver:
    """Entity-table probe that trusts the reported entity sizes."""

    def __init__(self, bus: Bus, profile: DriverProfile | None = None):
        self.bus = bus
        self.profile = profile or DriverProfile(name="atmel_like")
        self.sandbox = atmel_sandbox()
        self.log: list[tuple[int, str, dict]] = []

    def probe(self) -> AtmelProbeResult:
        result = AtmelProbeResult()
        try:
            info = self.bus.read_reg(INFO_BLOCK_ADDR, INFO_BLOCK_LEN)
            count = info[-1]
            if count == 0:
                return result
            table = self.bus.read_reg(ENTITY_TABLE_ADDR, ENTITY_RECORD_LEN * count)
        except BusError:
            return result
        result.entities = [decode_entity(table[i:i + ENTITY_RECORD_LEN])
                           for i in range(0, len(table), ENTITY_RECORD_LEN)]
        for ent in result.entities:
            size = min(ent["size"], self.profile.entity_read_max)
            if size == 0:
                continue
            try:
                data = self.bus.read_reg(ent["start"], size)
            except BusError:
                continue
            rec = self.sandbox.write("entity_buffer", 0, data)
            if rec.overflow:
                # the spill tramples the pointers behind the buffer; the next use oopses
                result.outcome = "DriverCrash"
                self.log.append((self.bus.now, "crash", {"entity": ent["type"]}))
                break
        return result


def atmel_probe(bus: Bus, profile: DriverProfile | None = None) -> tuple[AtmelProbeResult, SandboxMemory]:
    drv = AtmelDriver(bus, profile)
    return drv.probe(), drv.sandbox
