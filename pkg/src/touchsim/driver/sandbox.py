"""Instrumented memory for the driver model.

Memory is a set of segments. A segment is an ordered run of adjacent
regions; segments are separated by canary bytes (0xAA). A write that runs
past its region's capacity keeps going into the next region of the same
segment, exactly like an unchecked ``memcpy`` would, and is logged as an
overflow. Bytes that land in a canary are a canary violation. Bytes that
land past the canary are "wild": they hit memory the sandbox does not
model, which the driver treats as a crash.

All frame and heap geometry shared between the driver and the exploit
builder lives here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

CANARY = 0xAA
CANARY_LEN = 8

# heap object holding the interrupt bookkeeping
IRQ_MAP_CAPACITY = 4
HEAP_LAYOUT = (("irq_enable_map", IRQ_MAP_CAPACITY), ("irq_source_count", 4), ("fn_handlers", 248))

# stack frame of the interrupt handler; a 210-byte status read fills it exactly
STATUS_BUF_OFFSET = 0
SAVED_FP_OFFSET = 16
SAVED_LR_OFFSET = 24
FRAME_SIZE = 210
STACK_LAYOUT = (("status_buf", 4), ("pad", 12), ("saved_fp", 8), ("saved_lr", 8),
                ("caller_area", FRAME_SIZE - 32))

# Atmel-like driver globals
ENTITY_BUFFER_CAPACITY = 80
ATMEL_LAYOUT = (("entity_buffer", ENTITY_BUFFER_CAPACITY), ("global_ptrs", 2048))


@dataclass(frozen=True)
class WriteRecord:
    region: str
    offset: int
    length: int
    overflow: bool
    wild: bool = False


@dataclass(frozen=True)
class Overflow:
    """Bytes written past a region's capacity, in region-relative offsets."""

    region: str
    offset: int
    length: int
    data: bytes


@dataclass(frozen=True)
class CanaryViolation:
    region: str
    canary_offset: int


@dataclass
class _Region:
    name: str
    capacity: int
    start: int
    segment: int


class SandboxMemory:
    def __init__(self, *segments, canary_len: int = CANARY_LEN):
        self.canary_len = canary_len
        self.regions: dict[str, _Region] = {}
        self.segments: list[tuple[int, int]] = []  # (start, end) of usable bytes
        pos = 0
        for seg_no, seg in enumerate(segments):
            seg_start = pos
            for name, cap in seg:
                if cap <= 0:
                    raise ValueError("region capacity must be positive")
                if name in self.regions:
                    raise ValueError(f"duplicate region {name}")
                self.regions[name] = _Region(name, cap, pos, seg_no)
                pos += cap
            self.segments.append((seg_start, pos))
            pos += canary_len
        self.mem = bytearray(pos)
        for _, end in self.segments:
            self.mem[end:end + canary_len] = bytes([CANARY]) * canary_len
        self.write_log: list[WriteRecord] = []
        self.overflow_log: list[Overflow] = []
        self.canary_log: list[CanaryViolation] = []

    # layout helpers -------------------------------------------------------

    def region(self, name: str) -> _Region:
        return self.regions[name]

    def _span(self, name: str) -> tuple[int, int, int]:
        r = self.regions[name]
        seg_start, seg_end = self.segments[r.segment]
        return r.start, seg_end, seg_end + self.canary_len

    # access -----------------------------------------------------------------

    def poke(self, name: str, data: bytes, offset: int = 0) -> None:
        """Unlogged initialisation of a region's own bytes."""
        r = self.regions[name]
        if offset + len(data) > r.capacity:
            raise ValueError("poke must stay inside the region")
        self.mem[r.start + offset:r.start + offset + len(data)] = data

    def peek(self, name: str, offset: int = 0, length: int | None = None) -> bytes:
        """Read relative to a region; bytes outside the modelled arena read as 0."""
        r = self.regions[name]
        if length is None:
            length = r.capacity - offset
        start = r.start + offset
        out = bytearray(length)
        lo, hi = max(start, 0), min(start + length, len(self.mem))
        if lo < hi:
            out[lo - start:hi - start] = self.mem[lo:hi]
        return bytes(out)

    def read_u32(self, name: str) -> int:
        return int.from_bytes(self.peek(name, 0, 4), "little")

    def read_u64(self, name: str, offset: int = 0) -> int:
        return int.from_bytes(self.peek(name, offset, 8), "little")

    def write(self, name: str, offset: int, data: bytes) -> WriteRecord:
        r = self.regions[name]
        data = bytes(data)
        start, seg_end, canary_end = self._span(name)
        start += offset
        n = len(data)
        overflow = offset + n > r.capacity
        wild = False
        for i, b in enumerate(data):
            addr = start + i
            if addr < seg_end:
                self.mem[addr] = b
            elif addr < canary_end:
                if self.mem[addr] != b:
                    self.canary_log.append(CanaryViolation(name, addr - seg_end))
                self.mem[addr] = b
            else:
                wild = True
        if overflow:
            first = max(offset, r.capacity)
            self.overflow_log.append(Overflow(name, first, offset + n - first,
                                              data[first - offset:]))
        rec = WriteRecord(name, offset, n, overflow, wild)
        self.write_log.append(rec)
        return rec

    # reporting --------------------------------------------------------------

    @property
    def violations(self) -> int:
        return len(self.overflow_log) + len(self.canary_log)

    def canaries_intact(self) -> bool:
        return all(self.mem[end:end + self.canary_len] == bytes([CANARY]) * self.canary_len
                   for _, end in self.segments)

    def clear_logs(self) -> None:
        self.write_log.clear()
        self.overflow_log.clear()
        self.canary_log.clear()

    def export_write_log(self) -> str:
        """JSON-lines dump of the write log, one object per write."""
        lines = [json.dumps({"region": w.region, "offset": w.offset, "len": w.length,
                             "overflow": w.overflow, "wild": w.wild}, separators=(",", ":"))
                 for w in self.write_log]
        return "".join(line + "\n" for line in lines)


def synaptics_sandbox() -> SandboxMemory:
    return SandboxMemory(HEAP_LAYOUT, STACK_LAYOUT)


def atmel_sandbox() -> SandboxMemory:
    return SandboxMemory(ATMEL_LAYOUT)
