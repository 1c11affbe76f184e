"""Seeded fuzzing of the driver's probe paths against random device tables.

Each case builds a device image (a descriptor table for the Synaptics-like
part, an entity table for the Atmel-like part), boots the instrumented
driver against it over a real bus, and compares the sandbox logs with a
separate reference interpreter. The reference never touches the driver
or the sandbox code: it walks the same table with explicit bounds checks
and reports which bytes an unchecked driver would have put out of bounds.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from ..bus import Bus
from ..controller import (
    ENTITY_RECORD_LEN, ENTITY_TABLE_ADDR, INFO_BLOCK_ADDR, ControllerProfile,
    slot_addresses,
)
from ..driver.driver import AtmelDriver, DriverProfile, SynapticsDriver

PAGES = 10
SLOTS_PER_PAGE = 5
DESCRIPTOR_LEN = 6

# reference geometry, stated independently of the sandbox module
HEAP_REGIONS = (("irq_enable_map", 4), ("irq_source_count", 4), ("fn_handlers", 248))
STACK_BYTES = 210
ATMEL_REGIONS = (("entity_buffer", 80), ("global_ptrs", 2048))
GUARD = 8
GUARD_BYTE = 0xAA
ENTITY_READ_MAX = 2048

SYNAPTICS = "synaptics_like"
ATMEL = "atmel_like"
PROFILE_ALIASES = {"synaptics": SYNAPTICS, SYNAPTICS: SYNAPTICS, "atmel": ATMEL, ATMEL: ATMEL}


# -- device images -------------------------------------------------------------

@dataclass(frozen=True)
class DescriptorTable:
    """Raw descriptor bytes per page; a page stops at its first zero function id."""

    pages: tuple[tuple[bytes, ...], ...]

    def __post_init__(self):
        if len(self.pages) > PAGES:
            raise ValueError(f"at most {PAGES} pages")
        for page in self.pages:
            if len(page) > SLOTS_PER_PAGE or any(len(d) != DESCRIPTOR_LEN for d in page):
                raise ValueError("bad page")

    def image(self) -> dict[int, int]:
        regs = {}
        for p, page in enumerate(self.pages):
            for addr, raw in zip(slot_addresses(p), page):
                for i, b in enumerate(raw):
                    regs[addr + i] = b
        return regs

    def to_obj(self) -> list[list[str]]:
        return [[d.hex() for d in page] for page in self.pages]


@dataclass(frozen=True)
class EntityTable:
    entities: tuple[tuple[int, int, int], ...]  # (type, start, size)

    def image(self) -> dict[int, int]:
        regs = {}
        info = bytes([0x82, 0x00, 0x10, 0x01, 0x00, 0x00, len(self.entities)])
        for i, b in enumerate(info):
            regs[INFO_BLOCK_ADDR + i] = b
        for k, (typ, start, size) in enumerate(self.entities):
            raw = bytes([typ, start & 0xFF, start >> 8, size & 0xFF, size >> 8, 1])
            for i, b in enumerate(raw):
                regs[ENTITY_TABLE_ADDR + ENTITY_RECORD_LEN * k + i] = b
        return regs

    def to_obj(self) -> list[dict]:
        return [{"type": t, "start": s, "size": n} for t, s, n in self.entities]


def content_byte(addr: int) -> int:
    """Filler the image holds wherever no table byte is mapped."""
    return (addr * 7 ^ addr >> 8) & 0xFF


class ImageDevice:
    """A slave that serves a fixed byte image and ignores writes."""

    def __init__(self, regs: dict[int, int], fill=None):
        self.regs = regs
        self.fill = fill
        self.powered = True

    def _byte(self, addr: int) -> int:
        if addr in self.regs:
            return self.regs[addr]
        return self.fill(addr) if self.fill else 0

    def read(self, reg_addr: int, read_len: int) -> bytes:
        return bytes(self._byte((reg_addr + i) & 0xFFFF) for i in range(read_len))

    def write(self, reg_addr: int, data: bytes) -> None:
        return None


# -- reference interpreter -------------------------------------------------------------

@dataclass
class ReferenceResult:
    overflows: list[dict] = field(default_factory=list)
    guard_hits: list[dict] = field(default_factory=list)
    crashed: bool = False
    final_count: int | None = None


class _Arena:
    """Flat memory with guard bytes after each segment and explicit bounds."""

    def __init__(self, *segments):
        self.base: dict[str, tuple[int, int, int]] = {}  # name -> (start, cap, segment end)
        buf = bytearray()
        for seg in segments:
            seg_start = len(buf)
            seg_end = seg_start + sum(cap for _, cap in seg)
            for name, cap in seg:
                self.base[name] = (len(buf), cap, seg_end)
                buf.extend(bytes(cap))
            buf.extend(bytes([GUARD_BYTE]) * GUARD)
        self.buf = buf

    def load(self, addr: int) -> int:
        return self.buf[addr] if 0 <= addr < len(self.buf) else 0

    def store(self, name: str, offset: int, data: bytes, res: ReferenceResult) -> bool:
        """Store with bounds checks; returns False when a byte left the model."""
        start, cap, seg_end = self.base[name]
        limit = seg_end + GUARD
        if offset + len(data) > cap:
            first = max(offset, cap)
            res.overflows.append({"region": name, "offset": first, "len": offset + len(data) - first,
                                  "data": data[first - offset:].hex()})
        ok = True
        for i, b in enumerate(data):
            addr = start + offset + i
            if addr >= limit:
                ok = False
                continue
            if addr >= seg_end:
                if self.buf[addr] != b:
                    res.guard_hits.append({"region": name, "guard_offset": addr - seg_end})
            self.buf[addr] = b
        return ok


def synaptics_reference(table: DescriptorTable) -> ReferenceResult:
    """What the unchecked probe loop does to the heap object, step by step."""
    arena = _Arena(HEAP_REGIONS, (("stack", STACK_BYTES),))
    res = ReferenceResult()
    map_start = arena.base["irq_enable_map"][0]
    count_start = arena.base["irq_source_count"][0]

    def count() -> int:
        return int.from_bytes(bytes(arena.load(count_start + i) for i in range(4)), "little")

    for page in table.pages:
        for raw in page:
            if raw[0] == 0:
                break
            n = raw[5] & 0x07
            first = count()
            for k in range(n):
                bit = first + k
                byte = arena.load(map_start + bit // 8) | 1 << (bit % 8)
                if not arena.store("irq_enable_map", bit // 8, bytes([byte]), res):
                    res.crashed = True
                    res.final_count = count()
                    return res
            arena.store("irq_source_count", 0, ((count() + n) & 0xFFFFFFFF).to_bytes(4, "little"), res)
    res.final_count = count()
    return res


def atmel_reference(table: EntityTable, fill=content_byte) -> ReferenceResult:
    arena = _Arena(ATMEL_REGIONS)
    res = ReferenceResult()
    regs = table.image()
    for _, start, size in table.entities:
        n = min(size, ENTITY_READ_MAX)
        if n == 0:
            continue
        data = bytes(regs.get((start + i) & 0xFFFF, fill((start + i) & 0xFFFF)) for i in range(n))
        arena.store("entity_buffer", 0, data, res)
        if res.overflows:
            res.crashed = True
            break
    return res


# -- generators -----------------------------------------------------------------------

BENIGN_IRQ_BUDGET = 32  # bits in the enable map


def _descriptor(rng: random.Random, irq: int) -> bytes:
    fid = rng.randrange(1, 0x100)
    return bytes([fid, rng.randrange(0xD0), rng.randrange(0xD0), rng.randrange(0xD0),
                  rng.randrange(0xD0), (rng.randrange(0x20) << 3) | irq])


def random_descriptor_table(rng: random.Random, benign: bool = False) -> DescriptorTable:
    budget = BENIGN_IRQ_BUDGET
    pages = []
    for _ in range(rng.randrange(1, PAGES + 1)):
        page = []
        for _ in range(rng.randrange(0, SLOTS_PER_PAGE + 1)):
            irq = rng.randrange(8)
            if benign:
                irq = min(irq, budget)
                budget -= irq
            page.append(_descriptor(rng, irq))
        pages.append(tuple(page))
    return DescriptorTable(tuple(pages))


def random_entity_table(rng: random.Random, benign: bool = False) -> EntityTable:
    ents = []
    for _ in range(rng.randrange(1, 7)):
        size = rng.randrange(0, 81) if benign else rng.choice(
            [rng.randrange(0, 81), rng.randrange(81, 3000), rng.randrange(0, 0x10000)])
        ents.append((rng.randrange(1, 0x100), rng.randrange(0x0100, 0xF000), size))
    return EntityTable(tuple(ents))


# -- regression corpus ----------------------------------------------------------------

def _corpus_synaptics_1680() -> DescriptorTable:
    from ..attacker.exploit import craft_descriptor_set
    profile = ControllerProfile.load(SYNAPTICS)
    crafted = craft_descriptor_set(profile)
    pages: list[list[bytes]] = [[] for _ in range(PAGES)]
    for page, d in profile.descriptors:
        pages[page].append(d.to_bytes())
    for addr, d in zip(crafted.slots, crafted.descriptors):
        pages[addr >> 8].append(d.to_bytes())
    return DescriptorTable(tuple(tuple(p) for p in pages))


def _corpus_atmel_2048() -> EntityTable:
    profile = ControllerProfile.load(ATMEL)
    ents = [(e["type"], e["start"], e["size"]) for e in profile.entities]
    typ, start, _ = ents[-1]
    ents[-1] = (typ, start, 2048)
    return EntityTable(tuple(ents))


CORPUS = {
    "synaptics_1680": (SYNAPTICS, _corpus_synaptics_1680),
    "atmel_2048": (ATMEL, _corpus_atmel_2048),
}


# -- running cases ----------------------------------------------------------------------

@dataclass
class FuzzCase:
    index: int
    name: str
    table: object
    overflows: list[dict]
    guard_hits: list[dict]
    crashed: bool
    reference: ReferenceResult
    final_count: int | None = None

    @property
    def violations(self) -> int:
        return len(self.overflows) + len(self.guard_hits)

    @property
    def matches_reference(self) -> bool:
        return (dumps_records(self.overflows) == dumps_records(self.reference.overflows)
                and self.guard_hits == self.reference.guard_hits
                and self.crashed == self.reference.crashed
                and (self.final_count is None or self.final_count == self.reference.final_count))

    @property
    def classification(self) -> str:
        if not self.violations:
            return "clean"
        region = self.overflows[0]["region"] if self.overflows else self.guard_hits[0]["region"]
        label = {"irq_enable_map": "irq map overflow",
                 "entity_buffer": f"entity buffer overflow at offset {self.overflows[0]['offset']}"
                 if self.overflows else "entity buffer overflow"}.get(region, f"{region} overflow")
        return label + (" + crash" if self.crashed else "")

    def to_obj(self) -> dict:
        return {"index": self.index, "name": self.name, "table": self.table.to_obj(),
                "violations": self.violations, "crashed": self.crashed,
                "classification": self.classification, "matches_reference": self.matches_reference,
                "overflows": self.overflows}


def dumps_records(records: list[dict]) -> bytes:
    """Canonical bytes of an overflow list, for byte-for-byte comparison."""
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n"
                   for r in records).encode()


def _sandbox_records(sandbox) -> tuple[list[dict], list[dict]]:
    overflows = [{"region": o.region, "offset": o.offset, "len": o.length, "data": o.data.hex()}
                 for o in sandbox.overflow_log]
    guards = [{"region": c.region, "guard_offset": c.canary_offset} for c in sandbox.canary_log]
    return overflows, guards


def run_synaptics_case(table: DescriptorTable, index: int = 0, name: str = "random") -> FuzzCase:
    bus = Bus(ImageDevice(table.image()), profile=SYNAPTICS)
    drv = SynapticsDriver(bus, DriverProfile(name=SYNAPTICS))
    drv.boot_probe()
    overflows, guards = _sandbox_records(drv.sandbox)
    return FuzzCase(index, name, table, overflows, guards, drv.crashed,
                    synaptics_reference(table), drv.irq_source_count)


def run_atmel_case(table: EntityTable, index: int = 0, name: str = "random") -> FuzzCase:
    bus = Bus(ImageDevice(table.image(), content_byte), slave_addr=0x4A, profile=ATMEL)
    drv = AtmelDriver(bus, DriverProfile(name=ATMEL))
    result = drv.probe()
    overflows, guards = _sandbox_records(drv.sandbox)
    return FuzzCase(index, name, table, overflows, guards, result.crashed, atmel_reference(table))


def run_corpus_item(name: str) -> FuzzCase:
    profile, build = CORPUS[name]
    table = build()
    runner = run_synaptics_case if profile == SYNAPTICS else run_atmel_case
    return runner(table, -1, name)


@dataclass
class FuzzSummary:
    profile: str
    seed: int
    iterations: int
    benign: bool
    corpus: list[FuzzCase]
    cases: list[FuzzCase]

    @property
    def violating(self) -> list[FuzzCase]:
        return [c for c in self.cases if c.violations]

    @property
    def mismatches(self) -> list[FuzzCase]:
        return [c for c in self.corpus + self.cases if not c.matches_reference]

    @property
    def crashes(self) -> int:
        return sum(c.crashed for c in self.cases)

    @property
    def ok(self) -> bool:
        """Reference agrees everywhere, every corpus item is caught, benign runs stay clean."""
        if self.mismatches or any(not c.violations for c in self.corpus):
            return False
        return not (self.benign and self.violating)

    def to_obj(self) -> dict:
        return {"v": 1, "profile": self.profile, "seed": self.seed, "iterations": self.iterations,
                "benign": self.benign, "violating_cases": len(self.violating),
                "violations": sum(c.violations for c in self.cases), "crashes": self.crashes,
                "mismatches": len(self.mismatches),
                "corpus": {c.name: c.classification for c in self.corpus}, "ok": self.ok}

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"fuzz {self.profile} seed={self.seed} n={self.iterations}"
                 f"{' benign' if self.benign else ''}: {'OK' if self.ok else 'FAIL'}"]
        for c in self.corpus:
            lines.append(f"  corpus {c.name}: {c.classification}"
                         f"{'' if c.matches_reference else ' (reference mismatch)'}")
        lines.append(f"  {len(self.violating)}/{self.iterations} cases with violations, "
                     f"{self.crashes} crashes, {len(self.mismatches)} reference mismatches")
        return "\n".join(lines)


def fuzz(profile: str, seed: int, iterations: int, *, benign: bool = False,
         corpus: bool = True) -> FuzzSummary:
    """Boot the driver against ``iterations`` random tables drawn from ``seed``."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    try:
        profile = PROFILE_ALIASES[profile]
    except KeyError:
        raise ValueError(f"no fuzz target for profile {profile!r}") from None
    rng = random.Random(seed)
    if profile == SYNAPTICS:
        cases = [run_synaptics_case(random_descriptor_table(rng, benign), i) for i in range(iterations)]
    else:
        cases = [run_atmel_case(random_entity_table(rng, benign), i) for i in range(iterations)]
    items = [run_corpus_item(n) for n, (p, _) in CORPUS.items() if p == profile] if corpus else []
    return FuzzSummary(profile, seed, iterations, benign, items, cases)
