"""Tiny ARM64 register machine that runs the three-gadget ROP chain.

Only the gadgets listed in the catalog exist. Each one is executed at the
level of its load/move/branch semantics against the saved stack image;
anything else the corrupted return address points at is a crash.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from ..controller import load_json_resource
from .sandbox import SAVED_FP_OFFSET, SAVED_LR_OFFSET, SandboxMemory

MAX_STEPS = 64

GADGET_IDS = ("load_x19_x20", "mov_x2_x19", "call_x2")
WRITE_WORD = "mem_text_write_kernel_word"
RESUME = "irq_handler_return"


class RopHalt(Exception):
    """Control reached an address that is not a known gadget: the kernel oopses."""

    def __init__(self, address: int, reason: str = "not a gadget"):
        super().__init__(f"halt at 0x{address:016x}: {reason}")
        self.address = address


class CatalogIncomplete(LookupError):
    pass


@dataclass(frozen=True)
class Gadget:
    address: int
    id: str
    code: str


@dataclass
class GadgetCatalog:
    gadgets: dict[int, Gadget] = field(default_factory=dict)
    symbols: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj: dict) -> "GadgetCatalog":
        from ..schemas import validate
        validate(obj, "gadgets")
        gadgets = {}
        for row in obj["gadgets"]:
            g = Gadget(int(row["address"], 16), row["id"], row.get("code", ""))
            gadgets[g.address] = g
        symbols = {k: int(v, 16) for k, v in obj.get("symbols", {}).items()}
        return cls(gadgets, symbols)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "GadgetCatalog":
        if path is None:
            return cls.from_dict(load_json_resource("gadgets.json"))
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def address_of(self, gadget_id: str) -> int:
        for g in self.gadgets.values():
            if g.id == gadget_id:
                return g.address
        raise CatalogIncomplete(f"gadget {gadget_id} missing from catalog")

    def symbol(self, name: str) -> int:
        try:
            return self.symbols[name]
        except KeyError:
            raise CatalogIncomplete(f"symbol {name} missing from catalog") from None

    def require_complete(self) -> None:
        for gid in GADGET_IDS:
            self.address_of(gid)
        self.symbol(WRITE_WORD)
        self.symbol(RESUME)

    def without(self, gadget_id: str) -> "GadgetCatalog":
        return GadgetCatalog({a: g for a, g in self.gadgets.items() if g.id != gadget_id},
                             dict(self.symbols))


@dataclass(frozen=True)
class Call:
    target: int
    arg0: int
    arg1: int


@dataclass
class SimMachine:
    stack: bytes
    sp: int = 0
    regs: dict[str, int] = field(default_factory=lambda: dict.fromkeys(
        ("x0", "x1", "x2", "x19", "x20", "x21", "x29", "x30"), 0))
    call_log: list[Call] = field(default_factory=list)
    on_call: Callable[[Call], object] | None = None

    def load64(self, offset: int) -> int:
        if offset < 0 or offset + 8 > len(self.stack):
            raise RopHalt(self.regs["x30"], f"stack load at sp+{offset} outside frame")
        return int.from_bytes(self.stack[offset:offset + 8], "little")

    def ldp(self, a: str, b: str, offset: int) -> None:
        self.regs[a] = self.load64(self.sp + offset)
        self.regs[b] = self.load64(self.sp + offset + 8)

    def ldp_post(self, a: str, b: str, inc: int) -> None:
        self.ldp(a, b, 0)
        self.sp += inc

    def step(self, gadget: Gadget) -> None:
        r = self.regs
        if gadget.id == "load_x19_x20":
            self.ldp("x19", "x20", 0x10)
            self.ldp_post("x29", "x30", 0x20)
        elif gadget.id == "mov_x2_x19":
            r["x2"] = r["x19"]
            r["x0"] = r["x2"]
            self.ldp("x19", "x20", 0x10)
            self.ldp_post("x29", "x30", 0x30)
        elif gadget.id == "call_x2":
            r["x0"] = r["x19"]
            r["x1"] = r["x20"]
            call = Call(r["x2"], r["x0"], r["x1"])
            self.call_log.append(call)
            if self.on_call is not None:
                self.on_call(call)
            self.ldp("x19", "x20", 0x10)
            r["x21"] = self.load64(self.sp + 0x20)
            self.ldp_post("x29", "x30", 0x30)
        else:
            raise RopHalt(gadget.address, f"no semantics for gadget {gadget.id}")


@dataclass
class RopExecution:
    call_log: list[Call]
    steps: list[str]
    hijacked: bool
    resumed: bool


def interpret_overflow(sandbox: SandboxMemory, catalog: GadgetCatalog,
                       on_call: Callable[[Call], object] | None = None) -> RopExecution:
    """Return from the smashed interrupt-handler frame and follow the chain.

    The handler epilogue restores x29/x30 from the saved slots and pops the
    frame. If x30 still holds the genuine return address nothing happens.
    ``on_call`` sees every ``blr`` as it happens, so side effects survive a
    later crash of the chain.
    """
    frame = sandbox.peek("status_buf", 0, sandbox.regions["status_buf"].capacity
                         + sum(sandbox.regions[n].capacity
                               for n in ("pad", "saved_fp", "saved_lr", "caller_area")))
    m = SimMachine(stack=frame, on_call=on_call)
    m.regs["x29"] = m.load64(SAVED_FP_OFFSET)
    m.regs["x30"] = m.load64(SAVED_LR_OFFSET)
    m.sp = SAVED_LR_OFFSET + 8
    resume = catalog.symbols.get(RESUME)
    if m.regs["x30"] == resume:
        return RopExecution([], [], hijacked=False, resumed=True)
    steps = []
    pc = m.regs["x30"]
    for _ in range(MAX_STEPS):
        if pc == resume:
            return RopExecution(m.call_log, steps, hijacked=True, resumed=True)
        gadget = catalog.gadgets.get(pc)
        if gadget is None:
            raise RopHalt(pc)
        if gadget.id == "call_x2" and m.regs["x2"] not in catalog.symbols.values():
            raise RopHalt(m.regs["x2"], "blr into unknown code")
        m.step(gadget)
        steps.append(gadget.id)
        pc = m.regs["x30"]
    raise RopHalt(pc, "chain did not terminate")
