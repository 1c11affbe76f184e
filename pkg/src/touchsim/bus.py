"""Virtual I2C bus between the host (driver) and a touch controller.

The bus is a single-threaded discrete-event simulator. Time is counted in
integer microseconds. Every register transfer is charged 9 bit-times per
byte (8 data bits + ack) at 400 kbps, i.e. 22.5 us per byte rounded up.

Interposers sit on the wire between master and slave. Requests travel
master -> slave through them in order, interrupt edges travel back
slave -> master. Each hop may pass, drop or rewrite what it sees.

The trace records the bus as observed from the host side of the
interposer chain, the way a logic analyzer clipped onto the motherboard
connector would see it.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable, Protocol

BITS_PER_BYTE = 9
BUS_RATE_BPS = 400_000
DEFAULT_SLAVE_ADDR = 0x20
ADDRESS_BYTES = 2


class BusError(Exception):
    pass


class NoAck(BusError):
    """The addressed slave (or whatever answers for it) did not acknowledge."""


class EmptyPayload(BusError):
    pass


class ShortRead(BusError):
    def __init__(self, reg_addr: int, wanted: int, got: int):
        super().__init__(f"read of 0x{reg_addr:04x}: wanted {wanted} bytes, got {got}")
        self.reg_addr = reg_addr
        self.wanted = wanted
        self.got = got


class Source(str, enum.Enum):
    DRIVER = "driver"
    CONTROLLER = "controller"
    INTERPOSER = "mitm"
    FIREWALL = "firewall"


class Kind(str, enum.Enum):
    WRITE = "W"
    READ = "R"
    IRQ_ASSERT = "IRQ1"
    IRQ_CLEAR = "IRQ0"
    POWER_OFF = "PWR0"
    POWER_ON = "PWR1"


@dataclass(frozen=True)
class BusTransaction:
    tick: int
    source: Source
    kind: Kind
    slave_addr: int = DEFAULT_SLAVE_ADDR
    reg_addr: int | None = None
    data: bytes = b""
    read_len: int | None = None

    def __post_init__(self):
        if not 0 <= self.slave_addr <= 0x7F:
            raise ValueError(f"slave address 0x{self.slave_addr:x} does not fit in 7 bits")
        if self.reg_addr is not None and not 0 <= self.reg_addr <= 0xFFFF:
            raise ValueError(f"register address 0x{self.reg_addr:x} does not fit in 16 bits")
        if self.tick < 0:
            raise ValueError("negative tick")

    @property
    def blocked(self) -> bool:
        """True for a transfer the firewall refused (the master saw a NACK)."""
        if self.source is not Source.FIREWALL:
            return False
        return self.kind is Kind.WRITE or (self.kind is Kind.READ and not self.data)


def transfer_time(byte_count: int) -> int:
    """Microseconds needed to clock ``byte_count`` bytes at 400 kbps."""
    if byte_count < 0:
        raise ValueError("byte_count must be >= 0")
    # 9 bits / 0.4 bits-per-us == 22.5 us per byte; integer ceil of n * 45 / 2
    return -(-byte_count * BITS_PER_BYTE * 1_000_000 // BUS_RATE_BPS)


def wire_bytes(txn: BusTransaction) -> int:
    """Bytes a record occupied on the wire, as charged by the timing model.

    Writes carry the two register-address bytes plus payload. Reads are
    charged for the returned data only. Transfers NACKed by the firewall
    cost nothing on the host side.
    """
    if txn.blocked:
        return 0
    if txn.kind is Kind.WRITE:
        return ADDRESS_BYTES + len(txn.data)
    if txn.kind is Kind.READ:
        return txn.read_len or 0
    return 0


def busy_time(records) -> int:
    return sum(transfer_time(wire_bytes(r)) for r in records)


@dataclass
class Reply:
    """What came back through the chain for one request."""

    data: bytes = b""
    source: Source = Source.CONTROLLER
    blocked: bool = False


class Endpoint(Protocol):
    """A slave device on the bus."""

    powered: bool

    def read(self, reg_addr: int, read_len: int) -> bytes: ...

    def write(self, reg_addr: int, data: bytes) -> None: ...


class Interposer:
    """Pass-through hop. Subclasses override the hooks they care about."""

    def attach(self, bus: "Bus") -> None:
        self.bus = bus

    def read(self, reg_addr: int, read_len: int, forward: Callable[[int, int], Reply]) -> Reply:
        return forward(reg_addr, read_len)

    def write(self, reg_addr: int, data: bytes, forward: Callable[[int, bytes], Reply]) -> Reply:
        return forward(reg_addr, data)

    def irq(self, asserted: bool, source: Source, forward: Callable[[bool, Source], None]) -> None:
        forward(asserted, source)


class Scheduler:
    """Deterministic event queue ordered by (tick, insertion order)."""

    def __init__(self):
        self.now = 0
        self._queue: list = []
        self._seq = itertools.count()

    def call_at(self, tick: int, fn: Callable[[], object]) -> None:
        heapq.heappush(self._queue, (max(int(tick), 0), next(self._seq), fn))

    def call_later(self, delay: int, fn: Callable[[], object]) -> None:
        self.call_at(self.now + delay, fn)

    def advance(self, ticks: int) -> None:
        self.now += ticks

    def pending(self) -> bool:
        return bool(self._queue)

    def next_tick(self) -> int | None:
        return self._queue[0][0] if self._queue else None

    def run(self, until: int | None = None, inclusive: bool = True) -> None:
        """Run queued events; with ``until`` stop before later events and idle to it.

        ``inclusive=False`` leaves events due exactly at ``until`` queued.
        """
        while self._queue:
            tick = self._queue[0][0]
            if until is not None and (tick > until or (not inclusive and tick == until)):
                break
            _, _, fn = heapq.heappop(self._queue)
            # transfers may already have pushed the clock past the due tick
            self.now = max(self.now, tick)
            fn()
        if until is not None:
            self.now = max(self.now, until)


@dataclass
class Trace:
    seed: int = 0
    profile: str = "synaptics_like"
    records: list[BusTransaction] = field(default_factory=list)
    format_version: int = 1
    scenario: str | None = None
    policy: str | None = None


class Bus:
    """Host-side view of the I2C segment plus its interrupt line."""

    def __init__(self, slave: Endpoint | None = None, *, slave_addr: int = DEFAULT_SLAVE_ADDR,
                 seed: int = 0, profile: str = "synaptics_like", scheduler: Scheduler | None = None):
        if not 0 <= slave_addr <= 0x7F:
            raise ValueError("slave address must fit in 7 bits")
        self.slave = slave
        self.slave_addr = slave_addr
        self.interposers: list[Interposer] = []
        self.sched = scheduler or Scheduler()
        self.trace = Trace(seed=seed, profile=profile)
        self.irq_line = False
        self.busy_ticks = 0
        self._irq_handler: Callable[[], object] | None = None
        self._in_transfer = False
        self._deferred: list[tuple[bool, Source]] = []
        if slave is not None and hasattr(slave, "attach"):
            slave.attach(self)

    @property
    def now(self) -> int:
        return self.sched.now

    # topology -----------------------------------------------------------

    def install(self, interposer: Interposer, position: int | None = None) -> None:
        """Insert a hop; position 0 is closest to the master."""
        if position is None:
            self.interposers.append(interposer)
        else:
            self.interposers.insert(position, interposer)
        interposer.attach(self)

    def on_interrupt(self, handler: Callable[[], object] | None) -> None:
        self._irq_handler = handler

    def record(self, txn: BusTransaction) -> None:
        if self.trace.records and txn.tick < self.trace.records[-1].tick:
            raise AssertionError("trace ticks must be non-decreasing")
        self.trace.records.append(txn)

    def _txn(self, source: Source, kind: Kind, **kw) -> BusTransaction:
        return BusTransaction(self.now, source, kind, self.slave_addr, **kw)

    # request path -------------------------------------------------------

    def _slave_read(self, reg_addr: int, read_len: int) -> Reply:
        if self.slave is None or not self.slave.powered:
            raise NoAck(f"slave 0x{self.slave_addr:02x} not responding")
        if hasattr(self.slave, "read_reply"):
            return self.slave.read_reply(reg_addr, read_len)
        return Reply(self.slave.read(reg_addr, read_len), Source.CONTROLLER)

    def _slave_write(self, reg_addr: int, data: bytes) -> Reply:
        if self.slave is None or not self.slave.powered:
            raise NoAck(f"slave 0x{self.slave_addr:02x} not responding")
        self.slave.write(reg_addr, data)
        return Reply(b"", Source.CONTROLLER)

    def downstream_read(self, hop: int, reg_addr: int, read_len: int) -> Reply:
        """Issue a read from just after interposer ``hop`` toward the slave."""
        if hop >= len(self.interposers):
            return self._slave_read(reg_addr, read_len)
        nxt = self.interposers[hop]
        return nxt.read(reg_addr, read_len,
                        lambda r, n: self.downstream_read(hop + 1, r, n))

    def downstream_write(self, hop: int, reg_addr: int, data: bytes) -> Reply:
        if hop >= len(self.interposers):
            return self._slave_write(reg_addr, data)
        nxt = self.interposers[hop]
        return nxt.write(reg_addr, data,
                         lambda r, d: self.downstream_write(hop + 1, r, d))

    def write_reg(self, reg_addr: int, data: bytes) -> None:
        data = bytes(data)
        if not data:
            raise EmptyPayload("register write needs at least one data byte")
        start = self.now
        self._in_transfer = True
        try:
            reply = self.downstream_write(0, reg_addr, data)
        finally:
            self._in_transfer = False
        if reply.blocked:
            self.record(BusTransaction(start, Source.FIREWALL, Kind.WRITE, self.slave_addr,
                                       reg_addr, data))
            self._flush_irq()
            raise NoAck(f"write to 0x{reg_addr:04x} blocked")
        txn = BusTransaction(start, Source.DRIVER, Kind.WRITE, self.slave_addr, reg_addr, data)
        self.record(txn)
        self._charge(txn)
        self._flush_irq()

    def read_reg(self, reg_addr: int, read_len: int) -> bytes:
        if read_len < 1:
            raise ValueError("read_len must be >= 1")
        start = self.now
        self._in_transfer = True
        try:
            reply = self.downstream_read(0, reg_addr, read_len)
        finally:
            self._in_transfer = False
        if reply.blocked:
            self.record(BusTransaction(start, Source.FIREWALL, Kind.READ, self.slave_addr,
                                       reg_addr, b"", read_len))
            self._flush_irq()
            raise NoAck(f"read of 0x{reg_addr:04x} blocked")
        if len(reply.data) != read_len:
            self._flush_irq()
            raise ShortRead(reg_addr, read_len, len(reply.data))
        txn = BusTransaction(start, reply.source, Kind.READ, self.slave_addr, reg_addr,
                             bytes(reply.data), read_len)
        self.record(txn)
        self._charge(txn)
        self._flush_irq()
        return bytes(reply.data)

    def _charge(self, txn: BusTransaction) -> None:
        t = transfer_time(wire_bytes(txn))
        self.busy_ticks += t
        self.sched.advance(t)

    # interrupt line -----------------------------------------------------

    def set_irq(self, asserted: bool, source: Source, *, from_hop: int | None = None) -> None:
        """Drive the interrupt line from the slave side of hop ``from_hop``.

        ``from_hop=None`` means the slave itself; the edge then passes every
        interposer on its way to the master.
        """
        hop = len(self.interposers) if from_hop is None else from_hop
        self._irq_upstream(hop - 1, asserted, source)

    def _irq_upstream(self, hop: int, asserted: bool, source: Source) -> None:
        if hop < 0:
            self._line_at_master(asserted, source)
            return
        self.interposers[hop].irq(asserted, source,
                                  lambda a, s: self._irq_upstream(hop - 1, a, s))

    def assert_irq(self, source: Source = Source.CONTROLLER) -> None:
        self.set_irq(True, source)

    def clear_irq(self, source: Source = Source.CONTROLLER) -> None:
        self.set_irq(False, source)

    def _line_at_master(self, asserted: bool, source: Source) -> None:
        if self._in_transfer:
            # half-duplex: line changes land after the current transfer
            self._deferred.append((asserted, source))
            return
        if asserted == self.irq_line:
            return
        self.irq_line = asserted
        self.record(self._txn(source, Kind.IRQ_ASSERT if asserted else Kind.IRQ_CLEAR))
        if asserted and self._irq_handler is not None:
            self.sched.call_at(self.now, self._fire_irq)

    def _fire_irq(self) -> None:
        if self.irq_line and self._irq_handler is not None:
            self._irq_handler()

    def _flush_irq(self) -> None:
        pending, self._deferred = self._deferred, []
        for asserted, source in pending:
            self._line_at_master(asserted, source)

    # power --------------------------------------------------------------

    def power(self, on: bool, source: Source = Source.DRIVER) -> None:
        """Trace a power-rail change of the touch controller."""
        self.record(self._txn(source, Kind.POWER_ON if on else Kind.POWER_OFF))
        if self.slave is not None and source is Source.DRIVER:
            set_power = getattr(self.slave, "set_power", None)
            if set_power is not None:
                set_power(on)
