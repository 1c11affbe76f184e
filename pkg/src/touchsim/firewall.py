"""Motherboard-side bus firewall.

The firewall sits between the host and everything on the far side of the
connector, so a malicious replacement part cannot bypass it. Each
transaction is checked against an ordered rule list after the far side
has answered, which lets rules look at response bytes. The first matching
rule decides; otherwise the policy default applies.

Blocked transfers reach the host as a NACK and are traced with
``src=firewall``. Sanitized transfers are delivered with rewritten bytes.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .bus import BusTransaction, Interposer, Kind, Reply, Source
from .controller import (
    BITMAP_LEN, BITMAP_REG, PDT_ENTRY_SIZE, RECORD_LEN, REPORT_REG, TouchState, load_json_resource,
)


class Action(str, enum.Enum):
    PASS = "Pass"
    BLOCK = "Block"
    SANITIZE = "Sanitize"


@dataclass(frozen=True)
class Verdict:
    action: Action
    rule_id: str | None = None
    reason: str = ""
    replacement: bytes | None = None
    clamp_len: int | None = None

    @property
    def blocked(self) -> bool:
        return self.action is Action.BLOCK


@dataclass(frozen=True)
class RateWindow:
    limit: float  # taps per second
    window_us: int = 1_000_000

    def __post_init__(self):
        if self.window_us < 1_000_000:
            raise ValueError("rate window must span at least one simulated second")


@dataclass(frozen=True)
class Match:
    kinds: frozenset[Kind] | None = None
    reg: tuple[int, int] | None = None
    descriptor_read: bool = False
    len_min: int | None = None
    len_max: int | None = None
    response_nonzero: bool = False
    touch_rate: RateWindow | None = None

    @classmethod
    def from_dict(cls, obj: dict) -> "Match":
        reg = obj.get("reg")
        rate = obj.get("touch_rate")
        return cls(
            kinds=frozenset(Kind(k) for k in obj["kind"]) if "kind" in obj else None,
            reg=(int(str(reg[0]), 0), int(str(reg[1]), 0)) if reg else None,
            descriptor_read=bool(obj.get("descriptor_read", False)),
            len_min=obj.get("len_min"), len_max=obj.get("len_max"),
            response_nonzero=bool(obj.get("response_nonzero", False)),
            touch_rate=RateWindow(rate["limit"], rate["window_us"]) if rate else None,
        )


@dataclass(frozen=True)
class Rule:
    id: str
    match: Match
    verdict: Action
    reason: str = ""
    replacement: bytes | None = None
    clamp_len: int | None = None

    def to_verdict(self) -> Verdict:
        return Verdict(self.verdict, self.id, self.reason or self.id, self.replacement, self.clamp_len)


@dataclass(frozen=True)
class Policy:
    rules: tuple[Rule, ...] = ()
    default: Action = Action.PASS
    name: str = "inline"

    @classmethod
    def from_dict(cls, obj: dict, name: str = "inline") -> "Policy":
        from .schemas import validate
        validate(obj, "policy")
        rules = tuple(Rule(r["id"], Match.from_dict(r["match"]), Action(r["verdict"]),
                           r.get("reason", ""),
                           bytes.fromhex(r["replacement"]) if "replacement" in r else None,
                           r.get("clamp_len"))
                      for r in obj["rules"])
        return cls(rules, Action(obj["default"]), name)

    @classmethod
    def load(cls, name_or_path: str | Path) -> "Policy":
        """A policy file, or a shipped policy by name (``default``, ``strict``, ...)."""
        p = Path(name_or_path)
        if p.is_file():
            return cls.from_dict(json.loads(p.read_text(encoding="utf-8")), p.stem)
        try:
            obj = load_json_resource("policies", f"{p.stem}.json")
        except FileNotFoundError:
            raise FileNotFoundError(f"no policy file or shipped policy named {name_or_path}") from None
        return cls.from_dict(obj, p.stem)

    @property
    def window_us(self) -> int:
        spans = [r.match.touch_rate.window_us for r in self.rules if r.match.touch_rate]
        return max(spans, default=0)


@dataclass
class History:
    """Bounded memory the rules may consult."""

    window_us: int = 0
    taps: deque = field(default_factory=deque)  # ticks of delivered finger-down events
    bitmap: int | None = None

    def prune(self, now: int) -> None:
        while self.taps and self.taps[0] <= now - self.window_us:
            self.taps.popleft()


def rate_guard(tap_ticks, now: int, limit: float, window_us: int = 1_000_000) -> Verdict:
    """Block when the average tap rate over the trailing window exceeds ``limit``."""
    RateWindow(limit, window_us)
    count = sum(1 for t in tap_ticks if now - window_us < t <= now)
    rate = count * 1_000_000 / window_us
    if rate > limit:
        return Verdict(Action.BLOCK, "rate_guard", f"{rate:g} taps/s over limit {limit:g}")
    return Verdict(Action.PASS, "rate_guard", f"{rate:g} taps/s")


def _downs_in(txn: BusTransaction, bitmap: int | None) -> int:
    if txn.kind is not Kind.READ or txn.reg_addr != REPORT_REG or not bitmap:
        return 0
    n = 0
    for k in range(min(bin(bitmap).count("1"), len(txn.data) // RECORD_LEN)):
        if txn.data[k * RECORD_LEN] & 0x0F == TouchState.DOWN:
            n += 1
    return n


def _matches(m: Match, txn: BusTransaction, history: History) -> bool:
    if m.kinds is not None and txn.kind not in m.kinds:
        return False
    if m.reg is not None and (txn.reg_addr is None or not m.reg[0] <= txn.reg_addr <= m.reg[1]):
        return False
    n = txn.read_len if txn.kind is Kind.READ else len(txn.data)
    if m.descriptor_read and not (txn.kind is Kind.READ and n == PDT_ENTRY_SIZE):
        return False
    if m.len_min is not None and (n is None or n < m.len_min):
        return False
    if m.len_max is not None and (n is None or n > m.len_max):
        return False
    if m.response_nonzero and not any(txn.data):
        return False
    if m.touch_rate is not None:
        downs = _downs_in(txn, history.bitmap)
        if downs == 0:
            return False
        ticks = list(history.taps) + [txn.tick] * downs
        if not rate_guard(ticks, txn.tick, m.touch_rate.limit, m.touch_rate.window_us).blocked:
            return False
    return True


def evaluate(txn: BusTransaction, policy: Policy, history: History | None = None) -> Verdict:
    """First matching rule wins; history learns from what gets delivered."""
    history = history if history is not None else History(policy.window_us)
    history.window_us = max(history.window_us, policy.window_us)
    history.prune(txn.tick)
    verdict = Verdict(policy.default, None, f"default {policy.default.value}")
    for rule in policy.rules:
        if _matches(rule.match, txn, history):
            verdict = rule.to_verdict()
            break
    if not verdict.blocked and txn.kind is Kind.READ:
        if txn.reg_addr == BITMAP_REG:
            history.bitmap = int.from_bytes(txn.data[:BITMAP_LEN], "little")
        elif txn.reg_addr == REPORT_REG:
            history.taps.extend([txn.tick] * _downs_in(txn, history.bitmap))
            history.bitmap = None
    return verdict


def _fit(pattern: bytes, n: int) -> bytes:
    if not pattern:
        return bytes(n)
    return (pattern * (n // len(pattern) + 1))[:n]


class Firewall(Interposer):
    def __init__(self, policy: Policy):
        self.policy = policy
        self.history = History(policy.window_us)
        self.verdicts: list[tuple[BusTransaction, Verdict]] = []
        self.bus = None

    def attach(self, bus) -> None:
        self.bus = bus

    def _judge(self, txn: BusTransaction) -> Verdict:
        v = evaluate(txn, self.policy, self.history)
        self.verdicts.append((txn, v))
        return v

    def read(self, reg_addr, read_len, forward):
        reply = forward(reg_addr, read_len)
        txn = BusTransaction(self.bus.now, reply.source, Kind.READ, self.bus.slave_addr, reg_addr,
                             bytes(reply.data), read_len)
        v = self._judge(txn)
        if v.action is Action.BLOCK:
            return Reply(b"", Source.FIREWALL, blocked=True)
        if v.action is Action.SANITIZE:
            if v.replacement is not None:
                data = _fit(v.replacement, read_len)
            else:
                keep = v.clamp_len if v.clamp_len is not None else read_len
                data = bytes(reply.data[:keep]).ljust(read_len, b"\0")
            return Reply(data, Source.FIREWALL)
        return reply

    def write(self, reg_addr, data, forward):
        txn = BusTransaction(self.bus.now, Source.DRIVER, Kind.WRITE, self.bus.slave_addr,
                             reg_addr, bytes(data))
        v = self._judge(txn)
        if v.action is Action.BLOCK:
            return Reply(b"", Source.FIREWALL, blocked=True)
        if v.action is Action.SANITIZE and v.replacement:
            data = _fit(v.replacement, len(data))
        return forward(reg_addr, data)

    def irq(self, asserted, source, forward):
        txn = BusTransaction(self.bus.now, source, Kind.IRQ_ASSERT if asserted else Kind.IRQ_CLEAR,
                             self.bus.slave_addr)
        if not self._judge(txn).blocked:
            forward(asserted, source)

    @property
    def blocks(self) -> list[tuple[BusTransaction, Verdict]]:
        return [(t, v) for t, v in self.verdicts if v.blocked]


def install(bus, policy: Policy | str | Path) -> Firewall:
    """Put a firewall on the host side of every other interposer."""
    if not isinstance(policy, Policy):
        policy = Policy.load(policy)
    fw = Firewall(policy)
    bus.install(fw, position=0)
    return fw
