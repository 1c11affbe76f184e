"""JSON-lines codec for bus traces.

Line 1 is a header ``{"v":1,"seed":N,"profile":"name"}``, optionally with
``"scenario"`` and ``"policy"`` names when the trace came from a scripted run; every following
line is one record::

    {"t":1234,"src":"controller","ev":"R","sa":"0x20","reg":"0x0006","len":1,"data":"02"}

Fields that do not apply to a record kind are left out. Output is compact
(no spaces) so the same trace always serialises to the same bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import IO, Iterable

from .bus import BusTransaction, Kind, Source, Trace


class MalformedTrace(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def record_to_obj(r: BusTransaction) -> dict:
    obj = {"t": r.tick, "src": r.source.value, "ev": r.kind.value, "sa": f"0x{r.slave_addr:02x}"}
    if r.kind in (Kind.READ, Kind.WRITE):
        obj["reg"] = f"0x{r.reg_addr:04x}"
    if r.kind is Kind.READ:
        obj["len"] = r.read_len
    if r.kind in (Kind.READ, Kind.WRITE) and r.data:
        obj["data"] = r.data.hex()
    return obj


def dumps(trace: Trace) -> str:
    header = {"v": trace.format_version, "seed": trace.seed, "profile": trace.profile}
    if trace.scenario is not None:
        header["scenario"] = trace.scenario
    if trace.policy is not None:
        header["policy"] = trace.policy
    lines = [_dump(header)]
    lines.extend(_dump(record_to_obj(r)) for r in trace.records)
    return "\n".join(lines) + "\n"


def export_trace(trace: Trace, sink: str | Path | IO[str]) -> None:
    text = dumps(trace)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text, encoding="utf-8")
    else:
        sink.write(text)


def _hex_int(value, line: int, name: str) -> int:
    if not isinstance(value, str) or not value.startswith("0x"):
        raise MalformedTrace(line, f"{name} must be a 0x-prefixed hex string")
    try:
        return int(value, 16)
    except ValueError:
        raise MalformedTrace(line, f"bad hex in {name}: {value!r}") from None


def obj_to_record(obj: dict, line: int) -> BusTransaction:
    try:
        kind = Kind(obj["ev"])
        source = Source(obj["src"])
        tick = obj["t"]
    except (KeyError, ValueError) as exc:
        raise MalformedTrace(line, f"bad record: {exc}") from None
    if not isinstance(tick, int) or tick < 0:
        raise MalformedTrace(line, "t must be a non-negative integer")
    sa = _hex_int(obj.get("sa"), line, "sa")
    reg = read_len = None
    data = b""
    if kind in (Kind.READ, Kind.WRITE):
        reg = _hex_int(obj.get("reg"), line, "reg")
        try:
            data = bytes.fromhex(obj.get("data", ""))
        except ValueError:
            raise MalformedTrace(line, "data is not hex") from None
    if kind is Kind.READ:
        read_len = obj.get("len")
        if not isinstance(read_len, int) or read_len < 1:
            raise MalformedTrace(line, "len must be a positive integer")
        if data and len(data) != read_len:
            raise MalformedTrace(line, f"read carries {len(data)} bytes, len says {read_len}")
    try:
        return BusTransaction(tick, source, kind, sa, reg, data, read_len)
    except ValueError as exc:
        raise MalformedTrace(line, str(exc)) from None


def loads(text: str) -> Trace:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    else:
        # a complete file always ends in a newline
        raise MalformedTrace(max(len(lines), 1), "truncated final line")
    if not lines:
        raise MalformedTrace(1, "missing header")
    records = []
    header = None
    for no, raw in enumerate(lines, start=1):
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedTrace(no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise MalformedTrace(no, "expected a JSON object")
        if no == 1:
            header = obj
            continue
        rec = obj_to_record(obj, no)
        if records and rec.tick < records[-1].tick:
            raise MalformedTrace(no, "tick went backwards")
        records.append(rec)
    if header.get("v") != 1 or not isinstance(header.get("seed"), int) \
            or not isinstance(header.get("profile"), str):
        raise MalformedTrace(1, "bad header")
    names = {k: header.get(k) for k in ("scenario", "policy")}
    if any(v is not None and not isinstance(v, str) for v in names.values()):
        raise MalformedTrace(1, "bad header")
    return Trace(seed=header["seed"], profile=header["profile"], records=records,
                 format_version=header["v"], **names)


def import_trace(source: str | Path | IO[str]) -> Trace:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    return loads(text)


def reads(records: Iterable[BusTransaction], reg_addr: int | None = None):
    for r in records:
        if r.kind is Kind.READ and (reg_addr is None or r.reg_addr == reg_addr):
            yield r
