"""Simulated kernel state that exploit payloads tamper with."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path

from ..controller import load_json_resource


class PayloadId(str, enum.Enum):
    DISABLE_SETUID_CHECKS = "DisableSetuidChecks"
    SILENCE_SELINUX = "SilenceSelinux"
    DISABLE_USER_BUFFER_CHECKS = "DisableUserBufferChecks"
    HIDDEN_BACKDOOR = "HiddenBackdoor"


class UnknownPatchSite(LookupError):
    pass


@dataclass
class KernelState:
    setuid_checks_enabled: bool = True
    selinux_enforcing: bool = True
    selinux_reporting: bool = True
    user_buffer_checks_enabled: bool = True
    hidden_backdoor_present: bool = False
    clear_refs_vulnerable: bool = False
    patched_words: dict[int, int] = field(default_factory=dict)

    def flags(self) -> dict[str, bool]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "patched_words"}

    def pristine(self) -> bool:
        return self.flags() == KernelState().flags() and not self.patched_words

    def snapshot(self) -> dict:
        snap = asdict(self)
        snap["patched_words"] = {f"0x{a:x}": f"0x{w:08x}" for a, w in self.patched_words.items()}
        return snap


@dataclass(frozen=True)
class PatchSite:
    payload: PayloadId
    symbol: str
    address: int
    word: int
    sets: tuple[tuple[str, bool], ...]


def load_patch_sites(path: str | Path | None = None) -> dict[PayloadId, PatchSite]:
    if path is None:
        obj = load_json_resource("patch_sites.json")
    else:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    from ..schemas import validate
    validate(obj, "patch_sites")
    sites = {}
    for row in obj["sites"]:
        pid = PayloadId(row["payload"])
        sites[pid] = PatchSite(pid, row["symbol"], int(row["address"], 16), int(row["word"], 16),
                               tuple(sorted(row["sets"].items())))
    return sites


_DEFAULT_SITES: dict[PayloadId, PatchSite] | None = None


def default_patch_sites() -> dict[PayloadId, PatchSite]:
    global _DEFAULT_SITES
    if _DEFAULT_SITES is None:
        _DEFAULT_SITES = load_patch_sites()
    return _DEFAULT_SITES


def apply_kernel_patch(kernel: KernelState, target_addr: int, word: int,
                       sites: dict[PayloadId, PatchSite] | None = None) -> KernelState:
    """Write ``word`` at ``target_addr`` and update any flag that site controls.

    The word is always recorded. An address/word pair that is not in the
    site table raises UnknownPatchSite after recording, leaving flags alone.
    """
    kernel.patched_words[target_addr] = word
    for site in (sites or default_patch_sites()).values():
        if site.address == target_addr and site.word == word:
            for name, value in site.sets:
                setattr(kernel, name, value)
            return kernel
    raise UnknownPatchSite(f"no known effect for word 0x{word:x} at 0x{target_addr:x}")
