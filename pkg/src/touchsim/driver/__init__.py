"""Driver model, instrumented memory, ROP interpreter and kernel state."""

from .driver import (
    AtmelDriver, AtmelProbeResult, DriverCrash, DriverProfile, FirmwareStatus, InterruptResult,
    MalformedReport, ProbeResult, SynapticsDriver, TouchEventOut, atmel_probe, decode_touch,
    firmware_check,
)
from .kernel import KernelState, PayloadId, UnknownPatchSite, apply_kernel_patch, default_patch_sites
from .rop import Call, CatalogIncomplete, GadgetCatalog, RopExecution, RopHalt, SimMachine, interpret_overflow
from .sandbox import SandboxMemory, atmel_sandbox, synaptics_sandbox
