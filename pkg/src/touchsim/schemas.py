"""JSON schemas for every data file the simulator reads.

Each file format carries a ``"v": 1`` version field. ``validate`` raises
``SchemaError`` with the offending path so bad config fails loudly at load.
"""

from __future__ import annotations

import jsonschema

HEX = {"type": "string", "pattern": "^0x[0-9a-fA-F]+$"}
HEX_OR_INT = {"anyOf": [HEX, {"type": "integer", "minimum": 0}]}
VERSION = {"const": 1}

_DESCRIPTOR = {
    "type": "object",
    "required": ["function_id", "query", "command", "control", "data"],
    "properties": {
        "function_id": HEX_OR_INT, "query": HEX_OR_INT, "command": HEX_OR_INT,
        "control": HEX_OR_INT, "data": HEX_OR_INT,
        "irq_sources": {"type": "integer", "minimum": 0, "maximum": 7},
        "page": {"type": "integer", "minimum": 0, "maximum": 9},
    },
    "additionalProperties": False,
}

_ENTITY = {
    "type": "object",
    "required": ["type", "start", "size"],
    "properties": {
        "type": {"type": "integer", "minimum": 0, "maximum": 255},
        "start": HEX_OR_INT,
        "size": {"type": "integer", "minimum": 0, "maximum": 0xFFFF},
        "instances": {"type": "integer", "minimum": 0, "maximum": 255},
    },
    "additionalProperties": False,
}

_RECT = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 4, "maxItems": 4}

_MATCH = {
    "type": "object",
    "properties": {
        "kind": {"type": "array", "items": {"enum": ["W", "R", "IRQ1", "IRQ0", "PWR0", "PWR1"]}},
        "reg": {"type": "array", "items": HEX_OR_INT, "minItems": 2, "maxItems": 2},
        "descriptor_read": {"type": "boolean"},
        "len_min": {"type": "integer", "minimum": 0},
        "len_max": {"type": "integer", "minimum": 0},
        "response_nonzero": {"type": "boolean"},
        "touch_rate": {
            "type": "object",
            "required": ["limit", "window_us"],
            "properties": {"limit": {"type": "number", "exclusiveMinimum": 0},
                           "window_us": {"type": "integer", "minimum": 1_000_000}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_VERDICT = {"enum": ["Pass", "Block", "Sanitize"]}

SCHEMAS: dict[str, dict] = {
    "profile": {
        "type": "object",
        "required": ["v", "name"],
        "properties": {
            "v": VERSION,
            "name": {"type": "string", "minLength": 1},
            "slave_addr": HEX_OR_INT,
            "panel": {"type": "object",
                      "properties": {"width": {"type": "integer", "minimum": 1, "maximum": 0xFFFF},
                                     "height": {"type": "integer", "minimum": 1, "maximum": 0xFFFF}}},
            "firmware_version": {"type": "string", "pattern": "^([0-9a-fA-F]{2}){4}$"},
            "descriptors": {"type": "array", "items": _DESCRIPTOR},
            "entities": {"type": "array", "items": _ENTITY},
            "driver": {"type": "object",
                       "additionalProperties": {"type": "integer", "minimum": 1}},
        },
        "additionalProperties": False,
    },
    "gadgets": {
        "type": "object",
        "required": ["v", "gadgets"],
        "properties": {
            "v": VERSION,
            "gadgets": {"type": "array", "items": {
                "type": "object", "required": ["address", "id"],
                "properties": {"address": HEX, "id": {"type": "string"}, "code": {"type": "string"}},
                "additionalProperties": False}},
            "symbols": {"type": "object", "additionalProperties": HEX},
        },
        "additionalProperties": False,
    },
    "patch_sites": {
        "type": "object",
        "required": ["v", "sites"],
        "properties": {
            "v": VERSION,
            "sites": {"type": "array", "items": {
                "type": "object", "required": ["payload", "symbol", "address", "word", "sets"],
                "properties": {"payload": {"type": "string"}, "symbol": {"type": "string"},
                               "address": HEX, "word": HEX,
                               "sets": {"type": "object", "additionalProperties": {"type": "boolean"}}},
                "additionalProperties": False}},
        },
        "additionalProperties": False,
    },
    "layout": {
        "type": "object",
        "required": ["v", "modes"],
        "properties": {
            "v": VERSION,
            "modes": {"type": "object", "additionalProperties": {
                "type": "array", "items": {
                    "type": "object", "required": ["rect", "symbol"],
                    "properties": {"rect": _RECT, "symbol": {"type": "string", "minLength": 1}},
                    "additionalProperties": False}}},
        },
        "additionalProperties": False,
    },
    "phish_map": {
        "type": "object",
        "required": ["v", "map"],
        "properties": {"v": VERSION,
                       "map": {"type": "object", "additionalProperties": {"type": "string"}}},
        "additionalProperties": False,
    },
    "ui": {
        "type": "object",
        "required": ["v", "pattern_dots", "targets"],
        "properties": {
            "v": VERSION,
            "pattern_dots": {"type": "array", "items": {
                "type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                "minItems": 9, "maxItems": 9},
            "dot_radius": {"type": "integer", "minimum": 1},
            "whiteboard_url": {"type": "string"},
            "targets": {"type": "object", "additionalProperties": {
                "type": "object", "additionalProperties": _RECT}},
        },
        "additionalProperties": False,
    },
    "policy": {
        "type": "object",
        "required": ["v", "rules", "default"],
        "properties": {
            "v": VERSION,
            "rules": {"type": "array", "items": {
                "type": "object", "required": ["id", "match", "verdict"],
                "properties": {"id": {"type": "string"}, "match": _MATCH, "verdict": _VERDICT,
                               "replacement": {"type": "string", "pattern": "^([0-9a-f]{2})*$"},
                               "clamp_len": {"type": "integer", "minimum": 1},
                               "reason": {"type": "string"}},
                "additionalProperties": False}},
            "default": _VERDICT,
        },
        "additionalProperties": False,
    },
    "scenario": {
        "type": "object",
        "required": ["v", "name", "budget_seconds", "steps", "expects"],
        "properties": {
            "v": VERSION,
            "name": {"type": "string", "minLength": 1},
            "profile": {"type": "string"},
            "seed": {"type": "integer", "minimum": 0},
            "budget_seconds": {"type": "number", "exclusiveMinimum": 0},
            "budget_strict": {"type": "boolean"},
            "window": {"enum": ["run", "attack"]},
            "actors": {"type": "object"},
            "initial": {"type": "object"},
            "steps": {"type": "array", "items": {
                "type": "object", "required": ["action"],
                "properties": {"at_ms": {"type": "number", "minimum": 0},
                               "after_ms": {"type": "number", "minimum": 0},
                               "action": {"type": "string"},
                               "args": {"type": "object"}},
                "additionalProperties": False}},
            "expects": {"type": "array", "items": {
                "type": "object", "required": ["check"],
                "properties": {"check": {"type": "string"}},
                "additionalProperties": True}},
            "expects_with_firewall": {"type": "array", "items": {
                "type": "object", "required": ["check"],
                "additionalProperties": True}},
        },
        "additionalProperties": False,
    },
}


class SchemaError(ValueError):
    pass


def validate(obj, name: str) -> None:
    try:
        schema = SCHEMAS[name]
    except KeyError:
        raise SchemaError(f"no schema named {name}") from None
    try:
        jsonschema.validate(obj, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{name}: {where}: {exc.message}") from None
