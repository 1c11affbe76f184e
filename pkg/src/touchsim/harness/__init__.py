"""Scenario runner, phone UI model, fuzzer, trace summaries and the CLI."""

from .fuzz import FuzzCase, FuzzSummary, atmel_reference, fuzz, run_corpus_item, synaptics_reference
from .phone import Effect, PhoneUiState, Screen, SystemEvent, UiLayout, default_ui, ui_step
from .report import TraceSummary, summarize_trace
from .scenario import (
    SHIPPED_SCENARIOS, Report, ScenarioScript, ScriptError, World, replay_scenario, run_scenario,
)
