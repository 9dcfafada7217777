"""Answering comparison queries on a student's behalf."""
from .llm import (ChatResponse, HttpChatBackend, LlmProxy, ProxyAuthError, ProxyConfig,
                  ProxyTransportError, RecordingBackend, ReplayBackend, ReplayMissError,
                  StubBackend, llm_answer, make_backend, request_key)
from .narrative import Narrative, RuleBasedNarrator, generate_narrative
from .prompts import ParseError, parse_choice, render_cq_prompt, render_narrative_prompt
from .records import ComparisonRecord, TranscriptStore
from .simulated import simulated_answer, simulated_labels

__all__ = [
    "ChatResponse", "ComparisonRecord", "HttpChatBackend", "LlmProxy", "Narrative", "ParseError",
    "ProxyAuthError", "ProxyConfig", "ProxyTransportError", "RecordingBackend", "ReplayBackend",
    "ReplayMissError", "RuleBasedNarrator", "StubBackend", "TranscriptStore", "generate_narrative",
    "llm_answer", "make_backend", "parse_choice", "render_cq_prompt", "render_narrative_prompt",
    "request_key", "simulated_answer", "simulated_labels",
]
