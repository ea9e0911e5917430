"""Evaluation engine: prompts, chat endpoints, trials, metrics and reports."""

from .classify import classify_error, classify_message, precheck
from .endpoint import ChatEndpoint, EndpointConfig, ScriptedEndpoint, TokenBucket, make_endpoint
from .engine import EvalContext, TrialRecord, evaluate_lemma
from .metrics import acc_at_k, format_count_pct, percentage
from .prompts import PromptBundle, SamplingParams, assemble_prompt, select_demonstrations
from .report import RunReport, build_report

__all__ = ["ChatEndpoint", "EndpointConfig", "EvalContext", "PromptBundle", "RunReport",
           "SamplingParams", "ScriptedEndpoint", "TokenBucket", "TrialRecord", "acc_at_k",
           "assemble_prompt", "build_report", "classify_error", "classify_message",
           "evaluate_lemma", "format_count_pct", "make_endpoint", "percentage", "precheck",
           "select_demonstrations"]
