"""Multi-round prompting harness for agricultural machinery consultation."""

__version__ = "0.1.0"

from .domain import (  # noqa: E402
    AggregateRow,
    ChatMessage,
    EvaluationRecord,
    JudgeScore,
    Method,
    ModelCall,
    Role,
    Scenario,
    Transcript,
    canonicalize_text,
    validate_scenario,
)
from .gateway import (  # noqa: E402
    CompletionRequest,
    CompletionResponse,
    HttpBackend,
    ModelEndpoint,
    RecordingBackend,
    ReplayBackend,
    ResponseCache,
    RetryPolicy,
    ScriptedBackend,
    complete,
    request_digest,
)
from .strategies import (  # noqa: E402
    FocusItem,
    StrategyConfig,
    build_followup_prompt,
    build_initial_prompt,
    extract_focus_items,
    run_base,
    run_cot,
    run_multiround,
    run_strategy,
    run_thot,
)

__all__ = [
    "AggregateRow",
    "ChatMessage",
    "CompletionRequest",
    "CompletionResponse",
    "EvaluationRecord",
    "FocusItem",
    "HttpBackend",
    "JudgeScore",
    "Method",
    "ModelCall",
    "ModelEndpoint",
    "RecordingBackend",
    "ReplayBackend",
    "ResponseCache",
    "RetryPolicy",
    "Role",
    "Scenario",
    "ScriptedBackend",
    "StrategyConfig",
    "Transcript",
    "build_followup_prompt",
    "build_initial_prompt",
    "canonicalize_text",
    "complete",
    "extract_focus_items",
    "request_digest",
    "run_base",
    "run_cot",
    "run_multiround",
    "run_strategy",
    "run_thot",
    "validate_scenario",
]
