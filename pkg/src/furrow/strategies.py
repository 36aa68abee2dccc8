"""Prompting strategies: single prompt, chain of thought, thread of thought, multi-round."""

from __future__ import annotations

import re
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from typing import Any

from .domain import (
    ChatMessage,
    Method,
    ModelCall,
    Scenario,
    Transcript,
    assistant,
    canonicalize_text,
    system,
    user,
    utc_now,
)
from .errors import GatewayError, StrategyError
from .gateway import Backend, CompletionRequest
from .templates import DEFAULT_TEMPLATES, Templates

CallObserver = Callable[[ModelCall], None]

MACHINERY_FIELDS = ("machinery", "machinery model", "machine", "equipment", "tractor")
DEFAULT_MACHINERY = "machinery in use"

_ITEM_LINE = re.compile(r"^\s*[-*•]\s*(?P<label>[^|]+?)\s*\|\s*(?P<evidence>.+?)\s*$")


@dataclass(frozen=True)
class StrategyConfig:
    method: Method = Method.MULTIROUND
    max_rounds: int = 3
    max_focus_items: int = 3
    temperature: float = 0.0
    max_tokens: int | None = None
    seed: int | None = 0
    stop_on_no_issues: bool = True
    template_overrides: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.max_focus_items < 1:
            raise ValueError("max_focus_items must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def templates(self) -> Templates:
        return Templates(self.template_overrides) if self.template_overrides else DEFAULT_TEMPLATES

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["method"] = self.method.value
        return d


@dataclass(frozen=True)
class FocusItem:
    label: str
    evidence: str


def build_initial_prompt(s: Scenario, templates: Templates = DEFAULT_TEMPLATES) -> str:
    if s.context:
        fields = "\n".join(f"- {k}: {v}" for k, v in s.context)
        block = templates.render("context_block", fields=fields)
    else:
        block = ""
    return templates.render("initial", context_block=block, question=s.question)


def build_followup_prompt(item: FocusItem, machinery: str, templates: Templates = DEFAULT_TEMPLATES) -> str:
    return templates.render("followup", label=item.label.strip(), machinery=machinery.strip())


def machinery_of(s: Scenario) -> str:
    return s.context_value(*MACHINERY_FIELDS) or DEFAULT_MACHINERY


def parse_focus_items(text: str, response: str, limit: int) -> list[FocusItem]:
    items = []
    for line in text.splitlines():
        m = _ITEM_LINE.match(line)
        if not m:
            continue
        label, evidence = m.group("label").strip(), m.group("evidence").strip()
        if len(evidence) >= 2 and evidence[0] == evidence[-1] and evidence[0] in "\"'":
            evidence = evidence[1:-1]
        if label and evidence and evidence in response:
            items.append(FocusItem(label, evidence))
    return items[:limit]


class _Session:
    """Mutable per-run state; one per strategy invocation."""

    def __init__(self, s: Scenario, model: str, cfg: StrategyConfig, backend: Backend,
                 on_call: CallObserver | None):
        self.scenario = s
        self.model = model
        self.cfg = cfg
        self.backend = backend
        self.templates = cfg.templates()
        self.on_call = on_call
        self.calls: list[ModelCall] = []
        self.started = utc_now()

    def call(self, messages: list[ChatMessage], auxiliary: bool = False) -> str:
        req = CompletionRequest(
            tuple(messages), temperature=self.cfg.temperature, max_tokens=self.cfg.max_tokens, seed=self.cfg.seed
        )
        try:
            resp = self.backend.complete(req)
            reply = assistant(resp.content)
        except (GatewayError, ValueError) as exc:
            raise StrategyError(self.scenario.id, exc, self.partial()) from exc
        mc = ModelCall(
            request=req.messages,
            response=reply,
            latency_ms=resp.latency_ms,
            prompt_tokens=resp.prompt_tokens,
            completion_tokens=resp.completion_tokens,
            auxiliary=auxiliary,
        )
        self.calls.append(mc)
        if self.on_call is not None:
            self.on_call(mc)
        return resp.content

    def partial(self) -> Transcript | None:
        return self.transcript() if self.calls else None

    def transcript(self) -> Transcript:
        return Transcript(self.scenario.id, self.model, self.cfg.method, tuple(self.calls), self.started)

    def preamble(self) -> list[ChatMessage]:
        return [system(self.templates.render("system"))]


def extract_focus_items(response: str, cfg: StrategyConfig, backend: Backend) -> list[FocusItem]:
    """Ask the model for unresolved issues in ``response`` and keep the verifiable ones."""
    s = Scenario("extract", "Other", (), "-", "-", ("-",))
    session = _Session(s, backend.model_name, cfg, backend, None)
    return _extract(session, response)


def _extract(session: _Session, response: str) -> list[FocusItem]:
    if not response:
        raise ValueError("cannot extract focus items from an empty response")
    prompt = session.templates.render("extract", response=response, max_items=session.cfg.max_focus_items)
    text = session.call([user(prompt)], auxiliary=True)
    return parse_focus_items(text, response, session.cfg.max_focus_items)


def run_base(s: Scenario, model: str, cfg: StrategyConfig, backend: Backend,
             on_call: CallObserver | None = None) -> Transcript:
    session = _Session(s, model, _as(cfg, Method.BASE), backend, on_call)
    session.call(session.preamble() + [user(build_initial_prompt(s, session.templates))])
    return session.transcript()


def run_cot(s: Scenario, model: str, cfg: StrategyConfig, backend: Backend,
            on_call: CallObserver | None = None) -> Transcript:
    session = _Session(s, model, _as(cfg, Method.COT), backend, on_call)
    t = session.templates
    prompt = t.render("cot", initial=build_initial_prompt(s, t), question=s.question)
    session.call(session.preamble() + [user(prompt)])
    return session.transcript()


def run_thot(s: Scenario, model: str, cfg: StrategyConfig, backend: Backend,
             on_call: CallObserver | None = None) -> Transcript:
    session = _Session(s, model, _as(cfg, Method.THOT), backend, on_call)
    t = session.templates
    messages = session.preamble() + [
        user(t.render("thot_analysis", initial=build_initial_prompt(s, t), question=s.question))
    ]
    analysis = session.call(messages)
    messages += [assistant(analysis), user(t.render("thot_final"))]
    session.call(messages)
    return session.transcript()


def run_multiround(s: Scenario, model: str, cfg: StrategyConfig, backend: Backend,
                   on_call: CallObserver | None = None) -> Transcript:
    session = _Session(s, model, _as(cfg, Method.MULTIROUND), backend, on_call)
    t = session.templates
    machinery = machinery_of(s)
    messages = session.preamble() + [user(build_initial_prompt(s, t))]
    latest = session.call(messages)
    messages.append(assistant(latest))

    pending: list[FocusItem] = []
    seen: set[str] = set()
    for _ in range(cfg.max_rounds - 1):
        for item in _extract(session, latest):
            key = canonicalize_text(item.label)
            if key and key not in seen:
                seen.add(key)
                pending.append(item)
        if pending:
            prompt = build_followup_prompt(pending.pop(0), machinery, t)
        elif cfg.stop_on_no_issues:
            break
        else:
            prompt = t.render("refine", machinery=machinery)
        messages.append(user(prompt))
        latest = session.call(messages)
        messages.append(assistant(latest))

    messages.append(user(t.render("synthesis")))
    session.call(messages)
    return session.transcript()


RUNNERS = {
    Method.BASE: run_base,
    Method.COT: run_cot,
    Method.THOT: run_thot,
    Method.MULTIROUND: run_multiround,
}


def run_strategy(s: Scenario, model: str, cfg: StrategyConfig, backend: Backend,
                 on_call: CallObserver | None = None) -> Transcript:
    return RUNNERS[cfg.method](s, model, cfg, backend, on_call)


def _as(cfg: StrategyConfig, method: Method) -> StrategyConfig:
    if cfg.method is method:
        return cfg
    return StrategyConfig(**{**cfg.__dict__, "method": method})
