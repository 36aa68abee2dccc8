"""Declarative config file: endpoints, strategy settings, template overrides, judge."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .domain import Method
from .errors import ConfigError
from .evaluator import AccuracyConfig
from .gateway import (
    Backend,
    HttpBackend,
    ModelEndpoint,
    ReplayBackend,
    ResponseCache,
    RetryPolicy,
    ScriptedBackend,
    load_fixture,
)
from .strategies import StrategyConfig
from .templates import Templates

_STRATEGY_KEYS = {"max_rounds", "max_focus_items", "temperature", "max_tokens", "seed", "stop_on_no_issues"}


@dataclass
class Config:
    endpoints: dict[str, ModelEndpoint] = field(default_factory=dict)
    strategy_settings: dict[str, dict[str, Any]] = field(default_factory=dict)
    template_overrides: dict[str, str] = field(default_factory=dict)
    judge: dict[str, Any] = field(default_factory=dict)
    accuracy: AccuracyConfig = AccuracyConfig()
    workers: int | None = None

    def strategy(self, method: Method) -> StrategyConfig:
        settings = {**self.strategy_settings.get("default", {}), **self.strategy_settings.get(method.value, {})}
        try:
            return StrategyConfig(method=method, template_overrides=dict(self.template_overrides), **settings)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"strategy settings for {method.value}: {exc}") from exc

    def endpoint(self, name: str) -> ModelEndpoint:
        try:
            return self.endpoints[name]
        except KeyError:
            known = ", ".join(sorted(self.endpoints)) or "(none configured)"
            raise ConfigError(f"unknown model {name!r}; known endpoints: {known}") from None

    def default_workers(self) -> int:
        if self.workers:
            return self.workers
        return max((e.max_concurrency for e in self.endpoints.values()), default=4)


def _endpoint(name: str, data: dict[str, Any]) -> ModelEndpoint:
    data = dict(data)
    retry = data.pop("retry", {}) or {}
    try:
        return ModelEndpoint(
            base_url=data.pop("base_url"),
            model_name=data.pop("model_name", name),
            retry=RetryPolicy(**retry),
            **data,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"endpoint {name!r}: {exc}") from exc


def load_config(path: str | os.PathLike[str] | None) -> Config:
    if path is None:
        return Config()
    p = Path(path)
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")

    unknown = set(data) - {"endpoints", "strategies", "templates", "judge", "accuracy", "workers"}
    if unknown:
        raise ConfigError(f"{p}: unknown sections {sorted(unknown)}")

    endpoints = {name: _endpoint(name, spec or {}) for name, spec in (data.get("endpoints") or {}).items()}
    strategies = data.get("strategies") or {}
    for key, settings in strategies.items():
        if key != "default":
            try:
                Method.parse(key)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        bad = set(settings or {}) - _STRATEGY_KEYS
        if bad:
            raise ConfigError(f"strategies.{key}: unknown settings {sorted(bad)}")
    strategies = {("default" if k == "default" else Method.parse(k).value): dict(v or {}) for k, v in strategies.items()}

    try:
        templates = Templates.from_paths(data.get("templates") or {}, base=p.parent)
        overrides = {name: templates.text(name) for name in (data.get("templates") or {})}
        accuracy = AccuracyConfig(**(data.get("accuracy") or {}))
    except (OSError, TypeError, ValueError) as exc:
        raise ConfigError(f"{p}: {exc}") from exc

    judge = dict(data.get("judge") or {})
    if "rubric_template" in judge:
        rubric = Path(judge["rubric_template"])
        judge["rubric_template"] = (rubric if rubric.is_absolute() else p.parent / rubric).read_text(encoding="utf-8")
    return Config(endpoints, strategies, overrides, judge, accuracy, data.get("workers"))


class BackendFactory:
    """Turns ``http`` / ``replay:<fixture>`` / ``scripted:<script>`` into backends."""

    def __init__(self, spec: str, config: Config, cache: ResponseCache | None = None):
        self.spec = spec
        self.config = config
        self.cache = cache
        self.kind, _, self.arg = spec.partition(":")
        if self.kind not in ("http", "replay", "scripted"):
            raise ConfigError(f"unknown backend {spec!r}; use http, replay:<fixture> or scripted:<script>")
        if self.kind != "http":
            if not self.arg:
                raise ConfigError(f"backend {spec!r} needs a file path")
            if not Path(self.arg).exists():
                raise ConfigError(f"backend file {self.arg} does not exist")
        self._fixture = load_fixture(self.arg) if self.kind == "replay" else None

    def model_name(self, model: str) -> str:
        ep = self.config.endpoints.get(model)
        return ep.model_name if ep else model

    def for_model(self, model: str) -> Backend:
        if self.kind == "http":
            return HttpBackend(self.config.endpoint(model), cache=self.cache)
        if self.kind == "replay":
            assert self._fixture is not None
            return ReplayBackend(self._fixture, self.model_name(model))
        try:
            return ScriptedBackend.from_file(self.arg, self.model_name(model))
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load script {self.arg}: {exc}") from exc
