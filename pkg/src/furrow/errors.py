from __future__ import annotations


class FurrowError(Exception):
    """Base class for all errors raised by furrow."""


class ConfigError(FurrowError):
    pass


class TemplateError(ConfigError):
    pass


# gateway


class GatewayError(FurrowError):
    pass


class AuthMissing(GatewayError):
    def __init__(self, env_var: str):
        super().__init__(f"credential environment variable {env_var!r} is not set")
        self.env_var = env_var


class Exhausted(GatewayError):
    def __init__(self, attempts: int, cause: BaseException | str):
        super().__init__(f"gave up after {attempts} attempt(s): {cause}")
        self.attempts = attempts
        self.cause = cause


class HttpStatusError(GatewayError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class FixtureMiss(GatewayError):
    def __init__(self, digest: str):
        super().__init__(f"no replay fixture entry for digest {digest}")
        self.digest = digest


class ScriptEmpty(GatewayError):
    def __init__(self) -> None:
        super().__init__("scripted backend has no response left and no rule matched")


# storage


class StorageError(FurrowError):
    pass


class DuplicateKey(StorageError):
    pass


class MissingRun(StorageError):
    pass


class MissingRecords(StorageError):
    pass


class DatasetError(FurrowError):
    """Dataset could not be loaded. ``problems`` holds ``(line_number, message)`` pairs."""

    def __init__(self, message: str, problems: list[tuple[int, str]] | None = None):
        self.problems = list(problems or [])
        detail = "; ".join(f"line {n}: {m}" for n, m in self.problems[:20])
        super().__init__(f"{message}: {detail}" if detail else message)


class ParseError(DatasetError):
    pass


class ValidationError(DatasetError):
    pass


# strategies and evaluation


class StrategyError(FurrowError):
    """A strategy run failed. Carries the scenario id and whatever transcript was built."""

    def __init__(self, scenario_id: str, cause: BaseException, partial=None):
        super().__init__(f"scenario {scenario_id!r}: {cause}")
        self.scenario_id = scenario_id
        self.cause = cause
        self.partial = partial


class JudgeFormatError(FurrowError):
    def __init__(self, labels: list[str], raw_text: str = ""):
        super().__init__("judge output missing or invalid: " + ", ".join(labels))
        self.labels = labels
        self.raw_text = raw_text


class EmptyInput(FurrowError):
    pass
