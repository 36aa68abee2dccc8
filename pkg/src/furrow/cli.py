"""``furrow`` command line.

Exit codes: 0 success, 2 config error, 3 some cells failed, 4 missing run or records.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import BackendFactory, Config, load_config
from .domain import Method, Scenario
from .errors import (
    ConfigError,
    DatasetError,
    FurrowError,
    MissingRecords,
    MissingRun,
    StrategyError,
    TemplateError,
)
from .evaluator import AccuracyConfig, AccuracyMode, JudgeConfig
from .gateway import ResponseCache
from .runner import RunPlan, cmd_consult, cmd_eval, cmd_report, cmd_run
from .store import RunStore, load_dataset

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_MISSING = 0, 2, 3, 4

log = logging.getLogger("furrow")


def _csv(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _methods(text: str) -> list[Method]:
    try:
        return [Method.parse(p) for p in _csv(text)]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="furrow", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="YAML config with endpoints, strategies, templates, judge")
    parser.add_argument("--store", type=Path, default=Path("runs"), help="run store root (default: ./runs)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run strategies over a dataset")
    run.add_argument("--dataset", type=Path, required=True)
    run.add_argument("--models", required=True, help="comma-separated endpoint names")
    run.add_argument("--methods", default="base,cot,thot,multiround")
    run.add_argument("--backend", default="http", help="http | replay:<fixture> | scripted:<script>")
    run.add_argument("--out", required=True, help="run id")
    run.add_argument("--record", type=Path, help="also write a replay fixture of every call to this file")
    run.add_argument("--workers", type=int)

    ev = sub.add_parser("eval", help="score a run's transcripts")
    ev.add_argument("run_id")
    ev.add_argument("--tau", type=float, help="keyword coverage threshold (default 0.6)")
    ev.add_argument("--mode", choices=[m.value for m in AccuracyMode], help="accuracy mode")
    ev.add_argument("--judge-model", help="endpoint name of the judge model")
    ev.add_argument("--judge-backend", default="http", help="http | replay:<fixture> | scripted:<script>")
    ev.add_argument("--force", action="store_true", help="overwrite existing records")
    ev.add_argument("--workers", type=int, default=4)

    rep = sub.add_parser("report", help="render a comparison table")
    rep.add_argument("run_id")
    rep.add_argument("--group-by", choices=["model", "category"], default="model")
    rep.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    rep.add_argument("--output", type=Path, help="write to file instead of stdout")

    con = sub.add_parser("consult", help="run one strategy on one scenario and print every exchange")
    con.add_argument("--scenario", type=Path, help="scenario file (JSONL); first entry unless --scenario-id")
    con.add_argument("--scenario-id")
    con.add_argument("--question", help="ad-hoc question instead of a scenario file")
    con.add_argument("--context", action="append", default=[], metavar="NAME=VALUE")
    con.add_argument("--model", required=True)
    con.add_argument("--method", default="multiround")
    con.add_argument("--backend", default="http", help="http | replay:<fixture> | scripted:<script>")
    con.add_argument("--interactive", action="store_true", help="type the field report yourself")
    return parser


def _consult_scenario(args: argparse.Namespace) -> Scenario:
    if args.scenario:
        dataset = load_dataset(args.scenario)
        if args.scenario_id:
            found = dataset.by_id().get(args.scenario_id)
            if found is None:
                raise ConfigError(f"scenario {args.scenario_id!r} not in {args.scenario}")
            return found
        return dataset.scenarios[0]
    if not args.question:
        raise ConfigError("consult needs --scenario or --question")
    context = []
    for item in args.context:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--context expects NAME=VALUE, got {item!r}")
        context.append((name.strip(), value.strip()))
    return Scenario("adhoc", "Other", tuple(context), args.question, "", ("-",), "command line")


def _judge(args: argparse.Namespace, config: Config) -> JudgeConfig | None:
    name = args.judge_model or config.judge.get("model")
    if not name:
        return None
    backend = BackendFactory(args.judge_backend, config, ResponseCache.from_env()).for_model(name)
    extra = {k: config.judge[k] for k in ("rubric_template", "scale_min", "scale_max") if k in config.judge}
    return JudgeConfig(backend, **extra)


def _dispatch(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    store = RunStore(args.store)

    if args.command == "run":
        plan = RunPlan(
            dataset=args.dataset,
            models=_csv(args.models),
            methods=_methods(args.methods),
            run_id=args.out,
            backend=args.backend,
            record=args.record,
            workers=args.workers,
        )
        if args.backend == "http":
            for m in plan.models:
                config.endpoint(m)
        factory = BackendFactory(args.backend, config, ResponseCache.from_env())
        backends = {m: factory.for_model(m) for m in plan.models}
        outcome = cmd_run(plan, store, config, backends)
        print(f"{outcome.run_id}: {outcome.transcripts} transcripts, {len(outcome.failures)} failed cells")
        return EXIT_OK if outcome.ok else EXIT_PARTIAL

    if args.command == "eval":
        acc = config.accuracy
        if args.tau is not None or args.mode:
            acc = AccuracyConfig(args.tau if args.tau is not None else acc.threshold, args.mode or acc.mode)
        outcome = cmd_eval(store, args.run_id, acc, _judge(args, config), args.force, args.workers)
        print(f"{args.run_id}: {outcome.records} records, {len(outcome.failures)} judge failures")
        return EXIT_OK if not outcome.failures else EXIT_PARTIAL

    if args.command == "report":
        text = cmd_report(store, args.run_id, args.group_by, args.format)
        if args.output:
            args.output.write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return EXIT_OK

    if args.command == "consult":
        method = Method.parse(args.method)
        if args.backend == "http":
            config.endpoint(args.model)
        scenario = _consult_scenario(args)
        backend = BackendFactory(args.backend, config, ResponseCache.from_env()).for_model(args.model)
        try:
            cmd_consult(scenario, args.model, config.strategy(method), backend, interactive=args.interactive)
        except StrategyError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARTIAL
        return EXIT_OK
    raise AssertionError(args.command)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (MissingRun, MissingRecords) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, TemplateError, DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FurrowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
