"""Command line front end: ``shardmap bench|sweep|demo|compact``.

Exit codes are 0 on success, 1 on runtime errors and 2 on usage errors.
Reports and snapshots go to stdout or ``--out``; logs go to stderr.
"""
import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, Iterable, List, Optional, Sequence

import simpy

from .docstore import DocStore, Entity, Key, StoreConfig, entity_to_json
from .error import ConfigError, ShardMapError, ShardSpecError
from .mapper import METHOD_REGISTRY, MappingDef, Mapper, ShardMethod
from .render_report import ReportConfig, render_report_sync
from .shardcore import (
    ShardSpec,
    compact,
    dynamic_shards,
    fold_all,
    group_shard_write,
    group_union,
    static_shards,
)
from .simharness import (
    STRATEGIES,
    WorkloadConfig,
    WorkloadReport,
    report_to_json,
    reports_to_csv,
    run_workload,
    sweep,
)
from .txretry import Backoff, RetryPolicy, with_retry
from .utils import json_encode, wrap_in_process

__all__ = ["main", "build_parser", "resolve_seed", "DEMO_SEED"]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

SEED_VARIABLE = "SHARDMAP_SEED"
DEMO_SEED = 42

QUESTION_TEXT = "How do you plan to improve public education?"


def positive_int(value: str) -> int:
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {value!r}")
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {number}")
    return number


def positive_float(value: str) -> float:
    try:
        number = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {value!r}")
    if number <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return number


def non_negative_float(value: str) -> float:
    try:
        number = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {value!r}")
    if number < 0:
        raise argparse.ArgumentTypeError(f"cannot be negative, got {value}")
    return number


def shard_list(value: str) -> List[int]:
    counts = [positive_int(part.strip()) for part in value.split(",") if part.strip()]
    if not counts:
        raise argparse.ArgumentTypeError("needs at least one shard count")
    return counts


def _add_workload_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--strategy", choices=STRATEGIES, default="static", help="Layout of the votes."
    )
    parser.add_argument("--questions", type=positive_int, default=16)
    parser.add_argument("--votes", type=positive_int, default=2000)
    parser.add_argument(
        "--rps", type=positive_float, default=75.0, help="Votes per virtual second."
    )
    parser.add_argument(
        "--retry", choices=("none", "until-success"), default="none"
    )
    parser.add_argument("--max-attempts", type=positive_int, default=None)
    parser.add_argument(
        "--backoff-ms", type=non_negative_float, default=50.0, help="Fixed backoff."
    )
    parser.add_argument("--jitter", type=non_negative_float, default=0.5)
    parser.add_argument(
        "--seed", type=int, default=None, help=f"Defaults to ${SEED_VARIABLE} or 0."
    )
    parser.add_argument("--commit-ms", type=non_negative_float, default=150.0)
    parser.add_argument("--staleness-ms", type=non_negative_float, default=500.0)
    parser.add_argument("--read-ms", type=non_negative_float, default=10.0)
    parser.add_argument("--out", help="Write the machine-readable report here.")
    parser.add_argument("--format", choices=("json", "csv"), default=None)
    parser.add_argument(
        "--template", help="Report template file, rendered with Jinja2 if installed."
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shardmap",
        description="Sharding hot spot objects over a simulated document store.",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for progress, -vv for every commit.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    bench = commands.add_parser("bench", help="Run one experiment arm.")
    _add_workload_arguments(bench)
    bench.add_argument("--shards", type=positive_int, default=16)

    sweep_parser = commands.add_parser("sweep", help="Run one arm per shard count.")
    _add_workload_arguments(sweep_parser)
    sweep_parser.add_argument(
        "--shards-list", type=shard_list, default=[1, 2, 4, 8, 16]
    )

    demo = commands.add_parser("demo", help="Replay the question 42 walkthrough.")
    demo.add_argument("--out", help="Also write the demo states here.")

    compact_parser = commands.add_parser(
        "compact", help="Fold the dynamic shards of an owner in a snapshot."
    )
    compact_parser.add_argument("--store", required=True, help="JSON snapshot file.")
    compact_parser.add_argument(
        "--owner", required=True, help="Owner key path, e.g. Question/42."
    )
    compact_parser.add_argument(
        "--spec-file", required=True, help="JSON shard spec, or a list of them."
    )
    compact_parser.add_argument(
        "--out", help="Compacted snapshot file; defaults to overwriting --store."
    )
    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )


def resolve_seed(seed: Optional[int], environ: Optional[Dict[str, str]] = None) -> int:
    """Pick the seed flag, else the SHARDMAP_SEED variable, else 0."""
    if seed is not None:
        return seed
    value = (os.environ if environ is None else environ).get(SEED_VARIABLE)
    if value is None or not value.strip():
        return 0
    try:
        return int(value)
    except ValueError:
        raise ConfigError(SEED_VARIABLE, f"Invalid seed {value!r}.")


def workload_config(args: argparse.Namespace, shards: int, seed: int) -> WorkloadConfig:
    if args.retry == "until-success":
        backoff = Backoff("fixed", args.backoff_ms) if args.backoff_ms else Backoff()
        retry = RetryPolicy.until_success(args.max_attempts, backoff, args.jitter)
    else:
        retry = RetryPolicy.none()
    store = StoreConfig(
        commit_service_time=args.commit_ms,
        query_staleness_window=args.staleness_ms,
        rng_seed=seed,
        read_latency=args.read_ms,
    )
    config = WorkloadConfig(
        questions=args.questions,
        total_votes=args.votes,
        arrival_rate=args.rps,
        strategy=args.strategy,
        shards=shards,
        retry=retry,
        seed=seed,
        store=store,
    )
    config.validate()
    return config


def _output_format(args: argparse.Namespace) -> Optional[str]:
    if args.format:
        return args.format
    if args.out:
        return "csv" if args.out.lower().endswith(".csv") else "json"
    return None


def _report_config(args: argparse.Namespace) -> ReportConfig:
    config = ReportConfig()
    if not args.template:
        return config
    with open(args.template, encoding="utf-8") as template_file:
        config["template"] = template_file.read()
    try:
        from jinja2 import Environment
    except ImportError:
        logger.warning("Jinja2 is not installed, using the simple renderer.")
    else:
        config["jinja_env"] = Environment()
    return config


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as output_file:
        output_file.write(text)


def _emit_reports(
    args: argparse.Namespace, reports: List[WorkloadReport], single: bool
) -> None:
    output_format = _output_format(args)
    if output_format == "csv":
        machine = reports_to_csv(reports)
    else:
        data: Any = (
            report_to_json(reports[0])
            if single
            else [report_to_json(report) for report in reports]
        )
        machine = json_encode(data, pretty=True) + "\n"
    if args.out:
        _write(args.out, machine)
    if args.out or output_format is None:
        sys.stdout.write(render_report_sync(reports, _report_config(args)))
    else:
        sys.stdout.write(machine)


def cmd_bench(args: argparse.Namespace, seed: int) -> int:
    config = workload_config(args, args.shards, seed)
    report = run_workload(config)
    _emit_reports(args, [report], single=True)
    return EXIT_OK


def dedupe_shard_counts(counts: Iterable[int]) -> List[int]:
    unique: List[int] = []
    duplicates: List[int] = []
    for count in counts:
        if count in unique:
            duplicates.append(count)
        else:
            unique.append(count)
    if duplicates:
        logger.warning(
            "Ignoring duplicate shard counts: %s.", ",".join(map(str, duplicates))
        )
    return unique


def cmd_sweep(args: argparse.Namespace, seed: int) -> int:
    configs = [
        workload_config(args, shards, seed)
        for shards in dedupe_shard_counts(args.shards_list)
    ]
    reports = sweep(configs)
    _emit_reports(args, reports, single=False)
    if any(report.error for report in reports):
        return EXIT_RUNTIME
    return EXIT_OK


# Demo


class DemoLog:
    """Collects the demo states as JSON-ready steps."""

    def __init__(self, store: DocStore):
        self.store = store
        self.steps: List[Dict[str, Any]] = []

    def state(self, title: str, entities: Iterable[Entity], **extra: Any) -> None:
        step: Dict[str, Any] = {"step": title, "t": self.store.now}
        step.update(extra)
        step["entities"] = [entity_to_json(entity) for entity in entities]
        self.steps.append(step)

    def total(self, title: str, query: str, value: Any) -> None:
        self.steps.append(
            {"step": title, "t": self.store.now, "query": query, "total": value}
        )


def _question_42() -> Entity:
    return Entity(
        Key("Question", "42"),
        {
            "question": QUESTION_TEXT,
            "author": "Phil R",
            "responses": [
                {
                    "response": "i have earned $1048 dollars just by ad clicks",
                    "author": "twodollarclick",
                }
            ],
            "votes": 76,
        },
    )


def _question_mapping(spec: ShardSpec) -> MappingDef:
    return MappingDef(
        "Question",
        plain_properties=("question", "author", "responses"),
        shard_specs=(spec,),
        shard_methods={"voteUp": ShardMethod("votes", METHOD_REGISTRY["increment"])},
    )


def _concurrent_votes(mapper: Mapper, key: Key, voters: int) -> None:
    """Start voters as simulated clients arriving at the current instant."""
    env = mapper.store.env
    policy = RetryPolicy.until_success()

    def vote() -> None:
        question = mapper.load("Question", key)
        mapper.apply_shard_method(question, "voteUp")
        mapper.save(question)

    for _ in range(voters):
        env.process(with_retry(wrap_in_process(vote), policy, env, mapper.rng))


def _poll_totals(
    log: DemoLog, mapper: Mapper, key: Key, spec: ShardSpec, every: float, until: float
) -> None:
    env = mapper.store.env
    query = f"select * from {spec.shard_kind} where question = {key.id}"

    def reader() -> Any:
        while env.now <= until:
            log.total(
                "query while votes propagate",
                query,
                fold_all(dynamic_shards(mapper.store, key, spec), spec),
            )
            yield env.timeout(every)

    env.process(reader())


def demo_static(log: DemoLog, mapper: Mapper) -> None:
    store = mapper.store
    question = _question_42()
    store.put(question)
    log.state("question entity", [store.get(question.key)])
    store.advance_time(store.config.query_staleness_window)
    log.state(
        "select * from Question where votes > 50",
        store.query("Question", [("votes", ">", 50)]),
    )

    spec = ShardSpec("votes", 0, "sum-int", 3)
    mapper.register(_question_mapping(spec))
    mapper.insert("Question", question)
    log.state(
        "votes sharded over 3 shards",
        [store.get(question.key)] + [
            shard.to_entity(spec) for shard in static_shards(store, question.key, spec)
        ],
    )
    store.advance_time(store.config.query_staleness_window)

    start = store.now
    _concurrent_votes(mapper, question.key, 2)
    _poll_totals(log, mapper, question.key, spec, 100.0, start + 900.0)
    store.env.run(until=start + 1000.0)
    store.advance_time(store.config.query_staleness_window)
    shards = static_shards(store, question.key, spec)
    log.state(
        "shards after two concurrent votes",
        [shard.to_entity(spec) for shard in shards],
        total=fold_all(shards, spec),
    )
    log.total(
        "query after quiescence",
        f"select * from Shard where question = {question.key.id}",
        fold_all(dynamic_shards(store, question.key, spec), spec),
    )


def demo_dynamic(log: DemoLog, mapper: Mapper) -> None:
    store = mapper.store
    question = _question_42()
    spec = ShardSpec("votes", 0, "sum-int", None)
    mapper.register(_question_mapping(spec))
    mapper.insert("Question", question)
    store.advance_time(store.config.query_staleness_window)
    log.state(
        "dynamic sharding starts with one shard",
        [shard.to_entity(spec) for shard in dynamic_shards(store, question.key, spec)],
    )

    _concurrent_votes(mapper, question.key, 2)
    store.advance_time(store.config.commit_service_time)
    log.total(
        "query right after two votes",
        f"select * from Shard where question = {question.key.id}",
        mapper.reload_value("Question", question.key, "votes"),
    )
    store.advance_time(store.config.query_staleness_window)
    log.state(
        "two new shards of 1",
        [shard.to_entity(spec) for shard in dynamic_shards(store, question.key, spec)],
        total=mapper.reload_value("Question", question.key, "votes"),
    )

    compact(store, question.key, spec)
    store.advance_time(store.config.query_staleness_window)
    shards = dynamic_shards(store, question.key, spec)
    log.state(
        "after compaction",
        [shard.to_entity(spec) for shard in shards],
        total=fold_all(shards, spec),
    )


def demo_groups(log: DemoLog, mapper: Mapper, replicas: int = 3) -> None:
    store = mapper.store
    question = _question_42()
    question.properties.pop("responses")
    store.put(question)
    responses = [
        Entity(
            Key("Response", "47"),
            {
                "response": "i have earned $1048 dollars just by ad clicks",
                "author": "twodollarclick",
            },
        ),
        Entity(
            Key("Response", "67"),
            {"response": "Crucial for our future", "author": "Stan S"},
        ),
    ]
    for response in responses:
        group_shard_write(store, question.key, replicas, response, mapper.rng)
        # the next response may land in the same replica group
        store.advance_time(store.config.commit_service_time)
    log.state(
        f"responses spread over {replicas} replica groups",
        [store.get(question.key)] + [
            entity
            for root_id in range(1, replicas + 1)
            for entity in store.ancestor_query(Key("Question", f"42-g{root_id}"))
        ],
    )
    log.state(
        "union of the replica groups",
        group_union(store, question.key, replicas),
    )


def run_demo() -> List[Dict[str, Any]]:
    """Replay the question 42 walkthrough on fresh stores; deterministic."""
    steps: List[Dict[str, Any]] = []
    for narrative in (demo_static, demo_dynamic, demo_groups):
        store = DocStore(StoreConfig(rng_seed=DEMO_SEED), simpy.Environment())
        log = DemoLog(store)
        narrative(log, Mapper(store))
        steps.extend(log.steps)
    return steps


def cmd_demo(args: argparse.Namespace) -> int:
    text = json_encode(run_demo(), pretty=True) + "\n"
    sys.stdout.write(text)
    if args.out:
        _write(args.out, text)
    return EXIT_OK


# Compaction


def load_specs(path: str) -> List[ShardSpec]:
    with open(path, encoding="utf-8") as spec_file:
        data = json.load(spec_file)
    items = data if isinstance(data, list) else [data]
    specs = [ShardSpec.from_dict(item) for item in items]
    for spec in specs:
        if spec.is_static:
            raise ShardSpecError(
                f"Only dynamic shards compact, {spec.property!r} is static."
            )
    return specs


def cmd_compact(args: argparse.Namespace) -> int:
    try:
        owner = Key.from_path(args.owner)
    except ValueError as error:
        raise ConfigError("owner", str(error))
    specs = load_specs(args.spec_file)
    store = DocStore.load_json(args.store)
    totals = {
        spec.property: fold_all(dynamic_shards(store, owner, spec), spec)
        for spec in specs
    }
    for spec in specs:
        compact(store, owner, spec)
        store.advance_time(store.config.commit_service_time)
    store.advance_time(store.config.query_staleness_window)

    for spec in specs:
        shards = dynamic_shards(store, owner, spec)
        total = fold_all(shards, spec)
        if len(shards) != 1 or total != totals[spec.property]:
            logger.error(
                "Compaction of %s.%s changed the total from %r to %r over %d shards.",
                owner,
                spec.property,
                totals[spec.property],
                total,
                len(shards),
            )
            return EXIT_RUNTIME
        logger.info("Compacted %s.%s, total %r.", owner, spec.property, total)
    store.dump_json(args.out or args.store)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit:
        return int(exit.code or 0)
    configure_logging(args.verbose)

    try:
        if args.command == "demo":
            return cmd_demo(args)
        if args.command == "compact":
            return cmd_compact(args)
        seed = resolve_seed(args.seed)
        if args.command == "bench":
            return cmd_bench(args, seed)
        return cmd_sweep(args, seed)
    except ConfigError as error:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"shardmap: error: {error}\n")
        return EXIT_USAGE
    except (ShardMapError, OSError, KeyError, ValueError) as error:
        logger.error("%s", error)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
