"""Discrete-event voting workload comparing naive and sharded layouts.

Users vote on questions with Poisson arrivals. Every vote is an independent
logical client that loads its question, votes, and saves, charged in virtual
time: one ``read_latency`` per read round trip and ``commit_service_time``
for a successful commit. Reports hold failure rates and transaction times
per strategy arm.
"""
import csv
import io
import logging
from typing import Any, Callable, Dict, Generator, List, NamedTuple, Optional

import numpy as np
import simpy

from .docstore import DocStore, Entity, Key, StoreConfig
from .error import ConfigError, ShardMapError
from .mapper import METHOD_REGISTRY, MappingDef, Mapper, ShardMethod
from .shardcore import ShardSpec, group_shard_write, group_union
from .txretry import RetryOutcome, RetryPolicy, with_retry

__all__ = [
    "STRATEGIES",
    "WorkloadConfig",
    "WorkloadReport",
    "run_workload",
    "sweep",
    "report_to_json",
    "reports_to_csv",
    "CSV_COLUMNS",
]

logger = logging.getLogger(__name__)

STRATEGIES = ("naive", "static", "dynamic", "group")

CSV_COLUMNS = (
    "strategy",
    "n",
    "retry",
    "issued",
    "succeeded",
    "failed",
    "failure_rate",
    "mean_ms",
    "p50",
    "p95",
    "p99",
    "seed",
)


class WorkloadConfig(NamedTuple):
    """Parameters of one experiment arm.

    ``shards`` is the shard count of the static strategy and the replica
    group count of the group strategy; the other strategies ignore it.
    """

    questions: int = 16
    total_votes: int = 2000
    arrival_rate: float = 75.0
    strategy: str = "naive"
    shards: int = 1
    retry: RetryPolicy = RetryPolicy()
    seed: int = 0
    store: StoreConfig = StoreConfig()

    @property
    def label(self) -> str:
        if self.strategy in ("static", "group"):
            return f"{self.strategy}({self.shards})"
        return self.strategy

    def validate(self) -> None:
        for field in ("questions", "total_votes", "arrival_rate", "shards"):
            if getattr(self, field) <= 0:
                raise ConfigError(field, "Must be positive.")
        if self.strategy not in STRATEGIES:
            raise ConfigError("strategy", f"Unknown strategy {self.strategy!r}.")
        store = self.store
        if store.commit_service_time < 0 or store.query_staleness_window < 0:
            raise ConfigError("store", "Durations cannot be negative.")
        if store.read_latency < 0:
            raise ConfigError("store.read_latency", "Cannot be negative.")
        self.retry.validate()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "questions": self.questions,
            "total_votes": self.total_votes,
            "arrival_rate": self.arrival_rate,
            "strategy": self.strategy,
            "shards": self.shards,
            "retry": dict(self.retry.to_dict()),
            "seed": self.seed,
            "store": dict(self.store.to_dict()),
        }


class WorkloadReport(NamedTuple):
    """Metrics of one run.

    Transaction times are virtual milliseconds over successful votes, from
    arrival to completion, including every failed attempt and backoff wait.
    """

    strategy: str
    shards: int
    retry: str
    seed: int
    issued: int
    succeeded: int
    failed: int
    failure_rate: float
    mean_tx_time: float
    p50: float
    p95: float
    p99: float
    mean_attempts: float
    contention_errors: int
    per_question_final: Dict[str, int]
    per_question_succeeded: Dict[str, int]
    config_echo: Dict[str, Any]
    error: Optional[str] = None

    @classmethod
    def failed_run(cls, config: WorkloadConfig, error: Exception) -> "WorkloadReport":
        return cls(
            config.strategy,
            config.shards,
            config.retry.mode,
            config.seed,
            0,
            0,
            0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0,
            {},
            {},
            config.to_dict(),
            str(error),
        )


def question_mapping(config: WorkloadConfig) -> MappingDef:
    if config.strategy in ("naive", "group"):
        return MappingDef("Question", plain_properties=("question", "votes"))
    spec = ShardSpec(
        "votes", 0, "sum-int", config.shards if config.strategy == "static" else None
    )
    return MappingDef(
        "Question",
        plain_properties=("question",),
        shard_specs=(spec,),
        shard_methods={
            "voteUp": ShardMethod("votes", METHOD_REGISTRY["increment"]),
            "voteDown": ShardMethod("votes", METHOD_REGISTRY["decrement"]),
        },
    )


class _VotingApp:
    """The per-arm simulation: seeded store, mapper and vote transactions."""

    def __init__(self, config: WorkloadConfig):
        self.config = config
        self.env = simpy.Environment()
        self.store = DocStore(config.store._replace(rng_seed=config.seed), self.env)
        self.rng = np.random.default_rng(config.seed)
        self.mapper = Mapper(self.store, self.rng)
        self.mapper.register(question_mapping(config))
        self.questions = [
            Key("Question", str(i)) for i in range(1, config.questions + 1)
        ]
        self.outcomes: List[RetryOutcome] = []
        self.targets: List[Key] = []

    def seed_questions(self) -> None:
        for key in self.questions:
            entity = Entity(key, {"question": f"Question {key.id}", "votes": 0})
            if self.config.strategy == "group":
                entity.properties.pop("votes")
                self.store.put(entity)
            else:
                self.mapper.insert("Question", entity)
        # let the seeding commits leave their entity groups
        self.store.advance_time(self.store.config.commit_service_time)

    def vote(self, key: Key, index: int) -> Callable[[], Generator]:
        strategy = self.config.strategy
        read = self.store.config.read_latency
        commit = self.store.config.commit_service_time
        env = self.env
        mapper = self.mapper

        def naive() -> Generator:
            question = mapper.load("Question", key)
            yield env.timeout(read)
            question.set("votes", question.get("votes") + 1)
            mapper.save(question)
            yield env.timeout(commit)

        def sharded() -> Generator:
            # main entity and shards are two read round trips
            question = mapper.load("Question", key)
            yield env.timeout(2 * read)
            mapper.apply_shard_method(question, "voteUp")
            if strategy == "static":
                yield env.timeout(read)
            mapper.save(question)
            yield env.timeout(commit)

        def grouped() -> Generator:
            mapper.load("Question", key)
            yield env.timeout(read)
            member = Entity(Key("Vote", f"v{index}"), {"question": key.id})
            group_shard_write(self.store, key, self.config.shards, member, self.rng)
            yield env.timeout(commit)

        if strategy == "naive":
            return naive
        if strategy == "group":
            return grouped
        return sharded

    def client(self, key: Key, index: int) -> Generator:
        outcome = yield from with_retry(
            self.vote(key, index), self.config.retry, self.env, self.rng
        )
        self.outcomes.append(outcome)
        self.targets.append(key)

    def arrivals(self) -> Generator:
        config = self.config
        gaps = self.rng.exponential(1000.0 / config.arrival_rate, config.total_votes)
        targets = self.rng.integers(config.questions, size=config.total_votes)
        for index, (gap, target) in enumerate(zip(gaps, targets)):
            yield self.env.timeout(float(gap))
            self.env.process(self.client(self.questions[int(target)], index))

    def final_count(self, key: Key) -> int:
        if self.config.strategy == "naive":
            return int(self.mapper.load("Question", key).get("votes"))
        if self.config.strategy == "group":
            return len(group_union(self.store, key, self.config.shards))
        return int(self.mapper.reload_value("Question", key, "votes"))

    def run(self) -> WorkloadReport:
        config = self.config
        self.seed_questions()
        self.env.process(self.arrivals())
        self.env.run()
        self.store.advance_time(self.store.config.query_staleness_window)

        succeeded: Dict[str, int] = {key.id: 0 for key in self.questions}
        for key, outcome in zip(self.targets, self.outcomes):
            if outcome.success:
                succeeded[key.id] += 1
        times = [outcome.total_time for outcome in self.outcomes if outcome.success]
        attempts = [outcome.attempts for outcome in self.outcomes]
        issued = len(self.outcomes)
        success_count = sum(succeeded.values())
        if times:
            p50, p95, p99 = np.percentile(times, [50, 95, 99])
            mean = float(np.mean(times))
        else:
            p50 = p95 = p99 = mean = 0.0
        return WorkloadReport(
            strategy=config.strategy,
            shards=config.shards,
            retry=config.retry.mode,
            seed=config.seed,
            issued=issued,
            succeeded=success_count,
            failed=issued - success_count,
            failure_rate=round((issued - success_count) / issued, 6),
            mean_tx_time=round(mean, 3),
            p50=round(float(p50), 3),
            p95=round(float(p95), 3),
            p99=round(float(p99), 3),
            mean_attempts=round(float(np.mean(attempts)), 6),
            contention_errors=int(sum(attempts)) - success_count,
            per_question_final={
                key.id: self.final_count(key) for key in self.questions
            },
            per_question_succeeded=succeeded,
            config_echo=config.to_dict(),
        )


def run_workload(config: WorkloadConfig) -> WorkloadReport:
    """Run one experiment arm on a fresh store and collect its report."""
    config.validate()
    logger.info("Running %s arm, seed %d.", config.label, config.seed)
    report = _VotingApp(config).run()
    logger.info(
        "Finished %s arm: %d/%d votes failed, mean %.1f ms.",
        config.label,
        report.failed,
        report.issued,
        report.mean_tx_time,
    )
    return report


def sweep(configs: List[WorkloadConfig]) -> List[WorkloadReport]:
    """Run every config on its own store; failing runs are reported per row."""
    reports = []
    for config in configs:
        try:
            reports.append(run_workload(config))
        except ShardMapError as error:
            logger.error("Run %s failed: %s", config.label, error)
            reports.append(WorkloadReport.failed_run(config, error))
    return reports


def report_to_json(report: WorkloadReport) -> Dict[str, Any]:
    data = report._asdict()
    data["tx_time_unit"] = "virtual_ms"
    data["tx_time_includes_backoff"] = True
    return data


def reports_to_csv(reports: List[WorkloadReport]) -> str:
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        writer.writerow(
            [
                report.strategy,
                report.shards,
                report.retry,
                report.issued,
                report.succeeded,
                report.failed,
                report.failure_rate,
                report.mean_tx_time,
                report.p50,
                report.p95,
                report.p99,
                report.seed,
            ]
        )
    return output.getvalue()
