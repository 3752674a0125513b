"""Retry policies for transactional work that may lose against write contention."""
import logging
from collections import namedtuple
from typing import Any, Callable, Dict, Generator, NamedTuple, Optional

import numpy as np
import simpy
from typing_extensions import TypedDict

from .error import ConfigError, ContentionError
from .utils import format_ms, is_process

__all__ = [
    "Backoff",
    "RetryPolicy",
    "RetryPolicyDict",
    "RetryOutcome",
    "with_retry",
    "run_with_retry",
]

logger = logging.getLogger(__name__)

RetryOutcome = namedtuple("RetryOutcome", "success attempts total_time value")


class Backoff(NamedTuple):
    """Wait between attempts, in virtual milliseconds.

    ``kind`` is "none", "fixed" (always ``delay``) or "exponential"
    (``min(cap, delay * factor ** i)`` before retry ``i``).
    """

    kind: str = "none"
    delay: float = 0.0
    factor: float = 2.0
    cap: float = float("inf")

    def base_delay(self, retry: int) -> float:
        if self.kind == "fixed":
            return self.delay
        if self.kind == "exponential":
            return min(self.cap, self.delay * self.factor**retry)
        return 0.0

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "fixed":
            return {"fixed_ms": self.delay}
        if self.kind == "exponential":
            data: Dict[str, Any] = {"base_ms": self.delay, "factor": self.factor}
            if self.cap != float("inf"):
                data["cap_ms"] = self.cap
            return {"exponential": data}
        return {}

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "Backoff":
        if not data:
            return cls()
        if "fixed_ms" in data:
            return cls("fixed", float(data["fixed_ms"]))
        if "exponential" in data:
            params = data["exponential"]
            return cls(
                "exponential",
                float(params["base_ms"]),
                float(params.get("factor", 2.0)),
                float(params.get("cap_ms", float("inf"))),
            )
        raise ConfigError("backoff", f"Unknown backoff {data!r}.")


class RetryPolicyDict(TypedDict, total=False):
    mode: str
    max_attempts: int
    backoff: Dict[str, Any]
    jitter: float


class RetryPolicy(NamedTuple):
    """Whether and how often to retry after a ContentionError.

    ``mode`` is "none" (one attempt) or "until_success"; ``max_attempts``
    bounds the latter, None meaning unbounded.
    """

    mode: str = "none"
    max_attempts: Optional[int] = None
    backoff: Backoff = Backoff()
    jitter: float = 0.0

    @classmethod
    def none(cls) -> "RetryPolicy":
        return cls()

    @classmethod
    def until_success(
        cls,
        max_attempts: Optional[int] = None,
        backoff: Optional[Backoff] = None,
        jitter: float = 0.5,
    ) -> "RetryPolicy":
        """The experiment default: retry forever, 50 ms fixed backoff, jitter 0.5."""
        return cls(
            "until_success",
            max_attempts,
            backoff if backoff is not None else Backoff("fixed", 50.0),
            jitter,
        )

    @property
    def retries(self) -> bool:
        return self.mode == "until_success"

    def validate(self) -> None:
        if self.mode not in ("none", "until_success"):
            raise ConfigError("retry.mode", f"Unknown retry mode {self.mode!r}.")
        if self.max_attempts is not None and self.max_attempts < 1:
            raise ConfigError("retry.max_attempts", "Must be at least 1.")
        if not 0.0 <= self.jitter <= 1.0:
            raise ConfigError("retry.jitter", "Must lie within [0, 1].")
        if self.backoff.delay < 0:
            raise ConfigError("retry.backoff", "Delays cannot be negative.")

    def backoff_delay(self, retry: int, rng: np.random.Generator) -> float:
        """The wait before retry number ``retry`` (counting from 0)."""
        delay = self.backoff.base_delay(retry)
        if delay > 0 and self.jitter > 0:
            delay *= 1.0 + self.jitter * float(rng.uniform(-1.0, 1.0))
        return delay

    def to_dict(self) -> RetryPolicyDict:
        data = RetryPolicyDict(mode=self.mode)
        if self.max_attempts is not None:
            data["max_attempts"] = self.max_attempts
        data["backoff"] = self.backoff.to_dict()
        data["jitter"] = self.jitter
        return data

    @classmethod
    def from_dict(cls, data: RetryPolicyDict) -> "RetryPolicy":
        policy = cls(
            mode=data.get("mode", "none"),
            max_attempts=data.get("max_attempts"),
            backoff=Backoff.from_dict(data.get("backoff")),
            jitter=float(data.get("jitter", 0.0)),
        )
        policy.validate()
        return policy


def with_retry(
    work: Callable[[], Any],
    policy: RetryPolicy,
    env: simpy.Environment,
    rng: np.random.Generator,
) -> Generator[Any, Any, RetryOutcome]:
    """Run transactional work under a retry policy, as a simpy process body.

    The work may return a process body, which is driven to completion, or a
    plain value. Only ContentionError counts as a retryable failure; every
    other exception propagates. The total time covers all attempts and all
    backoff waits.
    """
    start = env.now
    attempts = 0
    while True:
        attempts += 1
        try:
            result = work()
            if is_process(result):
                result = yield from result
            return RetryOutcome(True, attempts, env.now - start, result)
        except ContentionError as error:
            exhausted = not policy.retries or (
                policy.max_attempts is not None and attempts >= policy.max_attempts
            )
            logger.debug(
                "t=%s attempt %d failed (%s)%s",
                format_ms(env.now),
                attempts,
                error.reason,
                ", giving up" if exhausted else "",
            )
            if exhausted:
                return RetryOutcome(False, attempts, env.now - start, None)
            delay = policy.backoff_delay(attempts - 1, rng)
            if delay > 0:
                yield env.timeout(delay)


def run_with_retry(
    work: Callable[[], Any],
    policy: RetryPolicy,
    env: simpy.Environment,
    rng: np.random.Generator,
) -> RetryOutcome:
    """Drive ``with_retry`` on the environment until its outcome is known."""
    process = env.process(with_retry(work, policy, env, rng))
    return env.run(until=process)
