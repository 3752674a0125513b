import inspect
import json
import sys
from typing import Any, Callable, Generator, TypeVar

if sys.version_info >= (3, 10):
    from typing import ParamSpec
else:  # pragma: no cover
    from typing_extensions import ParamSpec


__all__ = ["wrap_in_process", "is_process", "format_ms", "json_encode"]

P = ParamSpec("P")
R = TypeVar("R")


def wrap_in_process(f: Callable[P, R]) -> Callable[P, Generator[Any, Any, R]]:
    """Convert a sync callable (normal def or lambda) to a simpy process body.

    The returned generator function yields nothing and returns the result of
    the wrapped callable, so it can be driven with ``yield from`` inside a
    process or passed to ``Environment.process``.
    """

    def f_process(*args: P.args, **kwargs: P.kwargs) -> Generator[Any, Any, R]:
        return f(*args, **kwargs)
        yield  # pragma: no cover

    return f_process


def is_process(value: Any) -> bool:
    """Check whether a value is a process body that still has to be driven."""
    return inspect.isgenerator(value)


def format_ms(value: float) -> str:
    """Format a virtual time in milliseconds for logs and event lines."""
    return f"{value:.3f}"


def json_encode(data: Any, pretty: bool = False) -> str:
    """Serialize the given data (a dictionary or a list) using JSON.

    Keys keep their insertion order so that identical inputs always produce
    identical output; set pretty=True for an indented rendering.
    """
    if not pretty:
        return json.dumps(data, separators=(",", ":"))
    return json.dumps(data, indent=2, separators=(",", ": "))
