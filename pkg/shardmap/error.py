"""Error classes provided by shardmap"""

from typing import Any, Collection, Optional, Tuple

__all__ = [
    "ShardMapError",
    "ContentionError",
    "TooManyGroupsError",
    "CrossGroupError",
    "TransactionStateError",
    "UnsupportedFilterError",
    "MissingPropertyError",
    "NotFoundError",
    "DuplicateKindError",
    "UnknownKindError",
    "FoldLawViolationError",
    "UnknownFoldError",
    "UnknownMethodError",
    "ShardSpecError",
    "ConfigError",
]


class ShardMapError(Exception):
    """Base class of all errors raised by shardmap.

    Subclasses list the attributes that identify an error in ``_fields``;
    two errors are equal when they have the same class and field values.
    """

    _fields: Tuple[str, ...] = ()

    def _identity(self) -> Tuple[Any, ...]:
        return tuple(getattr(self, name) for name in self._fields)

    def __eq__(self, other):
        """Check whether this error is equal to another one."""
        return type(other) is type(self) and other._identity() == self._identity()

    def __hash__(self):
        """Create a hash value for this error."""
        return hash((type(self).__name__, self._identity()))


class ContentionError(ShardMapError):
    """A commit lost against a concurrent commit on one of its entity groups."""

    _fields = ("group_roots", "reason")

    def __init__(self, group_roots: Collection, reason: str = "busy"):
        """Create a contention error.

        You need to pass the entity group roots the failed commit touched and
        the reason, which is "version" for a failed optimistic validation and
        "busy" when another commit still occupies one of the groups.
        """
        self.group_roots = tuple(sorted(group_roots, key=str))
        self.reason = reason
        roots = ",".join(str(root) for root in self.group_roots)
        super().__init__(f"Write contention ({reason}) on entity groups {roots}.")


class TooManyGroupsError(ShardMapError):
    """A transaction was started over more entity groups than allowed."""

    _fields = ("count", "limit")

    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(
            f"Transactions may span at most {limit} entity groups, got {count}."
        )


class CrossGroupError(ShardMapError):
    """A transaction touched a key outside of its declared entity groups."""

    _fields = ("key",)

    def __init__(self, key):
        self.key = key
        super().__init__(f"Key {key} is outside of the transaction's entity groups.")


class TransactionStateError(ShardMapError):
    _fields = ("tx_id", "state")

    def __init__(self, tx_id: int, state: str):
        self.tx_id = tx_id
        self.state = state
        super().__init__(f"Transaction {tx_id} is {state}.")


class UnsupportedFilterError(ShardMapError):
    """A query filter that the store cannot evaluate."""

    _fields = ("property", "comparator")

    def __init__(self, property: str, comparator: str):
        self.property = property
        self.comparator = comparator
        super().__init__(f"Unsupported filter: {property} {comparator}.")


class MissingPropertyError(ShardMapError):
    _fields = ("kind", "property")

    def __init__(self, kind: str, property: str):
        self.kind = kind
        self.property = property
        super().__init__(f"Entity of kind {kind!r} has no property {property!r}.")


class NotFoundError(ShardMapError):
    _fields = ("key",)

    def __init__(self, key):
        self.key = key
        super().__init__(f"No entity stored under key {key}.")


class DuplicateKindError(ShardMapError):
    _fields = ("kind",)

    def __init__(self, kind: str):
        self.kind = kind
        super().__init__(f"Kind {kind!r} is already registered.")


class UnknownKindError(ShardMapError):
    _fields = ("kind",)

    def __init__(self, kind: str):
        self.kind = kind
        super().__init__(f"Kind {kind!r} is not registered.")


class FoldLawViolationError(ShardMapError):
    """A fold function and neutral element failed a randomized law probe."""

    _fields = ("fold", "law", "operands")

    def __init__(self, fold: str, law: str, operands: Optional[Tuple] = None):
        """Create a fold law violation.

        You need to pass the name of the fold function, the violated law
        ("identity", "commutativity" or "associativity") and the operands
        of the counterexample that was found.
        """
        self.fold = fold
        self.law = law
        self.operands = tuple(operands) if operands is not None else ()
        super().__init__(f"Fold {fold!r} violates {law} for {self.operands!r}.")


class UnknownFoldError(ShardMapError):
    _fields = ("name",)

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"No fold function registered as {name!r}.")


class UnknownMethodError(ShardMapError):
    _fields = ("kind", "method")

    def __init__(self, kind: str, method: str):
        self.kind = kind
        self.method = method
        super().__init__(f"Kind {kind!r} has no shard method {method!r}.")


class ShardSpecError(ShardMapError):
    _fields = ("message",)

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class ConfigError(ShardMapError):
    """Invalid run parameters, e.g. a non-positive vote count."""

    _fields = ("field", "message")

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")
