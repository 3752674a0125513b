"""An in-process document store simulating a contention-limited NoSQL backend.

Entities are grouped by the root of their key's parent chain. Every write
commits as an optimistic transaction: the versions it read must still be
current, and no other commit may occupy one of its entity groups, which a
commit does for ``commit_service_time`` virtual milliseconds. Gets are
strongly consistent; kind queries only see writes older than
``query_staleness_window``. Virtual time is a ``simpy.Environment`` that the
store shares with any simulated clients.
"""
import copy
import json
import logging
from collections import deque, namedtuple
from enum import Enum
from typing import (
    Any,
    Collection,
    Deque,
    Dict,
    Iterable,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import simpy
from typing_extensions import TypedDict

from .error import (
    ContentionError,
    CrossGroupError,
    TooManyGroupsError,
    TransactionStateError,
    UnsupportedFilterError,
)
from .utils import format_ms, json_encode

__all__ = [
    "Key",
    "Entity",
    "PropertyValue",
    "StoreConfig",
    "StoreConfigDict",
    "TxState",
    "Transaction",
    "CommitResult",
    "DocStore",
    "entity_to_json",
    "entity_from_json",
]

logger = logging.getLogger(__name__)

PropertyValue = Any

RESERVED_PROPERTIES = ("kind", "id", "parent-id", "version")

COMPARATORS = {
    "=": lambda a, b: a == b,
    "==": lambda a, b: a == b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "≤": lambda a, b: a <= b,
    "≥": lambda a, b: a >= b,
}


class Key(NamedTuple):
    """Identifies an entity by kind, id and optional parent key."""

    kind: str
    id: str
    parent: Optional["Key"] = None

    @property
    def root(self) -> "Key":
        """The entity group root, i.e. the top of the parent chain."""
        key = self
        while key.parent is not None:
            key = key.parent
        return key

    @property
    def path(self) -> str:
        own = f"{self.kind}/{self.id}"
        return f"{self.parent.path}/{own}" if self.parent is not None else own

    @classmethod
    def from_path(cls, path: str) -> "Key":
        """Parse a key path such as ``Question/42/Response/47``."""
        parts = path.split("/")
        if len(parts) < 2 or len(parts) % 2:
            raise ValueError(f"Invalid key path {path!r}.")
        key: Optional[Key] = None
        for kind, id_ in zip(parts[::2], parts[1::2]):
            key = cls(kind, id_, key)
        assert key is not None
        return key

    def __str__(self) -> str:
        return self.path


class Entity(NamedTuple):
    key: Key
    properties: Dict[str, PropertyValue]
    version: int = 0


class StoreConfigDict(TypedDict, total=False):
    commit_service_time: float
    query_staleness_window: float
    max_groups_per_tx: int
    rng_seed: int
    read_latency: float


class StoreConfig(NamedTuple):
    """Timing and limits of the simulated store, in virtual milliseconds."""

    commit_service_time: float = 150.0
    query_staleness_window: float = 500.0
    max_groups_per_tx: int = 5
    rng_seed: int = 0
    read_latency: float = 10.0

    @classmethod
    def from_dict(cls, data: StoreConfigDict) -> "StoreConfig":
        return cls(**data)

    def to_dict(self) -> StoreConfigDict:
        return StoreConfigDict(**self._asdict())  # type: ignore


class TxState(str, Enum):
    OPEN = "open"
    COMMITTED = "committed"
    ABORTED = "aborted"


CommitResult = namedtuple("CommitResult", "tx_id committed_at versions")


def check_property_value(value: PropertyValue) -> None:
    """Make sure a value is representable in the entity JSON format."""
    if isinstance(value, (bool, int, float, str)):
        return
    if isinstance(value, list):
        for item in value:
            check_property_value(item)
        return
    if isinstance(value, dict):
        for name, item in value.items():
            if not isinstance(name, str):
                raise TypeError(f"Nested property names must be strings: {name!r}.")
            check_property_value(item)
        return
    raise TypeError(f"Unsupported property value {value!r}.")


def check_key(key: Key) -> None:
    """Reject keys whose path could not be parsed back, e.g. ids with a slash."""
    current: Optional[Key] = key
    while current is not None:
        if not current.kind or not current.id or "/" in current.kind + current.id:
            raise ValueError(f"Invalid key {current.kind!r}/{current.id!r}.")
        current = current.parent


def entity_to_json(entity: Entity, with_version: bool = False) -> Dict[str, Any]:
    """Convert an entity to the external JSON document format."""
    document: Dict[str, Any] = {"kind": entity.key.kind, "id": entity.key.id}
    if entity.key.parent is not None:
        document["parent-id"] = entity.key.parent.path
    document.update(copy.deepcopy(entity.properties))
    if with_version:
        document["version"] = entity.version
    return document


def entity_from_json(document: Dict[str, Any]) -> Entity:
    parent_path = document.get("parent-id")
    parent = Key.from_path(parent_path) if parent_path else None
    key = Key(document["kind"], str(document["id"]), parent)
    properties = {
        name: copy.deepcopy(value)
        for name, value in document.items()
        if name not in RESERVED_PROPERTIES
    }
    return Entity(key, properties, int(document.get("version", 0)))


class Transaction:
    """Unit of atomic work over at most ``max_groups_per_tx`` entity groups.

    Reads go straight to the store and record the version they observed,
    writes are buffered until commit. Use it as a context manager to commit
    on a clean exit and roll back when the block raises.
    """

    def __init__(self, store: "DocStore", tx_id: int, group_roots: Iterable[Key]):
        self.store = store
        self.id = tx_id
        self.group_roots = frozenset(group_roots)
        self.read_set: Dict[Key, int] = {}
        self.write_set: Dict[Key, Optional[Entity]] = {}
        self.state = TxState.OPEN

    def _check(self, key: Key) -> None:
        if self.state is not TxState.OPEN:
            raise TransactionStateError(self.id, self.state.value)
        if key.root not in self.group_roots:
            raise CrossGroupError(key)

    def get(self, key: Key) -> Optional[Entity]:
        self._check(key)
        if key in self.write_set:
            buffered = self.write_set[key]
            return copy.deepcopy(buffered) if buffered is not None else None
        entity = self.store.get(key)
        self.read_set.setdefault(key, self.store.version_of(key))
        return entity

    def expect_version(self, key: Key, version: int) -> None:
        """Validate at commit that a key still has a version read earlier.

        Lets a read-modify-write span a load that happened outside of the
        transaction; version 0 stands for a key that was never written.
        """
        self._check(key)
        self.read_set[key] = version

    def put(self, entity: Entity) -> Key:
        self._check(entity.key)
        check_key(entity.key)
        for name, value in entity.properties.items():
            if name in RESERVED_PROPERTIES:
                raise TypeError(f"Property name {name!r} is reserved.")
            check_property_value(value)
        self.write_set[entity.key] = Entity(
            entity.key, copy.deepcopy(entity.properties)
        )
        return entity.key

    def delete(self, key: Key) -> None:
        self._check(key)
        self.write_set[key] = None

    def commit(self) -> CommitResult:
        return self.store.commit(self)

    def rollback(self) -> None:
        if self.state is TxState.OPEN:
            self.state = TxState.ABORTED

    def __enter__(self) -> "Transaction":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            if self.state is TxState.OPEN:
                self.commit()
        else:
            self.rollback()


class DocStore:
    """The simulated document store.

    You can pass a ``simpy.Environment`` to share the virtual clock with
    simulated clients; otherwise the store creates its own. The store is
    single-writer: embedding it in a multi-threaded host requires external
    locking.
    """

    def __init__(
        self,
        config: Optional[StoreConfig] = None,
        env: Optional[simpy.Environment] = None,
    ):
        self.config = config or StoreConfig()
        self.env = env if env is not None else simpy.Environment()
        self.event_log: List[str] = []
        self._entities: Dict[Key, Entity] = {}
        # last version per key, kept across deletes
        self._versions: Dict[Key, int] = {}
        self._busy_until: Dict[Key, float] = {}
        self._visible: Dict[Key, Entity] = {}
        self._pending: Deque[Tuple[float, Key, Optional[Entity]]] = deque()
        self._next_tx_id = 1
        self._next_id = 0

    @property
    def now(self) -> float:
        return float(self.env.now)

    # Single entity access

    def put(self, entity: Entity) -> Key:
        """Store an entity as a single-entity transaction."""
        tx = self.begin_transaction({entity.key.root})
        tx.put(entity)
        self.commit(tx)
        return entity.key

    def delete(self, key: Key) -> None:
        tx = self.begin_transaction({key.root})
        tx.delete(key)
        self.commit(tx)

    def get(self, key: Key) -> Optional[Entity]:
        """Return the latest committed entity, or None if there is none."""
        entity = self._entities.get(key)
        return copy.deepcopy(entity) if entity is not None else None

    def version_of(self, key: Key) -> int:
        """The last version written for a key; a delete counts as a write."""
        return self._versions.get(key, 0)

    def get_multi(self, keys: Sequence[Key]) -> List[Optional[Entity]]:
        return [self.get(key) for key in keys]

    def allocate_id(self, kind: str) -> str:
        """Assign a fresh root-level id for an entity of the given kind."""
        self._next_id += 1
        while Key(kind, str(self._next_id)) in self._entities:
            self._next_id += 1
        return str(self._next_id)

    # Transactions

    def begin_transaction(self, group_roots: Collection[Key]) -> Transaction:
        roots = {key.root for key in group_roots}
        if not roots:
            raise ValueError("A transaction needs at least one entity group.")
        if len(roots) > self.config.max_groups_per_tx:
            raise TooManyGroupsError(len(roots), self.config.max_groups_per_tx)
        tx = Transaction(self, self._next_tx_id, roots)
        self._next_tx_id += 1
        return tx

    def commit(self, tx: Transaction) -> CommitResult:
        """Validate and apply a transaction at the current virtual time.

        Raises a ContentionError and aborts the transaction if a version it
        read has changed or if another commit still occupies one of the
        entity groups it writes.
        """
        if tx.state is not TxState.OPEN:
            raise TransactionStateError(tx.id, tx.state.value)
        now = self.now
        touched = sorted(
            {key.root for key in list(tx.read_set) + list(tx.write_set)}, key=str
        )
        written = sorted({key.root for key in tx.write_set}, key=str)

        reason = None
        for key, seen in tx.read_set.items():
            if self.version_of(key) != seen:
                reason = "version"
                break
        if reason is None and any(
            self._busy_until.get(root, float("-inf")) > now for root in written
        ):
            reason = "busy"

        if reason is not None:
            tx.state = TxState.ABORTED
            self._log(now, tx.id, touched, "contention")
            raise ContentionError(touched, reason)

        versions: Dict[Key, int] = {}
        visible_at = now + self.config.query_staleness_window
        for key, entity in tx.write_set.items():
            version = self._versions.get(key, 0) + 1
            self._versions[key] = version
            if entity is None:
                self._entities.pop(key, None)
                self._pending.append((visible_at, key, None))
                continue
            stored = entity._replace(version=version)
            self._entities[key] = stored
            self._pending.append((visible_at, key, copy.deepcopy(stored)))
            versions[key] = stored.version
        for root in written:
            self._busy_until[root] = now + self.config.commit_service_time
        tx.state = TxState.COMMITTED
        self._log(now, tx.id, touched, "committed")
        return CommitResult(tx.id, now, versions)

    def _log(self, now: float, tx_id: int, roots: List[Key], outcome: str) -> None:
        groups = ",".join(str(root) for root in roots)
        line = f"t={format_ms(now)} tx={tx_id} groups={groups} outcome={outcome}"
        self.event_log.append(line)
        logger.debug(line)

    # Queries

    def _publish(self) -> None:
        now = self.now
        while self._pending and self._pending[0][0] <= now:
            _visible_at, key, entity = self._pending.popleft()
            if entity is None:
                self._visible.pop(key, None)
            else:
                self._visible[key] = entity

    def query(
        self, kind: str, filters: Sequence[Tuple[str, str, PropertyValue]] = ()
    ) -> List[Entity]:
        """Return entities of a kind matching all filters, eventually consistent.

        Writes committed less than ``query_staleness_window`` ago may be
        missing from the result. Filters are (property, comparator, value)
        triples over atomic values.
        """
        for name, comparator, value in filters:
            if comparator not in COMPARATORS:
                raise UnsupportedFilterError(name, comparator)
            if "." in name or isinstance(value, (list, dict)):
                raise UnsupportedFilterError(name, comparator)
        self._publish()
        found = [
            entity
            for entity in self._visible.values()
            if entity.key.kind == kind
            and all(_matches(entity, *condition) for condition in filters)
        ]
        found.sort(key=lambda entity: entity.key.path)
        return copy.deepcopy(found)

    def ancestor_query(self, root: Key, kind: Optional[str] = None) -> List[Entity]:
        """Return all entities of one entity group, strongly consistent."""
        found = [
            entity
            for key, entity in self._entities.items()
            if key.root == root and (kind is None or key.kind == kind)
        ]
        found.sort(key=lambda entity: entity.key.path)
        return copy.deepcopy(found)

    # Virtual time

    def advance_time(self, delta: float) -> None:
        """Advance the virtual clock; must not be called from inside a process."""
        if delta < 0:
            raise ValueError(f"Cannot advance time by a negative delta {delta}.")
        if delta > 0:
            self.env.run(until=self.env.now + delta)
        self._publish()

    # Snapshots

    def dump(self) -> List[Dict[str, Any]]:
        """Dump all committed entities in the external JSON format."""
        return [
            entity_to_json(self._entities[key], with_version=True)
            for key in sorted(self._entities, key=lambda key: key.path)
        ]

    @classmethod
    def from_snapshot(
        cls,
        documents: Iterable[Dict[str, Any]],
        config: Optional[StoreConfig] = None,
        env: Optional[simpy.Environment] = None,
    ) -> "DocStore":
        """Create a quiescent store holding the entities of a dump."""
        store = cls(config, env)
        for document in documents:
            entity = entity_from_json(document)
            if entity.version < 1:
                entity = entity._replace(version=1)
            store._entities[entity.key] = entity
            store._versions[entity.key] = entity.version
            store._visible[entity.key] = copy.deepcopy(entity)
            if entity.key.id.isdigit():
                store._next_id = max(store._next_id, int(entity.key.id))
        return store

    def dump_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as snapshot_file:
            snapshot_file.write(json_encode(self.dump(), pretty=True))
            snapshot_file.write("\n")

    @classmethod
    def load_json(
        cls,
        path: str,
        config: Optional[StoreConfig] = None,
        env: Optional[simpy.Environment] = None,
    ) -> "DocStore":
        with open(path, encoding="utf-8") as snapshot_file:
            return cls.from_snapshot(json.load(snapshot_file), config, env)


def _comparable(a: PropertyValue, b: PropertyValue) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool)
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return True
    return isinstance(a, str) and isinstance(b, str)


def _matches(entity: Entity, name: str, comparator: str, value: PropertyValue) -> bool:
    if name not in entity.properties:
        return False
    compare = COMPARATORS[comparator]
    stored = entity.properties[name]
    # multi-valued properties match if any element does
    candidates = stored if isinstance(stored, list) else [stored]
    if any(isinstance(candidate, (list, dict)) for candidate in candidates):
        raise UnsupportedFilterError(name, comparator)
    return any(
        _comparable(candidate, value) and compare(candidate, value)
        for candidate in candidates
    )
