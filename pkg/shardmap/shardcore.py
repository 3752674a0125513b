"""Property sharding and entity group sharding over the document store.

Static property sharding spreads a property over ``n`` shard entities with
deterministic ids ``<owner>-1`` to ``<owner>-n`` and updates one shard
picked at random. ``<owner>`` is the owner id, or the escaped key path of an
owner with a parent, so distinct owners of one kind never share a shard.
Dynamic property sharding inserts a new shard for every update and relies on
``compact`` to fold them back into one. Entity group
sharding spreads the members of a hot entity group over ``n`` replica groups
``<root>-g1`` to ``<root>-gn``.

The derived ids do not encode the owner kind: two owner kinds need distinct
shard kinds, which ``Mapper.register`` enforces.
"""
import logging
from functools import reduce
from typing import Any, Callable, Dict, Iterable, List, NamedTuple, Optional, Tuple
from urllib.parse import quote

import numpy as np
from typing_extensions import TypedDict

from .docstore import DocStore, Entity, Key, PropertyValue
from .error import (
    FoldLawViolationError,
    MissingPropertyError,
    ShardSpecError,
    UnknownFoldError,
)

__all__ = [
    "FoldFn",
    "register_fold",
    "get_fold",
    "check_fold_laws",
    "ShardSpec",
    "ShardSpecDict",
    "ShardEntity",
    "owner_property",
    "owner_ref",
    "make_shard_keys",
    "static_shard_init",
    "pick_random_shard",
    "fold_all",
    "static_shards",
    "dynamic_shards",
    "update_random_shard",
    "dynamic_shard_append",
    "compact",
    "replica_roots",
    "group_shard_write",
    "group_union",
]

logger = logging.getLogger(__name__)

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class FoldFn(NamedTuple):
    """A named fold function with a sampler for its value domain.

    The sampler draws ``count`` domain values from a numpy Generator and is
    used to probe the fold laws.
    """

    name: str
    fn: Callable[[PropertyValue, PropertyValue], PropertyValue]
    sample: Callable[[np.random.Generator, int], List[PropertyValue]]

    def __call__(self, x: PropertyValue, y: PropertyValue) -> PropertyValue:
        return self.fn(x, y)


def _sample_ints(rng: np.random.Generator, count: int) -> List[PropertyValue]:
    return [int(value) for value in rng.integers(-(2**31), 2**31, size=count)]


def _sample_dyadic_floats(rng: np.random.Generator, count: int) -> List[PropertyValue]:
    # quarters of small integers add up exactly in binary floating point
    return [float(value) / 4 for value in rng.integers(-(2**20), 2**20, size=count)]


_folds: Dict[str, FoldFn] = {}


def register_fold(
    name: str,
    fn: Callable[[PropertyValue, PropertyValue], PropertyValue],
    sample: Callable[[np.random.Generator, int], List[PropertyValue]] = _sample_ints,
) -> FoldFn:
    """Register a fold function under a name usable in shard specs."""
    fold = FoldFn(name, fn, sample)
    _folds[name] = fold
    return fold


def get_fold(name: str) -> FoldFn:
    try:
        return _folds[name]
    except KeyError:
        raise UnknownFoldError(name)


register_fold("sum-int", lambda x, y: x + y)
register_fold("sum-float", lambda x, y: float(x) + float(y), _sample_dyadic_floats)
register_fold("max-int", max)
register_fold("min-int", min)

NEUTRAL_ELEMENTS = {
    "sum-int": 0,
    "sum-float": 0.0,
    "max-int": INT64_MIN,
    "min-int": INT64_MAX,
}


def check_fold_laws(
    fold: FoldFn,
    neutral: PropertyValue,
    rng: Optional[np.random.Generator] = None,
    probes: int = 200,
) -> None:
    """Probe identity, commutativity and associativity on random triples.

    Raises a FoldLawViolationError with the first counterexample found.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    values = fold.sample(rng, 3 * probes)
    for x, y, z in zip(values[0::3], values[1::3], values[2::3]):
        if fold(neutral, x) != x or fold(x, neutral) != x:
            raise FoldLawViolationError(fold.name, "identity", (neutral, x))
        if fold(x, y) != fold(y, x):
            raise FoldLawViolationError(fold.name, "commutativity", (x, y))
        if fold(fold(x, y), z) != fold(x, fold(y, z)):
            raise FoldLawViolationError(fold.name, "associativity", (x, y, z))


class ShardSpecDict(TypedDict):
    property: str
    neutral: PropertyValue
    fold: str
    mode: Dict[str, Any]


class ShardSpec(NamedTuple):
    """How one property is sharded.

    ``shards`` is the static shard count; leave it as None to shard
    dynamically.
    """

    property: str
    neutral: PropertyValue = 0
    fold: str = "sum-int"
    shards: Optional[int] = None
    shard_kind: str = "Shard"

    @property
    def is_static(self) -> bool:
        return self.shards is not None

    @property
    def shard_property(self) -> str:
        return f"shard_{self.property}"

    @property
    def fold_fn(self) -> FoldFn:
        return get_fold(self.fold)

    def validate(self) -> None:
        get_fold(self.fold)
        if self.shards is not None and (
            not isinstance(self.shards, int) or self.shards < 1
        ):
            raise ShardSpecError(
                f"Static sharding of {self.property!r} needs at least one shard,"
                f" got {self.shards!r}."
            )

    @classmethod
    def from_dict(cls, data: ShardSpecDict) -> "ShardSpec":
        """Read the JSON config block, e.g. ``{"mode": {"static": 10}}``."""
        mode = data.get("mode") or {"dynamic": True}
        if "static" in mode:
            shards: Optional[int] = mode["static"]
        elif mode.get("dynamic"):
            shards = None
        else:
            raise ShardSpecError(f"Unknown shard mode {mode!r}.")
        spec = cls(
            property=data["property"],
            neutral=data.get("neutral", 0),
            fold=data.get("fold", "sum-int"),
            shards=shards,
            shard_kind=data.get("shard_kind", "Shard"),  # type: ignore
        )
        spec.validate()
        return spec

    def to_dict(self) -> Dict[str, Any]:
        mode = {"static": self.shards} if self.is_static else {"dynamic": True}
        data: Dict[str, Any] = {
            "property": self.property,
            "neutral": self.neutral,
            "fold": self.fold,
            "mode": mode,
        }
        if self.shard_kind != "Shard":
            data["shard_kind"] = self.shard_kind
        return data


def owner_property(owner: Key) -> str:
    """The shard property referencing the owner, e.g. "question"."""
    return owner.kind.lower()


def owner_ref(owner: Key) -> str:
    """The owner as stored in shard ids and in the owner property.

    Root owners are referenced by id, owners with a parent by their full key
    path. Both are percent-escaped, which keeps the mapping injective.
    """
    return quote(owner.id if owner.parent is None else owner.path, safe="")


class ShardEntity(NamedTuple):
    key: Key
    owner: Key
    value: PropertyValue

    def to_entity(self, spec: ShardSpec) -> Entity:
        return Entity(
            self.key,
            {
                owner_property(self.owner): owner_ref(self.owner),
                spec.shard_property: self.value,
            },
        )

    @classmethod
    def from_entity(cls, entity: Entity, owner: Key, spec: ShardSpec) -> "ShardEntity":
        value = entity.properties.get(spec.shard_property, spec.neutral)
        return cls(entity.key, owner, value)


def make_shard_keys(owner: Key, n: int, shard_kind: str = "Shard") -> List[Key]:
    """Return the keys of the static shards of an owner.

    Every shard is the root of its own entity group.
    """
    if n < 1:
        raise ShardSpecError(f"Need at least one shard, got {n}.")
    return [Key(shard_kind, f"{owner_ref(owner)}-{i}") for i in range(1, n + 1)]


def static_shard_init(
    main: Entity, spec: ShardSpec
) -> Tuple[Entity, List[ShardEntity]]:
    """Split an entity into its main entity and ``n`` shards.

    The first shard carries the original value, all others the neutral
    element. Nothing is persisted.
    """
    if spec.property not in main.properties:
        raise MissingPropertyError(main.key.kind, spec.property)
    if not spec.is_static:
        raise ShardSpecError(f"Property {spec.property!r} is not statically sharded.")
    properties = dict(main.properties)
    value = properties.pop(spec.property)
    keys = make_shard_keys(main.key, spec.shards or 1, spec.shard_kind)
    shards = [ShardEntity(keys[0], main.key, value)]
    shards.extend(ShardEntity(key, main.key, spec.neutral) for key in keys[1:])
    return Entity(main.key, properties, main.version), shards


def pick_random_shard(owner: Key, spec: ShardSpec, rng: np.random.Generator) -> Key:
    n = spec.shards or 1
    return Key(spec.shard_kind, f"{owner_ref(owner)}-{int(rng.integers(n)) + 1}")


def fold_all(shards: Iterable[ShardEntity], spec: ShardSpec) -> PropertyValue:
    return reduce(spec.fold_fn, (shard.value for shard in shards), spec.neutral)


def static_shards(store: DocStore, owner: Key, spec: ShardSpec) -> List[ShardEntity]:
    """Read the static shards of an owner by key, strongly consistent."""
    keys = make_shard_keys(owner, spec.shards or 1, spec.shard_kind)
    return [
        ShardEntity.from_entity(entity, owner, spec)
        for entity in store.get_multi(keys)
        if entity is not None
    ]


def dynamic_shards(store: DocStore, owner: Key, spec: ShardSpec) -> List[ShardEntity]:
    """Find the shards of an owner through a kind query; may be stale."""
    filters = [(owner_property(owner), "=", owner_ref(owner))]
    entities = store.query(spec.shard_kind, filters)
    return [ShardEntity.from_entity(entity, owner, spec) for entity in entities]


def update_random_shard(
    store: DocStore,
    owner: Key,
    spec: ShardSpec,
    delta: PropertyValue,
    rng: np.random.Generator,
) -> Key:
    """Fold a delta into one random static shard inside a transaction."""
    key = pick_random_shard(owner, spec, rng)
    tx = store.begin_transaction({key})
    with tx:
        entity = tx.get(key)
        current = (
            entity.properties.get(spec.shard_property, spec.neutral)
            if entity is not None
            else spec.neutral
        )
        tx.put(ShardEntity(key, owner, spec.fold_fn(current, delta)).to_entity(spec))
    return key


def dynamic_shard_append(
    store: DocStore, owner: Key, delta: PropertyValue, spec: ShardSpec
) -> ShardEntity:
    """Insert a brand-new shard holding the delta under a store-assigned id."""
    key = Key(spec.shard_kind, store.allocate_id(spec.shard_kind))
    shard = ShardEntity(key, owner, delta)
    store.put(shard.to_entity(spec))
    return shard


def compact(store: DocStore, owner: Key, spec: ShardSpec) -> ShardEntity:
    """Fold all dynamic shards of an owner into a single shard.

    Works in chunks so that no transaction spans more entity groups than the
    store allows: each chunk deletes up to ``max_groups_per_tx - 1`` shards
    and folds them into one accumulator shard. Between chunks the virtual
    clock advances by one commit service time, so this is a batch job that
    must not run inside a simulated process or concurrently with itself for
    the same owner.
    """
    shards = dynamic_shards(store, owner, spec)
    if len(shards) == 1:
        return shards[0]
    if not shards:
        return dynamic_shard_append(store, owner, spec.neutral, spec)

    fold = spec.fold_fn
    accumulator = Key(spec.shard_kind, store.allocate_id(spec.shard_kind))
    chunk = max(1, store.config.max_groups_per_tx - 1)
    value = spec.neutral
    for start in range(0, len(shards), chunk):
        if start:
            store.advance_time(store.config.commit_service_time)
        batch = shards[start : start + chunk]
        tx = store.begin_transaction([accumulator] + [shard.key for shard in batch])
        with tx:
            stored = tx.get(accumulator)
            value = (
                stored.properties[spec.shard_property]
                if stored is not None
                else spec.neutral
            )
            for shard in batch:
                entity = tx.get(shard.key)
                if entity is None:
                    continue
                value = fold(value, entity.properties.get(spec.shard_property))
                tx.delete(shard.key)
            tx.put(ShardEntity(accumulator, owner, value).to_entity(spec))
    logger.info(
        "Compacted %d shards of %s into %s.", len(shards), owner, accumulator
    )
    return ShardEntity(accumulator, owner, value)


def replica_roots(root: Key, n: int) -> List[Key]:
    if n < 1:
        raise ShardSpecError(f"Need at least one replica group, got {n}.")
    return [Key(root.kind, f"{owner_ref(root)}-g{i}") for i in range(1, n + 1)]


def group_shard_write(
    store: DocStore, group_root: Key, n: int, member: Entity, rng: np.random.Generator
) -> Key:
    """Persist a group member under one of ``n`` replica group roots.

    Returns the chosen replica root. A ContentionError from the commit
    propagates to the caller.
    """
    roots = replica_roots(group_root, n)
    root = roots[int(rng.integers(n))]
    store.put(Entity(Key(member.key.kind, member.key.id, root), member.properties))
    return root


def group_union(store: DocStore, root: Key, n: int) -> List[Entity]:
    """Restore the members of a sharded entity group from all its replicas.

    Members are deduplicated by kind and id.
    """
    seen = set()
    members = []
    for replica in replica_roots(root, n):
        for entity in store.ancestor_query(replica):
            if entity.key == replica:
                continue
            identity = (entity.key.kind, entity.key.id)
            if identity not in seen:
                seen.add(identity)
                members.append(entity)
    return members
