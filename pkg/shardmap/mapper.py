"""The object mapper: loading, updating and saving entities with sharded properties.

A kind is described by a ``MappingDef``, either written out directly, read
from a JSON config file, or derived from a class declared with ``@mapped``::

    @mapped("Question")
    class Question:
        id: str
        question: str
        author: str
        votes = Shardable(neutral=0, shards=10)

        @shard_method("votes")
        def vote_up(self):
            self.votes += 1

Loaded objects keep two values per sharded property: the aggregated value the
application reads, and the shard delta collected since loading. Shard methods
update both; saving folds the delta into one shard and resets it.
"""
import copy
import logging
from collections import namedtuple
from types import SimpleNamespace
from typing import (
    Any,
    Callable,
    Dict,
    List,
    NamedTuple,
    Optional,
    Tuple,
    Type,
    Union,
)

import numpy as np

from .docstore import DocStore, Entity, Key, PropertyValue
from .error import (
    ContentionError,
    DuplicateKindError,
    NotFoundError,
    ShardSpecError,
    UnknownKindError,
    UnknownMethodError,
)
from .shardcore import (
    NEUTRAL_ELEMENTS,
    ShardSpec,
    check_fold_laws,
    dynamic_shard_append,
    dynamic_shards,
    fold_all,
    static_shard_init,
    static_shards,
    update_random_shard,
)

__all__ = [
    "ShardMethod",
    "MappingDef",
    "MappedObject",
    "SaveReceipt",
    "Mapper",
    "Shardable",
    "shard_method",
    "mapped",
    "METHOD_REGISTRY",
]

logger = logging.getLogger(__name__)


class ShardMethod(NamedTuple):
    """An update of a sharded property: ``update(value, *args) -> value``."""

    property: str
    update: Callable[..., PropertyValue]
    args: Tuple[Any, ...] = ()


METHOD_REGISTRY: Dict[str, Callable[..., PropertyValue]] = {
    "increment": lambda value: value + 1,
    "decrement": lambda value: value - 1,
    "add": lambda value, k: value + k,
}


class MappingDef(NamedTuple):
    kind: str
    id_property: str = "id"
    plain_properties: Tuple[str, ...] = ()
    shard_specs: Tuple[ShardSpec, ...] = ()
    shard_methods: Dict[str, ShardMethod] = {}

    def spec_for(self, property: str) -> Optional[ShardSpec]:
        for spec in self.shard_specs:
            if spec.property == property:
                return spec
        return None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MappingDef":
        """Read a mapping from its JSON config format.

        Shard methods name an entry of the method registry, the sharded
        property, and optionally bound arguments, e.g.
        ``{"voteUp": {"method": "increment", "property": "votes"}}``.
        """
        methods = {}
        for name, entry in data.get("shard_methods", {}).items():
            try:
                update = METHOD_REGISTRY[entry["method"]]
            except KeyError:
                raise UnknownMethodError(data["kind"], entry.get("method", name))
            methods[name] = ShardMethod(
                entry["property"], update, tuple(entry.get("args", ()))
            )
        return cls(
            kind=data["kind"],
            id_property=data.get("id_property", "id"),
            plain_properties=tuple(data.get("plain_properties", ())),
            shard_specs=tuple(
                ShardSpec.from_dict(spec) for spec in data.get("shard_specs", ())
            ),
            shard_methods=methods,
        )


SaveReceipt = namedtuple("SaveReceipt", "main_written shard_keys delta_pending")


class MappedObject:
    """In-memory image of one entity, confined to a single logical client."""

    def __init__(
        self,
        kind: str,
        key: Key,
        plain: Dict[str, PropertyValue],
        aggregated: Dict[str, PropertyValue],
        shard_delta: Dict[str, PropertyValue],
        version: int = 0,
        id_property: str = "id",
    ):
        self.kind = kind
        self.id_property = id_property
        self.key = key
        self.plain = plain
        self.aggregated = aggregated
        self.shard_delta = shard_delta
        self.version = version
        self._loaded_plain = copy.deepcopy(plain)

    def get(self, name: str) -> PropertyValue:
        if name == self.id_property:
            return self.key.id
        if name in self.aggregated:
            return self.aggregated[name]
        return self.plain[name]

    def set(self, name: str, value: PropertyValue) -> None:
        if name in self.aggregated:
            raise ShardSpecError(
                f"Sharded property {name!r} can only change through shard methods."
            )
        self.plain[name] = value

    def value(self, property: str) -> PropertyValue:
        """The aggregated value of a sharded property."""
        return self.aggregated[property]

    @property
    def is_dirty(self) -> bool:
        return self.plain != self._loaded_plain

    def mark_clean(self) -> None:
        self._loaded_plain = copy.deepcopy(self.plain)

    def __repr__(self) -> str:
        return (
            f"MappedObject({self.key}, plain={self.plain!r},"
            f" aggregated={self.aggregated!r}, shard_delta={self.shard_delta!r})"
        )


class Mapper:
    """Maps registered kinds onto a document store.

    You need to pass the store; the random generator picks shards and
    defaults to one seeded from the store config. Register all kinds before
    use; the registry is not meant to change afterwards.
    """

    fold_law_probes = 200

    def __init__(self, store: DocStore, rng: Optional[np.random.Generator] = None):
        self.store = store
        self.rng = rng if rng is not None else np.random.default_rng(
            store.config.rng_seed
        )
        self._definitions: Dict[str, MappingDef] = {}

    def register(self, definition: Union[MappingDef, Type]) -> MappingDef:
        """Register a mapping definition or a class decorated with ``@mapped``."""
        if not isinstance(definition, MappingDef):
            definition = definition.__mapping__
        if definition.kind in self._definitions:
            raise DuplicateKindError(definition.kind)
        _validate(definition)
        taken = {
            spec.shard_kind: other.kind
            for other in self._definitions.values()
            for spec in other.shard_specs
        }
        for spec in definition.shard_specs:
            if spec.shard_kind in taken:
                raise ShardSpecError(
                    f"Shard kind {spec.shard_kind!r} already holds shards of"
                    f" {taken[spec.shard_kind]!r}; give {definition.kind!r} its own."
                )
        probe_rng = np.random.default_rng(self.store.config.rng_seed)
        for spec in definition.shard_specs:
            check_fold_laws(spec.fold_fn, spec.neutral, probe_rng, self.fold_law_probes)
        self._definitions[definition.kind] = definition
        return definition

    def definition(self, kind: str) -> MappingDef:
        try:
            return self._definitions[kind]
        except KeyError:
            raise UnknownKindError(kind)

    def _key(self, kind: str, key: Union[Key, str]) -> Key:
        return key if isinstance(key, Key) else Key(kind, str(key))

    def insert(self, kind: str, entity: Entity) -> Key:
        """Persist a new logical entity in its sharded layout.

        Static properties are split into main entity and shards; a dynamic
        property starts out as one shard holding its value.
        """
        definition = self.definition(kind)
        main = Entity(entity.key, dict(entity.properties))
        shards = []
        initial = []
        for spec in definition.shard_specs:
            main.properties.setdefault(spec.property, spec.neutral)
            if spec.is_static:
                main, static = static_shard_init(main, spec)
                shards.extend(shard.to_entity(spec) for shard in static)
            else:
                initial.append((spec, main.properties.pop(spec.property)))
        self.store.put(main)
        for shard in shards:
            self.store.put(shard)
        for spec, value in initial:
            dynamic_shard_append(self.store, main.key, value, spec)
        return main.key

    def load(self, kind: str, key: Union[Key, str]) -> MappedObject:
        """Load the main entity and aggregate every sharded property.

        Static shards are read by key and are strongly consistent; dynamic
        shards are found by query and may be stale.
        """
        definition = self.definition(kind)
        key = self._key(kind, key)
        main = self.store.get(key)
        if main is None:
            raise NotFoundError(key)
        aggregated = {}
        for spec in definition.shard_specs:
            aggregated[spec.property] = self._aggregate(key, spec)
        plain = {
            name: value
            for name, value in main.properties.items()
            if definition.spec_for(name) is None
        }
        return MappedObject(
            kind,
            key,
            plain,
            aggregated,
            {spec.property: spec.neutral for spec in definition.shard_specs},
            main.version,
            definition.id_property,
        )

    def _aggregate(self, key: Key, spec: ShardSpec) -> PropertyValue:
        if spec.is_static:
            return fold_all(static_shards(self.store, key, spec), spec)
        return fold_all(dynamic_shards(self.store, key, spec), spec)

    def apply_shard_method(self, obj: MappedObject, method: str, *args: Any) -> None:
        """Apply a shard method to both the shard delta and the aggregated value."""
        definition = self.definition(obj.kind)
        try:
            shard_method = definition.shard_methods[method]
        except KeyError:
            raise UnknownMethodError(obj.kind, method)
        arguments = shard_method.args + args
        name = shard_method.property
        obj.shard_delta[name] = shard_method.update(obj.shard_delta[name], *arguments)
        obj.aggregated[name] = shard_method.update(obj.aggregated[name], *arguments)

    def save(self, obj: MappedObject, raise_contention: bool = True) -> SaveReceipt:
        """Persist the main entity and fold every pending shard delta.

        The main entity is written only if its plain properties changed since
        loading, in a transaction validated against the loaded version. Then
        each non-neutral delta goes into one random static shard, or into a
        new dynamic shard, and is reset to the neutral element. A delta whose
        write fails stays pending so that a retry submits it exactly once.
        With raise_contention=False a failed shard write is reported as
        ``delta_pending`` in the receipt instead of raising.
        """
        definition = self.definition(obj.kind)
        main_written = False
        if obj.is_dirty:
            tx = self.store.begin_transaction({obj.key.root})
            with tx:
                tx.expect_version(obj.key, obj.version)
                tx.put(Entity(obj.key, copy.deepcopy(obj.plain)))
            obj.version += 1
            obj.mark_clean()
            main_written = True

        shard_keys: List[Key] = []
        delta_pending = False
        for spec in definition.shard_specs:
            delta = obj.shard_delta[spec.property]
            if delta == spec.neutral:
                continue
            try:
                if spec.is_static:
                    shard_keys.append(
                        update_random_shard(self.store, obj.key, spec, delta, self.rng)
                    )
                else:
                    shard = dynamic_shard_append(self.store, obj.key, delta, spec)
                    shard_keys.append(shard.key)
            except ContentionError:
                if raise_contention:
                    raise
                delta_pending = True
                continue
            obj.shard_delta[spec.property] = spec.neutral
        return SaveReceipt(main_written, shard_keys, delta_pending)

    def reload_value(
        self, kind: str, key: Union[Key, str], property: str
    ) -> PropertyValue:
        """Fold the currently visible shards of one property."""
        definition = self.definition(kind)
        key = self._key(kind, key)
        main = self.store.get(key)
        if main is None:
            raise NotFoundError(key)
        spec = definition.spec_for(property)
        if spec is None:
            return main.properties[property]
        return self._aggregate(key, spec)


def _validate(definition: MappingDef) -> None:
    sharded = [spec.property for spec in definition.shard_specs]
    overlap = set(sharded) & set(definition.plain_properties)
    if overlap or len(set(sharded)) != len(sharded):
        raise ShardSpecError(
            f"Properties of {definition.kind!r} must be either plain or sharded"
            f" once: {sorted(overlap) or sharded}."
        )
    shard_kinds = [spec.shard_kind for spec in definition.shard_specs]
    if len(set(shard_kinds)) != len(shard_kinds):
        raise ShardSpecError(
            f"Sharded properties of {definition.kind!r} need distinct shard kinds."
        )
    for spec in definition.shard_specs:
        spec.validate()
    for name, method in definition.shard_methods.items():
        if method.property not in sharded:
            raise ShardSpecError(
                f"Shard method {name!r} targets unsharded property"
                f" {method.property!r}."
            )


# Declarative class model


class Shardable:
    """Marks a class attribute as a sharded property.

    Leave shards unset to shard dynamically. The neutral element defaults to
    the one of the chosen fold.
    """

    def __init__(
        self,
        neutral: Optional[PropertyValue] = None,
        shards: Optional[int] = None,
        fold: str = "sum-int",
        shard_kind: str = "Shard",
    ):
        self.neutral = NEUTRAL_ELEMENTS.get(fold, 0) if neutral is None else neutral
        self.shards = shards
        self.fold = fold
        self.shard_kind = shard_kind

    def spec(self, property: str) -> ShardSpec:
        return ShardSpec(
            property, self.neutral, self.fold, self.shards, self.shard_kind
        )


def shard_method(property: str) -> Callable[[Callable], Callable]:
    """Declare a method as a shard method of a sharded property.

    The method is written against the logical value, e.g.
    ``self.votes += 1``; the mapper runs it once on the shard delta and once
    on the aggregated value.
    """

    def decorator(fn: Callable) -> Callable:
        fn.__shard_property__ = property  # type: ignore
        return fn

    return decorator


def _member_update(property: str, fn: Callable) -> Callable[..., PropertyValue]:
    def update(value: PropertyValue, *args: Any) -> PropertyValue:
        member = SimpleNamespace(**{property: value})
        fn(member, *args)
        return getattr(member, property)

    update.__name__ = fn.__name__
    return update


def mapped(
    kind: Optional[str] = None, id_property: str = "id"
) -> Callable[[Type], Type]:
    """Class decorator deriving a MappingDef from the class body.

    Annotated attributes become plain properties, ``Shardable`` attributes
    sharded ones, and ``@shard_method`` methods shard methods. The result
    is stored as ``__mapping__`` on the class.
    """

    def decorator(cls: Type) -> Type:
        specs = []
        methods = {}
        for name, attribute in vars(cls).items():
            if isinstance(attribute, Shardable):
                specs.append(attribute.spec(name))
            property = getattr(attribute, "__shard_property__", None)
            if property is not None:
                update = _member_update(property, attribute)
                methods[name] = ShardMethod(property, update)
        sharded = {spec.property for spec in specs}
        plain = tuple(
            name
            for name in getattr(cls, "__annotations__", {})
            if name != id_property and name not in sharded
        )
        cls.__mapping__ = MappingDef(
            kind=kind or cls.__name__,
            id_property=id_property,
            plain_properties=plain,
            shard_specs=tuple(specs),
            shard_methods=methods,
        )
        return cls

    return decorator
