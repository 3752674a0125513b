from typing import List

from shardmap import DocStore, Entity, Key, MappingDef, ShardMethod, ShardSpec
from shardmap.mapper import METHOD_REGISTRY
from shardmap.shardcore import dynamic_shards, static_shards


def question(id: str = "42", votes: int = 76, **properties) -> Entity:
    """A question entity as used throughout the voting examples."""
    properties.setdefault("question", "How do you plan to improve public education?")
    properties.setdefault("author", "Phil R")
    properties["votes"] = votes
    return Entity(Key("Question", id), properties)


def question_mapping(spec: ShardSpec) -> MappingDef:
    return MappingDef(
        "Question",
        plain_properties=("question", "author"),
        shard_specs=(spec,),
        shard_methods={
            "voteUp": ShardMethod("votes", METHOD_REGISTRY["increment"]),
            "voteDown": ShardMethod("votes", METHOD_REGISTRY["decrement"]),
            "addVotes": ShardMethod("votes", METHOD_REGISTRY["add"]),
        },
    )


def settle(store: DocStore) -> None:
    """Wait until every committed write is visible to queries."""
    store.advance_time(store.config.query_staleness_window)


def next_commit_window(store: DocStore) -> None:
    """Wait until the entity groups written so far accept commits again."""
    store.advance_time(store.config.commit_service_time)


def shard_values(store: DocStore, owner: Key, spec: ShardSpec) -> List:
    if spec.is_static:
        shards = static_shards(store, owner, spec)
    else:
        shards = dynamic_shards(store, owner, spec)
    return [shard.value for shard in shards]
