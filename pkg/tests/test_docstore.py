import json

import numpy as np

from pytest import raises

from shardmap import (
    ContentionError,
    CrossGroupError,
    DocStore,
    Entity,
    Key,
    StoreConfig,
    TooManyGroupsError,
    TransactionStateError,
    UnsupportedFilterError,
    entity_from_json,
    entity_to_json,
)
from shardmap.docstore import TxState

from .utils import next_commit_window, question, settle

QUESTION_42 = Key("Question", "42")


def test_key_path_and_root():
    response = Key("Response", "47", QUESTION_42)
    assert response.path == "Question/42/Response/47"
    assert str(response) == "Question/42/Response/47"
    assert response.root == QUESTION_42
    assert QUESTION_42.root == QUESTION_42
    assert Key.from_path("Question/42/Response/47") == response


def test_key_from_invalid_path():
    with raises(ValueError):
        Key.from_path("Question")
    with raises(ValueError):
        Key.from_path("Question/42/Response")


def test_store_config_defaults():
    config = StoreConfig()
    assert config.commit_service_time == 150
    assert config.query_staleness_window == 500
    assert config.max_groups_per_tx == 5
    assert config.read_latency == 10
    assert StoreConfig.from_dict(config.to_dict()) == config


def test_first_put_creates_version_1(store):
    key = store.put(question())
    assert key == QUESTION_42
    stored = store.get(key)
    assert stored.version == 1
    assert stored.properties["votes"] == 76


def test_get_missing_entity(store):
    assert store.get(QUESTION_42) is None
    assert store.get_multi([QUESTION_42, Key("Shard", "1")]) == [None, None]


def test_get_returns_a_copy(store):
    store.put(question(tags=["a"]))
    fetched = store.get(QUESTION_42)
    fetched.properties["tags"].append("b")
    assert store.get(QUESTION_42).properties["tags"] == ["a"]


def test_second_write_to_busy_group_fails(store):
    store.put(question())
    with raises(ContentionError) as exc_info:
        store.put(question(votes=77))
    assert exc_info.value == ContentionError([QUESTION_42], "busy")
    assert store.get(QUESTION_42).properties["votes"] == 76


def test_sequential_writes_bump_the_version(store):
    store.put(question())
    next_commit_window(store)
    store.put(question(votes=77))
    stored = store.get(QUESTION_42)
    assert stored.version == 2
    assert stored.properties["votes"] == 77


def test_writes_to_distinct_groups_do_not_conflict(store):
    store.put(question("42"))
    store.put(question("43"))
    assert store.get(Key("Question", "43")).version == 1


def test_changed_read_version_aborts_commit(store):
    store.put(question())
    next_commit_window(store)
    tx = store.begin_transaction([QUESTION_42])
    entity = tx.get(QUESTION_42)
    store.put(question(votes=100))
    tx.put(Entity(QUESTION_42, {**entity.properties, "votes": 77}))
    with raises(ContentionError) as exc_info:
        tx.commit()
    assert exc_info.value.reason == "version"
    assert tx.state is TxState.ABORTED
    assert store.get(QUESTION_42).properties["votes"] == 100


def test_insert_insert_race_conflicts(store):
    tx = store.begin_transaction([QUESTION_42])
    assert tx.get(QUESTION_42) is None
    store.put(question())
    tx.put(question(votes=1))
    with raises(ContentionError) as exc_info:
        tx.commit()
    assert exc_info.value == ContentionError([QUESTION_42], "version")


def test_expect_version_checks_a_load_outside_the_transaction(store):
    store.put(question())
    loaded = store.get(QUESTION_42)
    next_commit_window(store)
    store.put(question(votes=80))
    next_commit_window(store)
    tx = store.begin_transaction([QUESTION_42])
    tx.expect_version(QUESTION_42, loaded.version)
    tx.put(question(votes=77))
    with raises(ContentionError):
        tx.commit()


def test_transaction_reads_its_own_writes(store):
    tx = store.begin_transaction([QUESTION_42])
    tx.put(question(votes=5))
    assert tx.get(QUESTION_42).properties["votes"] == 5
    tx.delete(QUESTION_42)
    assert tx.get(QUESTION_42) is None


def test_transaction_context_manager_commits(store):
    with store.begin_transaction([QUESTION_42]) as tx:
        tx.put(question())
    assert tx.state is TxState.COMMITTED
    assert store.get(QUESTION_42).version == 1


def test_transaction_context_manager_rolls_back(store):
    with raises(RuntimeError):
        with store.begin_transaction([QUESTION_42]) as tx:
            tx.put(question())
            raise RuntimeError("client crashed")
    assert tx.state is TxState.ABORTED
    assert store.get(QUESTION_42) is None


def test_closed_transaction_rejects_use(store):
    tx = store.begin_transaction([QUESTION_42])
    tx.put(question())
    tx.commit()
    with raises(TransactionStateError) as exc_info:
        tx.get(QUESTION_42)
    assert exc_info.value == TransactionStateError(tx.id, "committed")
    with raises(TransactionStateError):
        tx.commit()


def test_transaction_group_cap(store):
    five = [Key("Shard", str(i)) for i in range(5)]
    tx = store.begin_transaction(five)
    for key in five:
        tx.put(Entity(key, {"shard_votes": 0}))
    tx.commit()
    six = [Key("Shard", str(i)) for i in range(10, 16)]
    with raises(TooManyGroupsError) as exc_info:
        store.begin_transaction(six)
    assert exc_info.value == TooManyGroupsError(6, 5)


def test_group_cap_counts_roots_not_keys(store):
    keys = [Key("Response", str(i), QUESTION_42) for i in range(10)]
    tx = store.begin_transaction(keys)
    assert tx.group_roots == frozenset([QUESTION_42])


def test_transaction_needs_a_group(store):
    with raises(ValueError):
        store.begin_transaction([])


def test_cross_group_access_is_rejected(store):
    tx = store.begin_transaction([QUESTION_42])
    other = Key("Question", "43")
    with raises(CrossGroupError) as exc_info:
        tx.put(Entity(other, {}))
    assert exc_info.value == CrossGroupError(other)
    tx.put(Entity(Key("Response", "47", QUESTION_42), {"author": "Stan S"}))


def test_reserved_and_unsupported_property_values(store):
    with raises(TypeError):
        store.put(Entity(QUESTION_42, {"version": 3}))
    with raises(TypeError):
        store.put(Entity(QUESTION_42, {"votes": {1, 2}}))
    with raises(TypeError):
        store.put(Entity(QUESTION_42, {"responses": [{1: "x"}]}))


def test_query_is_stale_within_the_window(store):
    store.put(question())
    assert store.query("Question") == []
    store.advance_time(499)
    assert store.query("Question", [("votes", ">", 50)]) == []
    store.advance_time(1)
    [found] = store.query("Question", [("votes", ">", 50)])
    assert found.key == QUESTION_42
    assert found.version == 1


def test_query_filters_and_comparators(store):
    store.put(question("1", votes=10))
    store.put(question("2", votes=76))
    store.put(Entity(Key("Shard", "42-1"), {"question": "42", "shard_votes": 76}))
    settle(store)

    def ids(filters):
        return [entity.key.id for entity in store.query("Question", filters)]

    assert ids([]) == ["1", "2"]
    assert ids([("votes", "=", 76)]) == ["2"]
    assert ids([("votes", "==", 10)]) == ["1"]
    assert ids([("votes", "<", 76)]) == ["1"]
    assert ids([("votes", "≤", 76)]) == ["1", "2"]
    assert ids([("votes", ">=", 11)]) == ["2"]
    assert ids([("votes", "≥", 10), ("author", "=", "Phil R")]) == ["1", "2"]
    assert ids([("votes", "=", "76")]) == []
    assert ids([("missing", "=", 1)]) == []


def test_query_matches_any_element_of_a_list(store):
    store.put(question(tags=["politics", "education"]))
    settle(store)
    assert len(store.query("Question", [("tags", "=", "education")])) == 1
    assert store.query("Question", [("tags", "=", "sports")]) == []


def test_query_rejects_unsupported_filters(store):
    with raises(UnsupportedFilterError) as exc_info:
        store.query("Question", [("votes", "!=", 1)])
    assert exc_info.value == UnsupportedFilterError("votes", "!=")
    with raises(UnsupportedFilterError):
        store.query("Question", [("responses.author", "=", "Stan S")])
    with raises(UnsupportedFilterError):
        store.query("Question", [("tags", "=", ["a"])])


def test_delete_is_strongly_consistent_for_gets_only(store):
    store.put(question())
    settle(store)
    store.delete(QUESTION_42)
    assert store.get(QUESTION_42) is None
    assert len(store.query("Question")) == 1
    settle(store)
    assert store.query("Question") == []


def test_ancestor_query_is_strongly_consistent(store):
    store.put(question())
    store.put(Entity(Key("Response", "47", Key("Question", "43")), {"author": "x"}))
    next_commit_window(store)
    store.put(Entity(Key("Response", "47", QUESTION_42), {"author": "twodollarclick"}))
    found = store.ancestor_query(QUESTION_42)
    assert [entity.key.path for entity in found] == [
        "Question/42",
        "Question/42/Response/47",
    ]
    assert [e.key.kind for e in store.ancestor_query(QUESTION_42, "Response")] == [
        "Response"
    ]


def test_allocate_id_returns_fresh_ids(store):
    store.put(Entity(Key("Shard", "1"), {"shard_votes": 0}))
    first = store.allocate_id("Shard")
    second = store.allocate_id("Shard")
    assert first != "1"
    assert first != second


def test_event_log_lines(store):
    store.put(question())
    with raises(ContentionError):
        store.put(question(votes=77))
    assert store.event_log == [
        "t=0.000 tx=1 groups=Question/42 outcome=committed",
        "t=0.000 tx=2 groups=Question/42 outcome=contention",
    ]


def test_advance_time(store):
    store.advance_time(0)
    assert store.now == 0
    store.advance_time(12.5)
    assert store.now == 12.5
    with raises(ValueError):
        store.advance_time(-1)


def test_entity_json_format():
    response = Entity(
        Key("Response", "47", QUESTION_42),
        {"response": "Crucial for our future", "author": "Stan S"},
        3,
    )
    document = entity_to_json(response, with_version=True)
    assert document == {
        "kind": "Response",
        "id": "47",
        "parent-id": "Question/42",
        "response": "Crucial for our future",
        "author": "Stan S",
        "version": 3,
    }
    assert entity_from_json(document) == response
    assert "version" not in entity_to_json(response)


def test_dump_and_restore_snapshot(store):
    store.put(question())
    store.put(Entity(Key("Shard", "7"), {"question": "42", "shard_votes": 1}))
    dump = store.dump()
    assert [document["kind"] for document in dump] == ["Question", "Shard"]
    assert dump[0]["version"] == 1

    restored = DocStore.from_snapshot(dump)
    assert restored.get(QUESTION_42) == store.get(QUESTION_42)
    # snapshots load quiescent
    assert len(restored.query("Shard", [("question", "=", "42")])) == 1
    assert int(restored.allocate_id("Shard")) > 7


def test_dump_json_round_trip(store, tmp_path):
    store.put(question())
    path = str(tmp_path / "store.json")
    store.dump_json(path)
    with open(path) as snapshot_file:
        assert json.load(snapshot_file) == store.dump()
    restored = DocStore.load_json(path)
    assert restored.dump() == store.dump()


def test_reinsert_after_delete_continues_the_version(store):
    store.put(question())
    next_commit_window(store)
    store.delete(QUESTION_42)
    assert store.version_of(QUESTION_42) == 2
    next_commit_window(store)
    store.put(question(votes=500))
    assert store.get(QUESTION_42).version == 3


def test_delete_and_reinsert_aborts_a_stale_transaction(store):
    store.put(Entity(Key("Counter", "c"), {"n": 10}))
    next_commit_window(store)
    tx = store.begin_transaction([Key("Counter", "c")])
    seen = tx.get(Key("Counter", "c"))
    store.delete(Key("Counter", "c"))
    next_commit_window(store)
    store.put(Entity(Key("Counter", "c"), {"n": 500}))
    next_commit_window(store)
    tx.put(Entity(Key("Counter", "c"), {"n": seen.properties["n"] + 1}))
    with raises(ContentionError) as exc_info:
        tx.commit()
    assert exc_info.value.reason == "version"
    assert store.get(Key("Counter", "c")).properties["n"] == 500


def test_transaction_reading_a_deleted_key_sees_its_tombstone(store):
    store.put(question())
    next_commit_window(store)
    store.delete(QUESTION_42)
    next_commit_window(store)
    with store.begin_transaction([QUESTION_42]) as tx:
        assert tx.get(QUESTION_42) is None
        tx.put(question(votes=1))
    assert store.get(QUESTION_42).version == 3


def test_query_rejects_filters_on_nested_properties(store):
    responses = [{"response": "Crucial for our future", "author": "Stan S"}]
    store.put(question(responses=responses, details={"topic": "education"}))
    settle(store)
    with raises(UnsupportedFilterError) as exc_info:
        store.query("Question", [("details", "=", "x")])
    assert exc_info.value == UnsupportedFilterError("details", "=")
    with raises(UnsupportedFilterError):
        store.query("Question", [("responses", "=", "x")])
    assert len(store.query("Question", [("votes", ">", 50)])) == 1


def test_keys_must_survive_the_path_format(store):
    with raises(ValueError):
        store.put(Entity(Key("Question", "42/Response"), {}))
    with raises(ValueError):
        store.put(Entity(Key("Response", "47", Key("Question", "a/b")), {}))
    with raises(ValueError):
        store.put(Entity(Key("Question", ""), {}))
    assert store.get(Key("Question", "42/Response")) is None


def test_snapshot_keeps_parented_keys(store):
    response = Key("Response", "47", Key("Question", "42-g2"))
    store.put(Entity(response, {"author": "twodollarclick"}))
    restored = DocStore.from_snapshot(store.dump())
    assert restored.get(response) == store.get(response)
    assert restored.dump() == store.dump()


def scripted_workload(seed):
    """Interleave puts, transactions, deletes and aborts on a fresh store."""
    store = DocStore(StoreConfig(rng_seed=seed))
    rng = np.random.default_rng(seed)
    keys = [Key("Question", str(i)) for i in range(4)]
    for step in range(200):
        key = keys[int(rng.integers(len(keys)))]
        action = int(rng.integers(3))
        try:
            if action == 0:
                store.put(Entity(key, {"votes": step}))
            elif action == 1:
                with store.begin_transaction([key]) as tx:
                    current = tx.get(key)
                    votes = current.properties["votes"] if current else 0
                    tx.put(Entity(key, {"votes": votes + 1}))
            else:
                store.delete(key)
        except ContentionError:
            pass
        store.advance_time(float(rng.choice([0.0, 50.0, 160.0])))
    settle(store)
    return store


def test_same_seed_and_script_give_identical_stores():
    first = scripted_workload(3)
    second = scripted_workload(3)
    assert first.dump() == second.dump()
    assert first.event_log == second.event_log
    assert any(line.endswith("outcome=contention") for line in first.event_log)
    assert first.query("Question") == second.query("Question")
    assert scripted_workload(4).event_log != first.event_log
