from shardmap import (
    ConfigError,
    ContentionError,
    FoldLawViolationError,
    Key,
    NotFoundError,
    ShardMapError,
    TooManyGroupsError,
)


def test_can_create_contention_error():
    error = ContentionError([Key("Shard", "42-2"), Key("Shard", "42-1")], "version")
    assert isinstance(error, ShardMapError)
    assert error.group_roots == (Key("Shard", "42-1"), Key("Shard", "42-2"))
    assert error.reason == "version"
    assert str(error) == "Write contention (version) on entity groups Shard/42-1,Shard/42-2."


def test_contention_error_defaults_to_busy():
    assert ContentionError([Key("Question", "42")]).reason == "busy"


def test_compare_contention_errors():
    error = ContentionError([Key("Question", "42")], "busy")
    assert error == error
    same_error = ContentionError((Key("Question", "42"),), "busy")
    assert error == same_error
    different_error = ContentionError([Key("Question", "42")], "version")
    assert error != different_error
    different_error = ContentionError([Key("Question", "43")], "busy")
    assert error != different_error


def test_errors_of_different_classes_differ():
    assert NotFoundError(Key("Question", "42")) != ContentionError(
        [Key("Question", "42")]
    )


def test_hash_errors():
    errors = {
        TooManyGroupsError(6, 5),
        TooManyGroupsError(7, 5),
        ConfigError("questions", "Must be positive."),
    }
    assert TooManyGroupsError(6, 5) in errors
    assert TooManyGroupsError(7, 5) in errors
    assert ConfigError("questions", "Must be positive.") in errors
    assert TooManyGroupsError(6, 4) not in errors
    assert ConfigError("votes", "Must be positive.") not in errors


def test_fold_law_violation_keeps_operands():
    error = FoldLawViolationError("diff", "commutativity", [1, 2])
    assert error.operands == (1, 2)
    assert error == FoldLawViolationError("diff", "commutativity", (1, 2))
    assert "commutativity" in str(error)
