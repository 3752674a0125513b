"""
shardmap
===================

shardmap is an object mapper that shards hot spot properties and entity
groups over a simulated NoSQL document store, together with a discrete-event
harness measuring write contention under concurrent load.
"""
from .docstore import (
    CommitResult,
    DocStore,
    Entity,
    Key,
    StoreConfig,
    Transaction,
    entity_from_json,
    entity_to_json,
)
from .error import (
    ConfigError,
    ContentionError,
    CrossGroupError,
    DuplicateKindError,
    FoldLawViolationError,
    MissingPropertyError,
    NotFoundError,
    ShardMapError,
    ShardSpecError,
    TooManyGroupsError,
    TransactionStateError,
    UnknownFoldError,
    UnknownKindError,
    UnknownMethodError,
    UnsupportedFilterError,
)
from .mapper import (
    MappedObject,
    MappingDef,
    Mapper,
    SaveReceipt,
    Shardable,
    ShardMethod,
    mapped,
    shard_method,
)
from .shardcore import (
    ShardEntity,
    ShardSpec,
    check_fold_laws,
    compact,
    fold_all,
    get_fold,
    group_shard_write,
    group_union,
    register_fold,
    static_shard_init,
)
from .simharness import (
    WorkloadConfig,
    WorkloadReport,
    report_to_json,
    reports_to_csv,
    run_workload,
    sweep,
)
from .txretry import Backoff, RetryOutcome, RetryPolicy, run_with_retry, with_retry
from .version import version, version_info

# The shardmap version info.

__version__ = version
__version_info__ = version_info

__all__ = [
    "version",
    "version_info",
    "Key",
    "Entity",
    "StoreConfig",
    "DocStore",
    "Transaction",
    "CommitResult",
    "entity_to_json",
    "entity_from_json",
    "ShardSpec",
    "ShardEntity",
    "register_fold",
    "get_fold",
    "check_fold_laws",
    "static_shard_init",
    "fold_all",
    "compact",
    "group_shard_write",
    "group_union",
    "MappingDef",
    "MappedObject",
    "Mapper",
    "SaveReceipt",
    "ShardMethod",
    "Shardable",
    "shard_method",
    "mapped",
    "Backoff",
    "RetryPolicy",
    "RetryOutcome",
    "with_retry",
    "run_with_retry",
    "WorkloadConfig",
    "WorkloadReport",
    "run_workload",
    "sweep",
    "report_to_json",
    "reports_to_csv",
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
