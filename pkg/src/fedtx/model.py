"""Core data model: keys, column values, atomic-write scopes, and record metadata.

Records live in a multi-dimensional map: a record is addressed by
(storage, namespace, table, partition key, clustering key) and carries a flat
mapping of named columns. Records sharing a partition key form a partition and
are ordered by clustering key.

Column values are plain Python scalars (int, str, bool, bytes, or None), each
treated as a distinct tagged type: equality and ordering are defined within a
tag, and comparing values of different tags is an error (bool is NOT an int
here, unlike plain Python).

All types in this module are immutable value objects and safe to share across
threads.
"""

from __future__ import annotations

import enum
import functools
import json
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

ColumnValue = int | str | bool | bytes | None


class ValueTag(enum.Enum):
    NULL = "null"
    BOOL = "bool"
    INT = "int"
    TEXT = "text"
    BLOB = "blob"


def value_tag(value) -> ValueTag:
    """Classify a scalar column value. bool is checked before int on purpose."""
    if value is None:
        return ValueTag.NULL
    if isinstance(value, bool):
        return ValueTag.BOOL
    if isinstance(value, int):
        return ValueTag.INT
    if isinstance(value, str):
        return ValueTag.TEXT
    if isinstance(value, bytes):
        return ValueTag.BLOB
    raise TypeError(f"unsupported column value type: {type(value).__name__}")


def compare_values(a, b) -> int:
    """Three-way comparison of two scalars of the same tag.

    Raises TypeError when the tags differ; there is no cross-tag order.
    """
    ta, tb = value_tag(a), value_tag(b)
    if ta is not tb:
        raise TypeError(f"cannot compare {ta.value} with {tb.value}")
    if ta is ValueTag.NULL:
        return 0
    if a < b:
        return -1
    if a > b:
        return 1
    return 0


def compare_key_tuples(a: tuple, b: tuple) -> int:
    """Component-wise three-way comparison of two key tuples."""
    for x, y in zip(a, b):
        c = compare_values(x, y)
        if c != 0:
            return c
    return len(a) - len(b)


key_sort_key = functools.cmp_to_key(compare_key_tuples)


def _check_key_components(name: str, components: tuple) -> None:
    for v in components:
        tag = value_tag(v)
        if tag is ValueTag.NULL:
            raise ValueError(f"{name} component may not be null")


@dataclass(frozen=True)
class FullKey:
    """Complete address of one record.

    The partition key must be non-empty; the clustering key may be empty.
    (partition_key, clustering_key) is unique within a table.
    """

    storage: str
    namespace: str
    table: str
    partition_key: tuple
    clustering_key: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "partition_key", tuple(self.partition_key))
        object.__setattr__(self, "clustering_key", tuple(self.clustering_key))
        if not self.partition_key:
            raise ValueError("partition key must be non-empty")
        _check_key_components("partition key", self.partition_key)
        _check_key_components("clustering key", self.clustering_key)

    def render(self) -> str:
        return render_key(
            self.storage, self.namespace, self.table, self.partition_key, self.clustering_key
        )


@dataclass(frozen=True)
class Record:
    """One stored record: its address plus named columns."""

    key: FullKey
    columns: Mapping[str, object]

    def __post_init__(self):
        object.__setattr__(self, "columns", MappingProxyType(dict(self.columns)))
        for name, value in self.columns.items():
            value_tag(value)
            if not isinstance(name, str) or not name:
                raise ValueError("column names must be non-empty strings")


class AtomicityUnit(enum.IntEnum):
    """Widest scope within which a storage applies a batch of writes atomically.

    Totally ordered by scope: RECORD < PARTITION < TABLE < NAMESPACE < STORAGE.
    """

    RECORD = 1
    PARTITION = 2
    TABLE = 3
    NAMESPACE = 4
    STORAGE = 5


# Depth of the populated group-key prefix per unit: STORAGE keeps only the
# storage name, RECORD keeps everything down to the clustering key.
_UNIT_DEPTH = {
    AtomicityUnit.STORAGE: 1,
    AtomicityUnit.NAMESPACE: 2,
    AtomicityUnit.TABLE: 3,
    AtomicityUnit.PARTITION: 4,
    AtomicityUnit.RECORD: 5,
}


@dataclass(frozen=True)
class GroupKey:
    """Prefix of a FullKey identifying one atomically-writable scope.

    Populated fields always form a prefix of
    (storage, namespace, table, partition_key, clustering_key); the populated
    depth is set by the atomicity unit the key was derived under. Two writes
    with equal group keys can be applied together in one atomic batch.
    """

    storage: str
    namespace: str | None = None
    table: str | None = None
    partition_key: tuple | None = None
    clustering_key: tuple | None = None

    def __post_init__(self):
        if self.partition_key is not None:
            object.__setattr__(self, "partition_key", tuple(self.partition_key))
        if self.clustering_key is not None:
            object.__setattr__(self, "clustering_key", tuple(self.clustering_key))
        fields = (self.namespace, self.table, self.partition_key, self.clustering_key)
        seen_gap = False
        for value in fields:
            if value is None:
                seen_gap = True
            elif seen_gap:
                raise ValueError("populated group-key fields must form a prefix")

    @property
    def depth(self) -> int:
        for i, value in enumerate(
            (self.namespace, self.table, self.partition_key, self.clustering_key), start=2
        ):
            if value is None:
                return i - 1
        return 5

    def is_prefix_of(self, other: "GroupKey") -> bool:
        mine = (self.storage, self.namespace, self.table, self.partition_key, self.clustering_key)
        theirs = (
            other.storage,
            other.namespace,
            other.table,
            other.partition_key,
            other.clustering_key,
        )
        return all(m == t for m, t in zip(mine, theirs) if m is not None)

    def render(self) -> str:
        return render_key(
            self.storage, self.namespace, self.table, self.partition_key, self.clustering_key
        )


def derive_group_key(key: FullKey, unit: AtomicityUnit) -> GroupKey:
    """Truncate a record key to the scope-prefix dictated by the atomicity unit."""
    depth = _UNIT_DEPTH[unit]
    return GroupKey(
        storage=key.storage,
        namespace=key.namespace if depth >= 2 else None,
        table=key.table if depth >= 3 else None,
        partition_key=key.partition_key if depth >= 4 else None,
        clustering_key=key.clustering_key if depth >= 5 else None,
    )


def _render_value(value) -> str:
    tag = value_tag(value)
    if tag is ValueTag.BLOB:
        return "0x" + value.hex()
    return json.dumps(value)


def render_key(
    storage: str,
    namespace: str | None = None,
    table: str | None = None,
    partition_key: Iterable | None = None,
    clustering_key: Iterable | None = None,
) -> str:
    """Canonical text form: storage/namespace/table/pk=[...]/ck=[...].

    Unpopulated trailing components are omitted. Used in logs and fixtures.
    """
    parts = [storage]
    if namespace is not None:
        parts.append(namespace)
    if table is not None:
        parts.append(table)
    if partition_key is not None:
        parts.append("pk=[" + ",".join(_render_value(v) for v in partition_key) + "]")
    if clustering_key is not None:
        parts.append("ck=[" + ",".join(_render_value(v) for v in clustering_key) + "]")
    return "/".join(parts)


class TxState(enum.Enum):
    PREPARED = "PREPARED"
    COMMITTED = "COMMITTED"


@dataclass(frozen=True)
class BeforeImage:
    """Previous version of a record, kept for rollback.

    Holds the prior application columns and the prior metadata; the nested
    metadata never carries its own before-image (depth is exactly one).
    """

    columns: Mapping[str, object]
    metadata: "TransactionMetadata"

    def __post_init__(self):
        object.__setattr__(self, "columns", MappingProxyType(dict(self.columns)))
        if self.metadata.before_image is not None:
            raise ValueError("a before-image's metadata may not nest another before-image")


@dataclass(frozen=True)
class TransactionMetadata:
    """Per-record write-ahead state: who wrote it last, and at which version.

    ``delete_marker`` is only meaningful while PREPARED: it flags that the
    owning transaction intends to remove the record, so roll-forward deletes
    instead of committing the columns.
    """

    tx_id: str
    version: int
    tx_state: TxState
    prepared_at: int
    committed_at: int | None = None
    before_image: BeforeImage | None = None
    delete_marker: bool = False

    def __post_init__(self):
        if not self.tx_id:
            raise ValueError("tx_id must be non-empty")
        if self.version < 1:
            raise ValueError("version starts at 1")
        if self.tx_state is TxState.COMMITTED and self.committed_at is None:
            raise ValueError("a COMMITTED record must carry committed_at")


class TxOutcome(enum.Enum):
    COMMITTED = "COMMITTED"
    ABORTED = "ABORTED"


@dataclass(frozen=True)
class CoordinatorState:
    """Write-once outcome record; the single source of truth for a transaction."""

    tx_id: str
    state: TxOutcome
    created_at: int
