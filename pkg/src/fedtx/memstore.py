"""Deterministic in-memory storage adapter plus counting/fault-injection wrappers.

The store keeps an ordered map keyed by (namespace, table, partition key,
clustering key). Batches, reads, and scans synchronize on reader-writer
latches scoped to the adapter's atomic-write unit (never finer than a
partition), so a batch is one linearization point and multi-record snapshot
reads never observe half a batch.

Wrappers compose around the core store:

* ``CountingStore`` tallies applied operations.
* ``FaultInjector`` crashes chosen ``atomic_write`` calls either before or
  after the batch applies, simulating a process dying mid-commit.
"""

from __future__ import annotations

import enum
import threading
from contextlib import contextmanager
from dataclasses import dataclass, replace
from typing import Sequence

from .errors import (
    AtomicityScopeViolation,
    CapabilityUnsupported,
    InjectedCrash,
    JoinIntegrityError,
    UnknownView,
)
from .model import (
    AtomicityUnit,
    FullKey,
    GroupKey,
    Record,
    derive_group_key,
    key_sort_key,
    render_key,
)
from .records import COL_TX_ID
from .storage import (
    AdapterCapabilities,
    ConditionalWrite,
    ConditionKind,
    StorageAdapter,
    WriteKind,
)


class RWLock:
    """Reader-writer lock: shared readers, exclusive writers."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_write(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()

    @contextmanager
    def read_locked(self):
        self.acquire_read()
        try:
            yield
        finally:
            self.release_read()

    @contextmanager
    def write_locked(self):
        self.acquire_write()
        try:
            yield
        finally:
            self.release_write()


class FaultKind(enum.Enum):
    CRASH_BEFORE_BATCH = "CRASH_BEFORE_BATCH"
    CRASH_AFTER_BATCH = "CRASH_AFTER_BATCH"


@dataclass(frozen=True)
class MemStoreConfig:
    """Construction-time knobs for one in-memory store.

    ``seed`` is reserved for randomized internals; the current store is fully
    deterministic and ignores it. Fault plan entries are
    (atomic-write index, kind) with strictly increasing indices.
    """

    capabilities: AdapterCapabilities
    seed: int = 0
    fault_plan: tuple[tuple[int, FaultKind], ...] = ()


@dataclass
class OpCounters:
    """Tally of operations that reached (and were applied by) a store.

    Each applied batch and each multi-record consistent read counts one
    ``db_transactions``. Batches whose condition failed apply nothing and are
    tracked only under ``condition_failures``.
    """

    reads: int = 0
    scans: int = 0
    atomic_write_batches: int = 0
    written_records: int = 0
    db_transactions: int = 0
    view_reads: int = 0
    condition_failures: int = 0

    def copy(self) -> "OpCounters":
        return replace(self)

    def __add__(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(
            reads=self.reads + other.reads,
            scans=self.scans + other.scans,
            atomic_write_batches=self.atomic_write_batches + other.atomic_write_batches,
            written_records=self.written_records + other.written_records,
            db_transactions=self.db_transactions + other.db_transactions,
            view_reads=self.view_reads + other.view_reads,
            condition_failures=self.condition_failures + other.condition_failures,
        )

    def __sub__(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(
            reads=self.reads - other.reads,
            scans=self.scans - other.scans,
            atomic_write_batches=self.atomic_write_batches - other.atomic_write_batches,
            written_records=self.written_records - other.written_records,
            db_transactions=self.db_transactions - other.db_transactions,
            view_reads=self.view_reads - other.view_reads,
            condition_failures=self.condition_failures - other.condition_failures,
        )

    def as_text(self) -> str:
        lines = [
            f"reads={self.reads}",
            f"scans={self.scans}",
            f"batches={self.atomic_write_batches}",
            f"writtenRecords={self.written_records}",
            f"dbTransactions={self.db_transactions}",
            f"viewReads={self.view_reads}",
            f"conditionFailures={self.condition_failures}",
        ]
        return "\n".join(lines)


_RowKey = tuple  # (namespace, table, partition_key, clustering_key)


def _row_key(key: FullKey) -> _RowKey:
    return (key.namespace, key.table, key.partition_key, key.clustering_key)


class MemStore(StorageAdapter):
    """Thread-safe in-memory store with a configurable atomic-write scope."""

    def __init__(self, name: str, config: MemStoreConfig):
        self._name = name
        self._caps = config.capabilities
        self._rows: dict[_RowKey, dict] = {}
        self._latches: dict[GroupKey, RWLock] = {}
        self._latch_table_lock = threading.Lock()
        self._views: dict[str, tuple[str, str, str]] = {}
        self._view_by_table: dict[tuple[str, str], str] = {}
        # Latches never get finer than a partition so scans stay covered.
        self._latch_unit = max(self._caps.atomicity_unit, AtomicityUnit.PARTITION)

    @property
    def name(self) -> str:
        return self._name

    @property
    def capabilities(self) -> AdapterCapabilities:
        return self._caps

    # -- latching ---------------------------------------------------------

    def _truncate_scope(self, g: GroupKey) -> GroupKey:
        depth = {
            AtomicityUnit.STORAGE: 1,
            AtomicityUnit.NAMESPACE: 2,
            AtomicityUnit.TABLE: 3,
            AtomicityUnit.PARTITION: 4,
        }[self._latch_unit]
        return GroupKey(
            storage=g.storage,
            namespace=g.namespace if depth >= 2 else None,
            table=g.table if depth >= 3 else None,
            partition_key=g.partition_key if depth >= 4 else None,
        )

    def _latch_for(self, scope: GroupKey) -> RWLock:
        with self._latch_table_lock:
            latch = self._latches.get(scope)
            if latch is None:
                latch = self._latches[scope] = RWLock()
            return latch

    def _key_latch(self, key: FullKey) -> RWLock:
        return self._latch_for(self._truncate_scope(derive_group_key(key, AtomicityUnit.RECORD)))

    # -- reads ------------------------------------------------------------

    def read(self, key: FullKey) -> Record | None:
        with self._key_latch(key).read_locked():
            columns = self._rows.get(_row_key(key))
            return Record(key, dict(columns)) if columns is not None else None

    def scan(self, prefix: GroupKey) -> list[Record]:
        if prefix.partition_key is None:
            raise ValueError("scan prefix must identify one partition")
        latch = self._latch_for(self._truncate_scope(prefix))
        with latch.read_locked():
            hits = [
                (rk[3], dict(columns))
                for rk, columns in self._rows.items()
                if rk[0] == prefix.namespace
                and rk[1] == prefix.table
                and rk[2] == prefix.partition_key
            ]
        hits.sort(key=lambda item: key_sort_key(item[0]))
        return [
            Record(
                FullKey(self._name, prefix.namespace, prefix.table, prefix.partition_key, ck),
                columns,
            )
            for ck, columns in hits
        ]

    def snapshot_read(self, keys: Sequence[FullKey]) -> list[Record | None]:
        if not self._caps.consistent_readable:
            raise CapabilityUnsupported(f"storage {self._name!r} is not consistent-readable")
        if not keys:
            return []
        unit = self._caps.atomicity_unit
        scopes = {derive_group_key(k, unit) for k in keys}
        if len(scopes) > 1:
            raise AtomicityScopeViolation("snapshot read spans atomic-write scopes")
        latch = self._latch_for(self._truncate_scope(next(iter(scopes))))
        with latch.read_locked():
            out = []
            for key in keys:
                columns = self._rows.get(_row_key(key))
                out.append(Record(key, dict(columns)) if columns is not None else None)
            return out

    # -- views -------------------------------------------------------------

    def register_join_view(
        self, view_name: str, namespace: str, app_table: str, meta_table: str
    ) -> None:
        """Expose a primary-key join of an application table and its metadata table."""
        self._views[view_name] = (namespace, app_table, meta_table)
        self._view_by_table[(namespace, app_table)] = view_name

    def view_for(self, key: FullKey) -> str | None:
        return self._view_by_table.get((key.namespace, key.table))

    def view_read(self, view_name: str, key: FullKey) -> Record | None:
        if not self._caps.view_joinable:
            raise CapabilityUnsupported(f"storage {self._name!r} is not view-joinable")
        try:
            namespace, app_table, meta_table = self._views[view_name]
        except KeyError:
            raise UnknownView(f"no view named {view_name!r}") from None
        app_key = FullKey(self._name, namespace, app_table, key.partition_key, key.clustering_key)
        meta_key = FullKey(self._name, namespace, meta_table, key.partition_key, key.clustering_key)
        scopes = {
            self._truncate_scope(derive_group_key(app_key, AtomicityUnit.RECORD)),
            self._truncate_scope(derive_group_key(meta_key, AtomicityUnit.RECORD)),
        }
        latches = [self._latch_for(s) for s in sorted(scopes, key=lambda s: s.render())]
        for latch in latches:
            latch.acquire_read()
        try:
            app = self._rows.get(_row_key(app_key))
            meta = self._rows.get(_row_key(meta_key))
        finally:
            for latch in reversed(latches):
                latch.release_read()
        if app is None and meta is None:
            return None
        if app is None or meta is None:
            missing = "application" if app is None else "metadata"
            raise JoinIntegrityError(f"{missing} row missing for {key.render()}")
        joined = dict(app)
        joined.update(meta)
        return Record(app_key, joined)

    # -- writes -------------------------------------------------------------

    def _condition_holds(self, write: ConditionalWrite) -> bool:
        current = self._rows.get(_row_key(write.key))
        kind = write.condition.kind
        if kind is ConditionKind.UNCONDITIONAL:
            return True
        if kind is ConditionKind.IF_NOT_EXISTS:
            return current is None
        # IF_TX_ID_EQUALS: an absent record fails, for deletes as well.
        if current is None:
            return False
        return current.get(COL_TX_ID) == write.condition.expected_tx_id

    def atomic_write(self, writes: Sequence[ConditionalWrite]) -> int | None:
        if not writes:
            raise ValueError("empty batch")
        unit = self._caps.atomicity_unit
        groups = {derive_group_key(w.key, unit) for w in writes}
        if len(groups) > 1:
            raise AtomicityScopeViolation(
                f"batch spans {len(groups)} atomic-write scopes on {self._name!r}"
            )
        latch = self._latch_for(self._truncate_scope(next(iter(groups))))
        with latch.write_locked():
            for i, write in enumerate(writes):
                if not self._condition_holds(write):
                    return i
            for write in writes:
                if write.kind is WriteKind.DELETE:
                    self._rows.pop(_row_key(write.key), None)
                else:
                    self._rows[_row_key(write.key)] = dict(write.columns)
        return None

    # -- test and tooling surface -------------------------------------------

    def dump(self) -> list[Record]:
        """Every stored record, deterministically ordered."""
        with self._latch_table_lock:
            # sorted like every other multi-latch acquisition, so dumps can
            # run alongside view reads without lock-order inversions
            latches = [
                self._latches[scope]
                for scope in sorted(self._latches, key=lambda s: s.render())
            ]
        for latch in latches:
            latch.acquire_read()
        try:
            items = [
                (rk, dict(columns)) for rk, columns in self._rows.items()
            ]
        finally:
            for latch in reversed(latches):
                latch.release_read()
        items.sort(key=lambda item: render_key(self._name, item[0][0], item[0][1], item[0][2], item[0][3]))
        return [
            Record(FullKey(self._name, ns, table, pk, ck), columns)
            for (ns, table, pk, ck), columns in items
        ]

    def truncate(self) -> None:
        self._rows.clear()


class _ForwardingAdapter(StorageAdapter):
    """Delegates the adapter contract to a wrapped inner adapter."""

    def __init__(self, inner: StorageAdapter):
        self._inner = inner

    @property
    def name(self) -> str:
        return self._inner.name

    @property
    def capabilities(self) -> AdapterCapabilities:
        return self._inner.capabilities

    def read(self, key):
        return self._inner.read(key)

    def scan(self, prefix):
        return self._inner.scan(prefix)

    def atomic_write(self, writes):
        return self._inner.atomic_write(writes)

    def snapshot_read(self, keys):
        return self._inner.snapshot_read(keys)

    def view_read(self, view_name, key):
        return self._inner.view_read(view_name, key)

    def view_for(self, key):
        return self._inner.view_for(key)

    def __getattr__(self, item):
        # dump/truncate/register_join_view/... pass through untouched
        return getattr(self._inner, item)


class CountingStore(_ForwardingAdapter):
    """Counts operations applied by the wrapped adapter."""

    def __init__(self, inner: StorageAdapter):
        super().__init__(inner)
        self._lock = threading.Lock()
        self._counters = OpCounters()

    def counters(self) -> OpCounters:
        with self._lock:
            return self._counters.copy()

    def reset_counters(self) -> None:
        with self._lock:
            self._counters = OpCounters()

    def read(self, key):
        result = self._inner.read(key)
        with self._lock:
            self._counters.reads += 1
        return result

    def scan(self, prefix):
        result = self._inner.scan(prefix)
        with self._lock:
            self._counters.scans += 1
        return result

    def snapshot_read(self, keys):
        result = self._inner.snapshot_read(keys)
        with self._lock:
            self._counters.reads += len(keys)
            self._counters.db_transactions += 1
        return result

    def view_read(self, view_name, key):
        result = self._inner.view_read(view_name, key)
        with self._lock:
            self._counters.reads += 1
            self._counters.view_reads += 1
        return result

    def atomic_write(self, writes):
        failed_at = self._inner.atomic_write(writes)
        with self._lock:
            if failed_at is None:
                self._counters.atomic_write_batches += 1
                self._counters.written_records += len(writes)
                self._counters.db_transactions += 1
            else:
                self._counters.condition_failures += 1
        return failed_at


class FaultInjector(_ForwardingAdapter):
    """Raises planned crashes around chosen atomic-write calls.

    Indices count ``atomic_write`` calls arriving at this wrapper since the
    last ``inject_faults``. A BEFORE crash leaves the batch unapplied; an
    AFTER crash lets it apply first. Either way the error propagates so the
    caller dies exactly as a real process would.
    """

    def __init__(self, inner: StorageAdapter, plan: Sequence[tuple[int, FaultKind]] = ()):
        super().__init__(inner)
        self._lock = threading.Lock()
        self._attempts = 0
        self._plan: list[tuple[int, FaultKind]] = []
        if plan:
            self.inject_faults(plan)

    def inject_faults(self, plan: Sequence[tuple[int, FaultKind]]) -> None:
        indices = [index for index, _ in plan]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError("fault plan indices must be strictly increasing")
        with self._lock:
            self._plan = [(index, FaultKind(kind)) for index, kind in plan]
            self._attempts = 0

    def clear_faults(self) -> None:
        with self._lock:
            self._plan = []

    def pending_faults(self) -> int:
        with self._lock:
            return len(self._plan)

    def atomic_write(self, writes):
        with self._lock:
            index = self._attempts
            self._attempts += 1
            fault = None
            if self._plan and self._plan[0][0] == index:
                fault = self._plan.pop(0)[1]
        if fault is FaultKind.CRASH_BEFORE_BATCH:
            raise InjectedCrash(f"before batch #{index} on {self.name!r}")
        result = self._inner.atomic_write(writes)
        if fault is FaultKind.CRASH_AFTER_BATCH:
            raise InjectedCrash(f"after batch #{index} on {self.name!r}")
        return result


def build_memstore(name: str, config: MemStoreConfig) -> FaultInjector:
    """Standard composition: faults outermost, counting next, store innermost.

    Counters therefore reflect operations that actually executed: a
    crash-before batch is never counted, a crash-after batch is.
    """
    return FaultInjector(CountingStore(MemStore(name, config)), config.fault_plan)
