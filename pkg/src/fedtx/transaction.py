"""Optimistic transactions across heterogeneous stores.

Every transaction buffers its writes locally and commits through a pipeline
that leans on each store's atomic-write scope:

1. group the write set so each group fits one atomic batch (``grouping``);
2. prepare each group in one conditional batch: records carry the new values
   in PREPARED state plus a before-image, and apply only if the record is
   still at the version this transaction observed;
3. re-read whatever observations conditional writes cannot cover (serializable
   mode, or split-table reads that may have been torn);
4. write one COMMITTED outcome record to the coordinator table; this write
   is the commit point and the single source of truth;
5. flip each group's records to COMMITTED in one batch per group, optionally
   from a background queue.

A transaction whose writes all land in one group and that needs no validation
skips all of this and writes COMMITTED records directly in a single batch,
touching neither the coordinator nor a second phase.

Conflicts surface as ``ConflictAbort`` after the transaction has restored its
prepared records and recorded an ABORTED outcome. A record left PREPARED by a
dead transaction is resolved lazily at read time from the coordinator:
roll forward when the writer committed, roll back (or record the abort first)
when it did not.
"""

from __future__ import annotations

import enum
import queue
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Mapping

from .decoupling import DecoupleConfig, ReadPath, expand_writes, read_dispatch
from .errors import (
    ConflictAbort,
    JoinIntegrityError,
    RecoveryFailed,
    TransactionFinished,
)
from .grouping import group_by_atomicity_unit, group_per_record, one_phase_eligible
from .model import (
    BeforeImage,
    CoordinatorState,
    FullKey,
    GroupKey,
    Record,
    TransactionMetadata,
    TxOutcome,
    TxState,
    key_sort_key,
    value_tag,
)
from .records import (
    COL_STATE,
    check_application_columns,
    combined_columns,
    parse_metadata,
    split_columns,
)
from .storage import (
    ConditionalWrite,
    IF_NOT_EXISTS,
    StorageRegistry,
    WriteKind,
    if_tx_id_equals,
)

_RECOVERY_ATTEMPTS = 10

COORD_STATE_COLUMN = "tx_state"
COORD_CREATED_COLUMN = "created_at"


@dataclass(frozen=True)
class CoordinatorLocation:
    """Which table holds transaction outcome records."""

    storage: str
    namespace: str = "coordinator"
    table: str = "state"

    def key_for(self, tx_id: str) -> FullKey:
        return FullKey(self.storage, self.namespace, self.table, (tx_id,))


class TxStatus(enum.Enum):
    ACTIVE = "ACTIVE"
    COMMITTED = "COMMITTED"
    ABORTED = "ABORTED"


@dataclass(frozen=True)
class Observation:
    """What a read saw: the record (or its absence) and the route that read it."""

    app_columns: Mapping[str, object] | None
    meta: TransactionMetadata | None
    path: ReadPath

    @property
    def present(self) -> bool:
        return self.meta is not None


@dataclass
class BufferedWrite:
    kind: WriteKind
    columns: dict | None


@dataclass(frozen=True)
class _LogicalWrite:
    """A write-set entry resolved against its observed base version."""

    key: FullKey
    kind: WriteKind
    columns: Mapping[str, object] | None
    observed: Observation | None
    version: int

    @property
    def condition(self):
        if self.observed is not None and self.observed.present:
            return if_tx_id_equals(self.observed.meta.tx_id)
        return IF_NOT_EXISTS

    def before_image(self) -> BeforeImage | None:
        if self.observed is None or not self.observed.present:
            return None
        prior = replace(self.observed.meta, before_image=None)
        return BeforeImage(self.observed.app_columns, prior)


@dataclass(frozen=True)
class AttemptInfo:
    """What a commit attempt was about to write; kept for post-crash auditing."""

    tx_id: str
    writes: Mapping[str, int]  # rendered key -> intended version
    one_phase: bool


class TxHandle:
    """One transaction. Use from a single thread; the manager may be shared."""

    def __init__(self, manager: "TransactionManager", tx_id: str, serializable: bool, begin_at: int):
        self._manager = manager
        self.tx_id = tx_id
        self.serializable = serializable
        self.begin_at = begin_at
        self.status = TxStatus.ACTIVE
        self.read_set: dict[FullKey, Observation] = {}
        self.write_set: dict[FullKey, BufferedWrite] = {}
        self.attempt: AttemptInfo | None = None
        self._prepared_groups: list[list[_LogicalWrite]] = []

    def _check_active(self):
        if self.status is not TxStatus.ACTIVE:
            raise TransactionFinished(f"transaction {self.tx_id} is {self.status.value}")

    def get(self, key: FullKey) -> dict | None:
        return self._manager._get(self, key)

    def put(self, key: FullKey, columns: Mapping[str, object]) -> None:
        self._check_active()
        check_application_columns(columns)
        for value in columns.values():
            value_tag(value)
        self.write_set[key] = BufferedWrite(WriteKind.PUT, dict(columns))

    def delete(self, key: FullKey) -> None:
        self._check_active()
        self.write_set[key] = BufferedWrite(WriteKind.DELETE, None)

    def scan(self, prefix: GroupKey) -> list[tuple[FullKey, dict]]:
        return self._manager._scan(self, prefix)

    def commit(self) -> None:
        self._manager._commit(self)

    def abort(self) -> None:
        self._manager._abort(self)


class TransactionManager:
    """Shared entry point: hands out transactions and runs their pipelines."""

    def __init__(
        self,
        registry: StorageRegistry,
        coordinator: CoordinatorLocation,
        decoupling: DecoupleConfig | None = None,
        pushdown_enabled: bool = True,
        one_phase_enabled: bool = True,
        group_parallelism: int | None = None,
        async_commit_records: bool = False,
        commit_queue_size: int = 64,
        tx_id_factory: Callable[[], str] | None = None,
        history=None,
    ):
        registry.get_database(coordinator.storage)  # fail fast on bad location
        if decoupling is not None and decoupling.enabled:
            registry.metadata_locator = decoupling.metadata_key
        self.registry = registry
        self.coordinator = coordinator
        self.decoupling = decoupling if (decoupling and decoupling.enabled) else None
        self.pushdown_enabled = pushdown_enabled
        self.one_phase_enabled = one_phase_enabled
        self.group_parallelism = group_parallelism
        self.history = history
        self._tx_id_factory = tx_id_factory or (lambda: str(uuid.uuid4()))
        self._clock = 0
        self._clock_lock = threading.Lock()
        self._async = async_commit_records
        self._queue: queue.Queue | None = None
        if async_commit_records:
            self._queue = queue.Queue(maxsize=commit_queue_size)
            worker = threading.Thread(target=self._commit_record_worker, daemon=True)
            worker.start()

    def _tick(self) -> int:
        with self._clock_lock:
            self._clock += 1
            return self._clock

    # -- transaction surface -------------------------------------------------

    def begin(self, serializable: bool = False) -> TxHandle:
        return TxHandle(self, self._tx_id_factory(), serializable, self._tick())

    def _get(self, tx: TxHandle, key: FullKey) -> dict | None:
        tx._check_active()
        buffered = tx.write_set.get(key)
        if buffered is not None:
            return dict(buffered.columns) if buffered.kind is WriteKind.PUT else None
        cached = tx.read_set.get(key)
        if cached is None:
            cached = self._observe(key)
            tx.read_set[key] = cached
        return dict(cached.app_columns) if cached.present and not cached.meta.delete_marker else None

    def _scan(self, tx: TxHandle, prefix: GroupKey) -> list[tuple[FullKey, dict]]:
        """Partition scan; every returned record lands in the read set individually."""
        tx._check_active()
        for _ in range(_RECOVERY_ATTEMPTS):
            retry = False
            merged: dict[FullKey, dict] = {}
            for record in self.registry.scan(prefix):
                if self.decoupling is not None and self.decoupling.applies_to(record.key):
                    try:
                        obs = self._observe_raw(record.key)
                    except JoinIntegrityError:
                        retry = True
                        break
                else:
                    app_columns, meta_columns = split_columns(record.columns)
                    obs = Observation(app_columns, parse_metadata(meta_columns), ReadPath.COLOCATED)
                if obs.present and obs.meta.tx_state is TxState.PREPARED:
                    self._resolve_prepared(record.key, obs)
                    retry = True
                    break
                obs = tx.read_set.setdefault(record.key, obs)
                if obs.present and not obs.meta.delete_marker:
                    merged[record.key] = dict(obs.app_columns)
            if retry:
                continue
            # overlay this transaction's own buffered writes
            for key, buffered in tx.write_set.items():
                in_partition = (
                    key.storage == prefix.storage
                    and key.namespace == prefix.namespace
                    and key.table == prefix.table
                    and key.partition_key == prefix.partition_key
                )
                if not in_partition:
                    continue
                if buffered.kind is WriteKind.DELETE:
                    merged.pop(key, None)
                else:
                    merged[key] = dict(buffered.columns)
            return sorted(merged.items(), key=lambda item: key_sort_key(item[0].clustering_key))
        raise RecoveryFailed(f"scan of {prefix.render()} kept hitting in-doubt records")

    # -- reads and recovery ----------------------------------------------------

    def _observe_raw(self, key: FullKey) -> Observation:
        result = read_dispatch(self.registry, self.decoupling, key)
        return Observation(result.app_columns, result.meta, result.path)

    def _observe(self, key: FullKey) -> Observation:
        """Read a record, resolving any in-doubt state before returning it."""
        for _ in range(_RECOVERY_ATTEMPTS):
            try:
                obs = self._observe_raw(key)
            except JoinIntegrityError:
                # Transient under a concurrent split-row delete; read again.
                continue
            if obs.present and obs.meta.tx_state is TxState.PREPARED:
                self._resolve_prepared(key, obs)
                continue
            return obs
        raise RecoveryFailed(f"record {key.render()} kept reverting to in-doubt state")

    def recover(self, key: FullKey) -> Record | None:
        """Resolve a possibly in-doubt record and return its settled form."""
        obs = self._observe(key)
        if not obs.present or obs.meta.delete_marker:
            return None
        return Record(key, combined_columns(obs.app_columns, obs.meta))

    def _read_coordinator(self, tx_id: str) -> CoordinatorState | None:
        record = self.registry.read(self.coordinator.key_for(tx_id))
        if record is None:
            return None
        return CoordinatorState(
            tx_id,
            TxOutcome(record.columns[COORD_STATE_COLUMN]),
            record.columns[COORD_CREATED_COLUMN],
        )

    def _write_coordinator(self, tx_id: str, outcome: TxOutcome) -> int | None:
        """Write-once outcome record.

        Returns the outcome timestamp when this call created the record, or
        None when some record for the transaction already existed.
        """
        created_at = self._tick()
        write = ConditionalWrite(
            self.coordinator.key_for(tx_id),
            {COORD_STATE_COLUMN: outcome.value, COORD_CREATED_COLUMN: created_at},
            IF_NOT_EXISTS,
        )
        if self.registry.atomic_write([write]) is None:
            return created_at
        return None

    def _resolve_prepared(self, key: FullKey, obs: Observation) -> None:
        """Settle a record left PREPARED by another transaction."""
        meta = obs.meta
        state = self._read_coordinator(meta.tx_id)
        if state is None:
            # No outcome yet: claim the abort; the original committer's own
            # outcome write may still beat us, in which case adopt it.
            created_at = self._write_coordinator(meta.tx_id, TxOutcome.ABORTED)
            if created_at is not None:
                state = CoordinatorState(meta.tx_id, TxOutcome.ABORTED, created_at)
            else:
                state = self._read_coordinator(meta.tx_id)
        if state.state is TxOutcome.COMMITTED:
            self._roll_forward(key, obs, state.created_at)
        else:
            self._roll_back(key, obs)

    def _roll_forward(self, key: FullKey, obs: Observation, committed_at: int) -> None:
        meta = obs.meta
        condition = if_tx_id_equals(meta.tx_id)
        if meta.delete_marker:
            writes = [ConditionalWrite(key, {}, condition, WriteKind.DELETE)]
        else:
            settled = replace(
                meta, tx_state=TxState.COMMITTED, committed_at=committed_at, before_image=None
            )
            writes = [ConditionalWrite(key, combined_columns(obs.app_columns, settled), condition)]
        # A racing recovery may have settled it first; that is fine.
        self.registry.atomic_write(expand_writes(self.registry, self.decoupling, writes))

    def _roll_back(self, key: FullKey, obs: Observation) -> None:
        meta = obs.meta
        condition = if_tx_id_equals(meta.tx_id)
        before = meta.before_image
        if before is None:
            writes = [ConditionalWrite(key, {}, condition, WriteKind.DELETE)]
        else:
            writes = [
                ConditionalWrite(key, combined_columns(before.columns, before.metadata), condition)
            ]
        self.registry.atomic_write(expand_writes(self.registry, self.decoupling, writes))

    def recover_all_prepared(self) -> int:
        """Sweep every dumpable storage and settle all in-doubt records."""
        self.drain_commit_records()
        recovered = 0
        for adapter in self.registry.storages():
            dump = getattr(adapter, "dump", None)
            if dump is None:
                continue
            for record in dump():
                if record.columns.get(COL_STATE) != TxState.PREPARED.value:
                    continue
                key = record.key
                if self.decoupling is not None and key.table.endswith(
                    self.decoupling.meta_table_suffix
                ):
                    key = self.decoupling.application_key(key)
                obs = self._observe_raw(key)
                if obs.present and obs.meta.tx_state is TxState.PREPARED:
                    self._resolve_prepared(key, obs)
                    recovered += 1
        return recovered

    # -- commit pipeline -------------------------------------------------------

    def _materialize_writes(self, tx: TxHandle) -> list[_LogicalWrite]:
        logicals = []
        for key, buffered in tx.write_set.items():
            observed = tx.read_set.get(key)
            if observed is None:
                # Blind write: settle the base version now so the conditional
                # write and the before-image are well-defined.
                observed = self._observe(key)
                tx.read_set[key] = observed
            if buffered.kind is WriteKind.DELETE and not observed.present:
                continue  # deleting nothing is a no-op
            version = observed.meta.version + 1 if observed.present else 1
            logicals.append(
                _LogicalWrite(key, buffered.kind, buffered.columns, observed, version)
            )
        return logicals

    def _validation_plan(
        self, tx: TxHandle, written_keys: set[FullKey]
    ) -> list[tuple[FullKey, Observation]]:
        """Which observations a re-read must still cover.

        Keys this transaction writes are validated by their conditional writes.
        Serializable transactions re-read everything else; otherwise only
        split-table reads that were not self-consistent need a second look.
        """
        plan = []
        for key, obs in tx.read_set.items():
            if key in written_keys:
                continue
            if tx.serializable:
                plan.append((key, obs))
            elif self.decoupling is not None and obs.path is ReadPath.SPLIT_READS:
                plan.append((key, obs))
        return plan

    def _needs_validation_pass(self, tx: TxHandle) -> bool:
        return tx.serializable or self.decoupling is not None

    def _validate(self, tx: TxHandle, plan: list[tuple[FullKey, Observation]]) -> str | None:
        """Re-read observations; returns a mismatch description or None."""
        for key, obs in plan:
            try:
                current = self._observe_raw(key)
            except JoinIntegrityError:
                return f"{key.render()} was mid-removal during validation"
            if current.present != obs.present:
                return f"presence of {key.render()} changed"
            if not obs.present:
                continue
            if (current.meta.tx_id, current.meta.version) != (obs.meta.tx_id, obs.meta.version):
                return f"{key.render()} advanced past the observed version"
            split = obs.path is ReadPath.SPLIT_READS or current.path is ReadPath.SPLIT_READS
            if split and dict(current.app_columns) != dict(obs.app_columns):
                return f"{key.render()} was read torn"
        return None

    def _prepared_record(
        self, tx_id: str, logical: _LogicalWrite, prepared_at: int
    ) -> ConditionalWrite:
        meta = TransactionMetadata(
            tx_id=tx_id,
            version=logical.version,
            tx_state=TxState.PREPARED,
            prepared_at=prepared_at,
            before_image=logical.before_image(),
            delete_marker=logical.kind is WriteKind.DELETE,
        )
        columns = {} if logical.kind is WriteKind.DELETE else logical.columns
        return ConditionalWrite(logical.key, combined_columns(columns, meta), logical.condition)

    def _committed_record(
        self, tx_id: str, logical: _LogicalWrite, prepared_at: int, committed_at: int, condition
    ) -> ConditionalWrite:
        if logical.kind is WriteKind.DELETE:
            return ConditionalWrite(logical.key, {}, condition, WriteKind.DELETE)
        meta = TransactionMetadata(
            tx_id=tx_id,
            version=logical.version,
            tx_state=TxState.COMMITTED,
            prepared_at=prepared_at,
            committed_at=committed_at,
        )
        return ConditionalWrite(logical.key, combined_columns(logical.columns, meta), condition)

    def _write_groups(self, batches: list[list[ConditionalWrite]]) -> list[int | None]:
        """Issue one batch per group, possibly in parallel.

        A planned crash is re-raised as-is after all in-flight batches settle:
        whatever they left behind is the post-crash state.
        """
        physical = [expand_writes(self.registry, self.decoupling, b) for b in batches]
        width = self.group_parallelism or min(len(physical), 8)
        if len(physical) <= 1 or width <= 1:
            return [self.registry.atomic_write(batch) for batch in physical]
        outcomes: list = [None] * len(physical)
        with ThreadPoolExecutor(max_workers=min(width, len(physical))) as pool:
            futures = [pool.submit(self.registry.atomic_write, batch) for batch in physical]
            errors = []
            for i, future in enumerate(futures):
                try:
                    outcomes[i] = future.result()
                except Exception as exc:  # noqa: BLE001 - crashes must propagate
                    errors.append(exc)
            if errors:
                raise errors[0]
        return outcomes

    def _rollback_groups(self, tx_id: str, groups: list[list[_LogicalWrite]]) -> None:
        """Restore before-images of prepared records; losing a race is fine."""
        for group in groups:
            writes = []
            for logical in group:
                condition = if_tx_id_equals(tx_id)
                before = logical.before_image()
                if before is None:
                    writes.append(ConditionalWrite(logical.key, {}, condition, WriteKind.DELETE))
                else:
                    writes.append(
                        ConditionalWrite(
                            logical.key, combined_columns(before.columns, before.metadata), condition
                        )
                    )
            self.registry.atomic_write(expand_writes(self.registry, self.decoupling, writes))

    def _abort_with_state(self, tx: TxHandle, prepared: list[list[_LogicalWrite]], reason: str):
        # If this loses the write-once race, a lazy recovery recorded the
        # abort first; either way the outcome is settled before rollback.
        self._write_coordinator(tx.tx_id, TxOutcome.ABORTED)
        self._rollback_groups(tx.tx_id, prepared)
        tx._prepared_groups = []
        self._finish(tx, TxStatus.ABORTED)
        raise ConflictAbort(reason)

    def _finish(self, tx: TxHandle, status: TxStatus, commit_at: int | None = None):
        tx.status = status
        if self.history is not None:
            reads = tuple(
                (key.render(), obs.meta.version if obs.present else 0)
                for key, obs in tx.read_set.items()
            )
            writes = tuple(tx.attempt.writes.items()) if tx.attempt is not None else ()
            self.history.record(
                tx_id=tx.tx_id,
                outcome=status.value,
                begin_at=tx.begin_at,
                commit_at=commit_at,
                reads=reads,
                writes=writes,
                one_phase=bool(tx.attempt and tx.attempt.one_phase),
            )

    def _commit(self, tx: TxHandle) -> None:
        tx._check_active()
        self._commit_pipeline(tx)

    def _commit_pipeline(self, tx: TxHandle) -> None:
        logicals = self._materialize_writes(tx)
        written_keys = {logical.key for logical in logicals}
        plan = self._validation_plan(tx, written_keys)

        if not logicals:
            # Read-only: nothing to arbitrate, so no coordinator record.
            if self._needs_validation_pass(tx):
                mismatch = self._validate(tx, plan)
                if mismatch is not None:
                    self._finish(tx, TxStatus.ABORTED)
                    raise ConflictAbort(mismatch)
            self._finish(tx, TxStatus.COMMITTED, self._tick())
            return

        if self.pushdown_enabled:
            groups = group_by_atomicity_unit(self.registry, logicals)
        else:
            groups = group_per_record(logicals)
        group_list = list(groups.values())
        tx.attempt = AttemptInfo(
            tx_id=tx.tx_id,
            writes={logical.key.render(): logical.version for logical in logicals},
            one_phase=self.one_phase_enabled
            and one_phase_eligible(groups, tx.serializable, bool(plan)),
        )

        if tx.attempt.one_phase:
            ts = self._tick()
            batch = [
                self._committed_record(tx.tx_id, logical, ts, ts, logical.condition)
                for logical in group_list[0]
            ]
            failed = self.registry.atomic_write(
                expand_writes(self.registry, self.decoupling, batch)
            )
            if failed is not None:
                self._finish(tx, TxStatus.ABORTED)
                raise ConflictAbort("single-batch commit lost a conflict")
            self._finish(tx, TxStatus.COMMITTED, self._tick())
            return

        # Prepare phase: one conditional batch per group.
        prepared_at = self._tick()
        prepare_batches = [
            [self._prepared_record(tx.tx_id, logical, prepared_at) for logical in group]
            for group in group_list
        ]
        outcomes = self._write_groups(prepare_batches)
        tx._prepared_groups = [
            group for group, outcome in zip(group_list, outcomes) if outcome is None
        ]
        if any(outcome is not None for outcome in outcomes):
            self._abort_with_state(tx, tx._prepared_groups, "prepare lost a conflict")

        # Validate phase: re-read whatever the conditions above cannot cover.
        if self._needs_validation_pass(tx):
            mismatch = self._validate(tx, plan)
            if mismatch is not None:
                self._abort_with_state(tx, tx._prepared_groups, mismatch)

        # Commit point: the write-once outcome record.
        committed_at = self._write_coordinator(tx.tx_id, TxOutcome.COMMITTED)
        if committed_at is None:
            state = self._read_coordinator(tx.tx_id)
            if state.state is TxOutcome.ABORTED:
                self._abort_with_state(tx, tx._prepared_groups, "aborted by a lazy recovery")
            committed_at = state.created_at
        commit_at = self._tick()

        # Commit-record phase: flip each group to COMMITTED; may run behind
        # the queue. Losing the tx-id condition means a recovery or a later
        # writer got there first, which is fine.
        commit_batches = [
            [
                self._committed_record(
                    tx.tx_id, logical, prepared_at, committed_at, if_tx_id_equals(tx.tx_id)
                )
                for logical in group
            ]
            for group in group_list
        ]
        if self._queue is not None:
            self._queue.put(commit_batches)
        else:
            self._write_groups(commit_batches)
        tx._prepared_groups = []
        self._finish(tx, TxStatus.COMMITTED, commit_at)

    def _commit_record_worker(self):
        while True:
            batches = self._queue.get()
            try:
                self._write_groups(batches)
            except Exception:  # noqa: BLE001 - background completion is best-effort
                pass
            finally:
                self._queue.task_done()

    def drain_commit_records(self) -> None:
        """Block until every queued commit-record batch has been written."""
        if self._queue is not None:
            self._queue.join()

    def _abort(self, tx: TxHandle) -> None:
        if tx.status is TxStatus.ABORTED:
            return
        if tx.status is TxStatus.COMMITTED:
            raise TransactionFinished(f"transaction {tx.tx_id} already committed")
        if tx._prepared_groups:
            self._write_coordinator(tx.tx_id, TxOutcome.ABORTED)
            self._rollback_groups(tx.tx_id, tx._prepared_groups)
            tx._prepared_groups = []
        self._finish(tx, TxStatus.ABORTED)
