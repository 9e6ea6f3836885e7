#!/usr/bin/env python3
"""What happens when a committing process dies halfway through.

Records pass through a PREPARED state carrying the writer's id, the tentative
new version, and a rollback image. The coordinator table is the single source
of truth: its write-once outcome record decides, forever, whether a dead
transaction committed. Whoever stumbles over a PREPARED record later settles
it from that record: roll forward when the outcome says COMMITTED, roll back
(recording the abort first, if nobody had) otherwise.
"""

from fedtx import (
    AdapterCapabilities,
    AtomicityUnit,
    FaultKind,
    FullKey,
    InjectedCrash,
    MemStoreConfig,
    StorageRegistry,
    TransactionManager,
    build_memstore,
)
from fedtx.transaction import CoordinatorLocation


def fresh_env():
    registry = StorageRegistry()
    adapters = {}
    for name in ("users", "billing", "coord"):
        adapter = build_memstore(
            name, MemStoreConfig(AdapterCapabilities(AtomicityUnit.STORAGE))
        )
        registry.register(adapter)
        adapters[name] = adapter
    manager = TransactionManager(registry, CoordinatorLocation("coord"))
    seed = manager.begin()
    seed.put(key("users"), {"plan": "free"})
    seed.put(key("billing"), {"owed": 0})
    seed.commit()
    return manager, adapters


def key(storage):
    return FullKey(storage, "app", "accounts", ("alice",))


def crash_while_committing(manager, adapters, fault):
    victim = manager.begin()
    victim.put(key("users"), {"plan": "pro"})
    victim.put(key("billing"), {"owed": 20})
    adapters["coord"].inject_faults([(0, fault)])
    try:
        victim.commit()
    except InjectedCrash:
        pass
    adapters["coord"].clear_faults()


def show(manager, label):
    tx = manager.begin()
    users, billing = tx.get(key("users")), tx.get(key("billing"))
    print(f"{label}: users={users} billing={billing}")


print(__doc__)

print("-- crash BEFORE the outcome record was written --")
manager, adapters = fresh_env()
crash_while_committing(manager, adapters, FaultKind.CRASH_BEFORE_BATCH)
print("both stores now hold PREPARED records and the coordinator knows nothing;")
print("the next reader resolves them by recording the abort and rolling back")
show(manager, "after reading")

print("\n-- crash AFTER the outcome record was written --")
manager, adapters = fresh_env()
crash_while_committing(manager, adapters, FaultKind.CRASH_AFTER_BATCH)
print("the outcome record says COMMITTED, so readers roll the records forward")
show(manager, "after reading")

print("\n-- settling everything at once instead of lazily --")
manager, adapters = fresh_env()
crash_while_committing(manager, adapters, FaultKind.CRASH_AFTER_BATCH)
settled = manager.recover_all_prepared()
print(f"sweep settled {settled} in-doubt records")
show(manager, "after sweeping")
