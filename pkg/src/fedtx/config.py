"""Benchmark/registry configuration files.

Plain INI text. One ``[bench]`` section holds workload knobs, one
``[storage.NAME]`` section per storage declares its capabilities, and
``[coordinator]`` names where transaction outcomes live::

    [bench]
    workload = F
    ops_per_tx = 8
    record_count = 10000
    payload_bytes = 128
    threads = 1
    duration_ops = 1000
    seed = 42
    aup_enabled = true
    one_phase_enabled = true
    decoupling = NONE
    serializable = false

    [storage.db1]
    atomicity_unit = STORAGE
    consistent_readable = true
    view_joinable = true

    [coordinator]
    storage = coord
    namespace = coordinator
    table = state

The coordinator storage may name a declared storage or an extra one that is
created implicitly. ``record_count`` is per storage.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .bench import DecouplingMode, StorageSpec, WorkloadConfig
from .errors import ConfigError
from .model import AtomicityUnit
from .transaction import CoordinatorLocation


def _parse_unit(text: str) -> AtomicityUnit:
    try:
        return AtomicityUnit[text.strip().upper()]
    except KeyError:
        raise ConfigError(f"unknown atomicity unit {text!r}") from None


def _parse_mode(text: str) -> DecouplingMode:
    try:
        return DecouplingMode[text.strip().upper()]
    except KeyError:
        raise ConfigError(f"unknown decoupling mode {text!r}") from None


def parse_config(path: str | Path) -> WorkloadConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    storages = []
    for section in parser.sections():
        if not section.startswith("storage."):
            continue
        name = section[len("storage."):]
        sec = parser[section]
        try:
            storages.append(
                StorageSpec(
                    name=name,
                    atomicity_unit=_parse_unit(sec.get("atomicity_unit", "STORAGE")),
                    consistent_readable=sec.getboolean("consistent_readable", True),
                    view_joinable=sec.getboolean("view_joinable", True),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"bad value in [{section}]: {exc}") from exc
    if not storages:
        raise ConfigError("no [storage.NAME] sections found")

    coord_sec = parser["coordinator"] if parser.has_section("coordinator") else {}
    coordinator = CoordinatorLocation(
        storage=coord_sec.get("storage", "coord"),
        namespace=coord_sec.get("namespace", "coordinator"),
        table=coord_sec.get("table", "state"),
    )

    bench = parser["bench"] if parser.has_section("bench") else {}

    def _get(key, default):
        return bench.get(key, default) if bench else default

    def _getint(key, default):
        try:
            return int(_get(key, default))
        except ValueError as exc:
            raise ConfigError(f"bad integer for {key!r}") from exc

    def _getbool(key, default):
        raw = str(_get(key, default)).strip().lower()
        if raw in ("1", "true", "yes", "on"):
            return True
        if raw in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean for {key!r}: {raw!r}")

    return WorkloadConfig(
        workload=str(_get("workload", "F")).strip().upper(),
        ops_per_tx=_getint("ops_per_tx", 8),
        record_count=_getint("record_count", 10_000),
        payload_bytes=_getint("payload_bytes", 128),
        threads=_getint("threads", 1),
        duration_ops=_getint("duration_ops", 5_000),
        distribution=str(_get("distribution", "UNIFORM")).strip().upper(),
        seed=_getint("seed", 1),
        aup_enabled=_getbool("aup_enabled", True),
        one_phase_enabled=_getbool("one_phase_enabled", True),
        decoupling=_parse_mode(str(_get("decoupling", "NONE"))),
        serializable=_getbool("serializable", False),
        storages=tuple(sorted(storages, key=lambda s: s.name)),
        coordinator=coordinator,
        retry_limit=_getint("retry_limit", 100),
        label=str(_get("label", path.stem)),
    )
