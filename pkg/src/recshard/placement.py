"""Embedding-table placement: load-balanced shard assignment (LPT greedy and
an exhaustive oracle) plus the strategy-level planner that maps tables onto a
platform's memories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import hardware, model as model_mod
from .errors import ConfigError, InfeasibleError, TooLargeError

STRATEGY_GPU = "GpuMemory"
STRATEGY_HOST = "HostMemory"
STRATEGY_REMOTE = "RemotePS"
STRATEGY_HYBRID = "Hybrid"

PARTITION_TABLE = "TableWise"
PARTITION_ROW = "RowWise"

EXACT_MAX_TABLES = 12
EXACT_MAX_DEVICES = 4


@dataclass(frozen=True)
class PlacementStrategy:
    kind: str
    partition: str = PARTITION_TABLE
    num_servers: int = 1
    gpu_budget_fraction: float = 1.0

    def __post_init__(self):
        if self.kind not in (STRATEGY_GPU, STRATEGY_HOST, STRATEGY_REMOTE, STRATEGY_HYBRID):
            raise ConfigError(f"unknown placement strategy {self.kind!r}")
        if self.partition not in (PARTITION_TABLE, PARTITION_ROW):
            raise ConfigError(f"unknown partition {self.partition!r}")
        if self.kind == STRATEGY_REMOTE and self.num_servers < 1:
            raise ConfigError("RemotePS needs num_servers >= 1")
        if self.kind == STRATEGY_HYBRID and not 0.0 <= self.gpu_budget_fraction <= 1.0:
            raise ConfigError("gpu_budget_fraction must lie in [0, 1]")

    def label(self) -> str:
        if self.kind == STRATEGY_GPU:
            return f"{self.kind}/{self.partition}"
        if self.kind == STRATEGY_REMOTE:
            return f"{self.kind}:{self.num_servers}"
        if self.kind == STRATEGY_HYBRID:
            return f"{self.kind}:{self.gpu_budget_fraction:g}"
        return self.kind


def parse_strategy(text: str | dict) -> PlacementStrategy:
    """Parse 'GpuMemory/RowWise', 'RemotePS:8', 'Hybrid:0.5', 'HostMemory',
    or an equivalent mapping."""
    if isinstance(text, dict):
        return PlacementStrategy(
            kind=text.get("kind", STRATEGY_HOST),
            partition=text.get("partition", PARTITION_TABLE),
            num_servers=int(text.get("num_servers", 1)),
            gpu_budget_fraction=float(text.get("gpu_budget_fraction", 1.0)),
        )
    head, sep, tail = text.partition("/")
    if sep:
        return PlacementStrategy(kind=head, partition=tail)
    head, sep, tail = text.partition(":")
    if not sep:
        return PlacementStrategy(kind=head)
    if head == STRATEGY_REMOTE:
        return PlacementStrategy(kind=head, num_servers=int(tail))
    if head == STRATEGY_HYBRID:
        return PlacementStrategy(kind=head, gpu_budget_fraction=float(tail))
    raise ConfigError(f"cannot parse placement strategy {text!r}")


def strategy_to_doc(s: PlacementStrategy) -> dict:
    return {
        "kind": s.kind,
        "partition": s.partition,
        "num_servers": s.num_servers,
        "gpu_budget_fraction": s.gpu_budget_fraction,
    }


@dataclass(frozen=True)
class TableLoad:
    """Per-iteration placement weight of one table: size for capacity, load
    (bytes touched per iteration) for balance."""

    table_id: int
    size: int | float
    load: float


@dataclass(frozen=True)
class Shard:
    table_id: int
    row_begin: int
    row_end: int
    device_id: str


@dataclass(frozen=True)
class DeviceUsage:
    device_id: str
    bytes_used: float
    load: float


@dataclass(frozen=True)
class PlacementPlan:
    strategy: PlacementStrategy
    assignments: tuple[Shard, ...]
    device_usage: tuple[DeviceUsage, ...]

    def devices(self) -> list[str]:
        return [u.device_id for u in self.device_usage]


def table_loads(model: model_mod.ModelConfig) -> list[TableLoad]:
    """Capacity and balance weights for every table at the model's batch size."""
    loads = []
    for i, spec in enumerate(model.sparse):
        lookups = model_mod.lookups_per_iteration(spec, model.batch_size)
        loads.append(
            TableLoad(
                table_id=i,
                size=model_mod.table_size_bytes(spec),
                load=float(lookups * spec.embedding_dim * spec.bytes_per_element),
            )
        )
    return loads


# ---------------------------------------------------------------------------
# shard assignment


@dataclass
class ShardResult:
    assignment: dict[int, str]
    device_loads: dict[str, float]
    device_bytes: dict[str, float]
    makespan: float


def shard_tables_lpt(
    tables: list[TableLoad], devices: list[tuple[float, str]]
) -> ShardResult:
    """Longest-processing-time greedy with capacities.

    Tables are taken in descending load order (ties by table id) and each is
    put on the least-loaded device with enough remaining capacity (ties by
    device order). Raises InfeasibleError when a table fits nowhere.
    """
    if not devices:
        raise ConfigError("shard_tables_lpt needs at least one device")
    loads = {dev_id: 0.0 for _, dev_id in devices}
    used = {dev_id: 0.0 for _, dev_id in devices}
    remaining = {dev_id: float(cap) for cap, dev_id in devices}
    order = {dev_id: i for i, (_, dev_id) in enumerate(devices)}
    assignment: dict[int, str] = {}
    for t in sorted(tables, key=lambda t: (-t.load, t.table_id)):
        feasible = [d for d in loads if remaining[d] >= t.size]
        if not feasible:
            raise InfeasibleError(
                f"table {t.table_id} ({t.size} bytes) fits on no device",
                needed=t.size,
                available=max(remaining.values(), default=0.0),
            )
        target = min(feasible, key=lambda d: (loads[d], order[d]))
        assignment[t.table_id] = target
        loads[target] += t.load
        used[target] += float(t.size)
        remaining[target] -= float(t.size)
    return ShardResult(
        assignment=assignment,
        device_loads=loads,
        device_bytes=used,
        makespan=max(loads.values(), default=0.0),
    )


def shard_tables_exact(
    tables: list[TableLoad], devices: list[tuple[float, str]]
) -> ShardResult:
    """Exhaustive minimum-makespan assignment subject to capacities.

    Searches assignment vectors in lexicographic device order and keeps the
    first one achieving the optimal makespan. Bounded to small instances.
    """
    if len(tables) > EXACT_MAX_TABLES or len(devices) > EXACT_MAX_DEVICES:
        raise TooLargeError(
            f"exact search bounded to {EXACT_MAX_TABLES} tables and "
            f"{EXACT_MAX_DEVICES} devices, got {len(tables)}x{len(devices)}"
        )
    if not devices:
        raise ConfigError("shard_tables_exact needs at least one device")

    tables = sorted(tables, key=lambda t: t.table_id)
    n, m = len(tables), len(devices)
    caps = [float(cap) for cap, _ in devices]
    uniform_caps = all(c == math.inf for c in caps)

    # Seed the bound with LPT when it is feasible; any optimum is <= it.
    try:
        seed = shard_tables_lpt(tables, devices).makespan
    except InfeasibleError:
        seed = math.inf
    best_span = seed * (1 + 1e-12) + 1e-300 if seed < math.inf else math.inf
    best_vec: list[int] | None = None

    loads = [0.0] * m
    used = [0.0] * m
    vec = [0] * n
    suffix = [0.0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + tables[i].load

    def walk(i: int):
        nonlocal best_span, best_vec
        cur_max = max(loads)
        # Even a perfect split of what's left cannot beat the bound.
        if max(cur_max, (sum(loads) + suffix[i]) / m) >= best_span:
            return
        if i == n:
            if cur_max < best_span:
                best_span = cur_max
                best_vec = vec[:]
            return
        t = tables[i]
        seen_empty = False
        for d in range(m):
            if used[d] + t.size > caps[d]:
                continue
            if uniform_caps and loads[d] == 0.0 and used[d] == 0.0:
                # Identical empty devices are interchangeable; trying the
                # first keeps the lexicographically smallest optimum.
                if seen_empty:
                    continue
                seen_empty = True
            loads[d] += t.load
            used[d] += float(t.size)
            vec[i] = d
            walk(i + 1)
            loads[d] -= t.load
            used[d] -= float(t.size)
        return

    walk(0)
    if best_vec is None:
        raise InfeasibleError(
            "no assignment satisfies the capacity constraints",
            needed=float(sum(t.size for t in tables)),
            available=float(sum(c for c in caps if c < math.inf)),
        )
    assignment = {t.table_id: devices[best_vec[i]][1] for i, t in enumerate(tables)}
    out_loads = {dev_id: 0.0 for _, dev_id in devices}
    out_bytes = {dev_id: 0.0 for _, dev_id in devices}
    for i, t in enumerate(tables):
        out_loads[devices[best_vec[i]][1]] += t.load
        out_bytes[devices[best_vec[i]][1]] += float(t.size)
    return ShardResult(
        assignment=assignment,
        device_loads=out_loads,
        device_bytes=out_bytes,
        makespan=max(out_loads.values(), default=0.0),
    )


# ---------------------------------------------------------------------------
# strategy planner


def _whole_table_shards(
    result: ShardResult, model: model_mod.ModelConfig
) -> list[Shard]:
    return [
        Shard(table_id=i, row_begin=0, row_end=model.sparse[i].hash_size, device_id=dev)
        for i, dev in sorted(result.assignment.items())
    ]


def _plan_from_whole_tables(
    strategy: PlacementStrategy, result: ShardResult, model: model_mod.ModelConfig
) -> PlacementPlan:
    shards = _whole_table_shards(result, model)
    usage = tuple(
        DeviceUsage(device_id=d, bytes_used=result.device_bytes[d], load=result.device_loads[d])
        for d in sorted(result.device_bytes, key=_device_sort_key)
        if result.device_bytes[d] > 0 or result.device_loads[d] > 0
    )
    return PlacementPlan(strategy=strategy, assignments=tuple(shards), device_usage=usage)


def _device_sort_key(dev: str):
    kind = hardware.device_kind(dev)
    idx = hardware.device_index(dev) if ":" in dev else -1
    return (kind, idx)


def _gpu_devices(platform: hardware.PlatformSpec, count: int | None = None) -> list[tuple[float, str]]:
    gpus = platform.gpus if count is None else platform.gpus[:count]
    return [(float(g.mem_capacity), hardware.gpu_device(i)) for i, g in enumerate(gpus)]


def _min_prefix_lpt(
    tables: list[TableLoad],
    platform: hardware.PlatformSpec,
    budget_fraction: float = 1.0,
) -> ShardResult:
    """LPT over the smallest prefix of GPUs whose capacity admits the tables.

    Tables spread onto additional GPUs only when capacity forces them to,
    which is what makes growing tables pay growing exchange costs.
    """
    if not platform.gpus:
        raise ConfigError(f"platform {platform.name} has no GPUs")
    last_err: InfeasibleError | None = None
    for k in range(1, len(platform.gpus) + 1):
        devices = [
            (float(g.mem_capacity) * budget_fraction, hardware.gpu_device(i))
            for i, g in enumerate(platform.gpus[:k])
        ]
        try:
            return shard_tables_lpt(tables, devices)
        except InfeasibleError as err:
            last_err = err
    total = sum(t.size for t in tables)
    cap = hardware.aggregate(platform, hardware.GPU_MEM) * budget_fraction
    raise InfeasibleError(
        f"{total} bytes of tables exceed {cap:.3e} bytes of GPU memory",
        needed=total,
        available=cap,
    ) from last_err


def plan_placement(
    model: model_mod.ModelConfig,
    platform: hardware.PlatformSpec,
    strategy: PlacementStrategy,
) -> PlacementPlan:
    """Map every embedding table onto the platform per the strategy."""
    loads = table_loads(model)
    total = sum(t.size for t in loads)

    if strategy.kind == STRATEGY_HOST:
        cap = hardware.aggregate(platform, hardware.HOST_MEM)
        if total > cap:
            raise InfeasibleError(
                f"{total} bytes of tables exceed {int(cap)} bytes of host memory",
                needed=total,
                available=cap,
            )
        shards = [
            Shard(i, 0, model.sparse[i].hash_size, hardware.HOST_DEVICE)
            for i in range(len(model.sparse))
        ]
        usage = (
            DeviceUsage(hardware.HOST_DEVICE, float(total), sum(t.load for t in loads)),
        ) if loads else ()
        return PlacementPlan(strategy, tuple(shards), usage)

    if strategy.kind == STRATEGY_REMOTE:
        per_server = hardware.aggregate(hardware.platform_preset("CPU"), hardware.HOST_MEM)
        devices = [(per_server, hardware.ps_device(i)) for i in range(strategy.num_servers)]
        return _plan_from_whole_tables(strategy, shard_tables_lpt(loads, devices), model)

    if strategy.kind == STRATEGY_GPU:
        if not platform.gpus:
            raise ConfigError(f"strategy {strategy.label()} needs GPUs, none on {platform.name}")
        if strategy.partition == PARTITION_TABLE:
            return _plan_from_whole_tables(strategy, _min_prefix_lpt(loads, platform), model)
        return _row_wise_plan(strategy, model, platform, loads)

    # Hybrid: admit tables into a GPU-memory budget, hot tables first,
    # remainder to host memory.
    if not platform.gpus:
        raise ConfigError(f"strategy {strategy.label()} needs GPUs, none on {platform.name}")
    order = sorted(loads, key=lambda t: (-(t.load / t.size if t.size else math.inf), t.table_id))
    admitted: list[TableLoad] = []
    spill: list[TableLoad] = []
    result: ShardResult | None = None
    for t in order:
        if strategy.gpu_budget_fraction <= 0.0:
            spill.append(t)
            continue
        try:
            candidate = _min_prefix_lpt(admitted + [t], platform, strategy.gpu_budget_fraction)
        except InfeasibleError:
            spill.append(t)
            continue
        admitted.append(t)
        result = candidate
    shards: list[Shard] = []
    if result is not None:
        shards.extend(_whole_table_shards(result, model))
    host_bytes = sum(t.size for t in spill)
    host_cap = hardware.aggregate(platform, hardware.HOST_MEM)
    if host_bytes > host_cap:
        raise InfeasibleError(
            f"{host_bytes} spilled bytes exceed {int(host_cap)} bytes of host memory",
            needed=host_bytes,
            available=host_cap,
        )
    for t in sorted(spill, key=lambda t: t.table_id):
        shards.append(Shard(t.table_id, 0, model.sparse[t.table_id].hash_size, hardware.HOST_DEVICE))
    shards.sort(key=lambda s: (s.table_id, s.row_begin))
    usage: dict[str, list[float]] = {}
    for t in admitted:
        dev = result.assignment[t.table_id]  # type: ignore[union-attr]
        acc = usage.setdefault(dev, [0.0, 0.0])
        acc[0] += float(t.size)
        acc[1] += t.load
    if spill:
        usage[hardware.HOST_DEVICE] = [float(host_bytes), sum(t.load for t in spill)]
    usage_t = tuple(
        DeviceUsage(d, v[0], v[1]) for d, v in sorted(usage.items(), key=lambda kv: _device_sort_key(kv[0]))
    )
    return PlacementPlan(strategy, tuple(shards), usage_t)


def _row_wise_plan(
    strategy: PlacementStrategy,
    model: model_mod.ModelConfig,
    platform: hardware.PlatformSpec,
    loads: list[TableLoad],
) -> PlacementPlan:
    """Split every table evenly across all GPUs; leftovers go to low indices."""
    n_gpu = len(platform.gpus)
    shards: list[Shard] = []
    usage = {hardware.gpu_device(g): [0.0, 0.0] for g in range(n_gpu)}
    for t in loads:
        rows = model.sparse[t.table_id].hash_size
        base, rem = divmod(rows, n_gpu)
        begin = 0
        for g in range(n_gpu):
            span = base + (1 if g < rem else 0)
            if span == 0:
                continue
            dev = hardware.gpu_device(g)
            shards.append(Shard(t.table_id, begin, begin + span, dev))
            frac = span / rows
            usage[dev][0] += t.size * frac
            usage[dev][1] += t.load * frac
            begin += span
    for g, gpu in enumerate(platform.gpus):
        if usage[hardware.gpu_device(g)][0] > gpu.mem_capacity:
            raise InfeasibleError(
                f"row-wise shards overflow gpu:{g}",
                needed=usage[hardware.gpu_device(g)][0],
                available=float(gpu.mem_capacity),
            )
    usage_t = tuple(
        DeviceUsage(d, v[0], v[1])
        for d, v in sorted(usage.items(), key=lambda kv: _device_sort_key(kv[0]))
        if v[0] > 0
    )
    return PlacementPlan(strategy, tuple(shards), usage_t)


# ---------------------------------------------------------------------------
# validation and serialization


def validate_plan(
    plan: PlacementPlan,
    model: model_mod.ModelConfig,
    platform: hardware.PlatformSpec,
) -> list[str]:
    """Return human-readable violations; an empty list means the plan holds."""
    violations: list[str] = []
    by_table: dict[int, list[Shard]] = {}
    for s in plan.assignments:
        by_table.setdefault(s.table_id, []).append(s)
        try:
            kind = hardware.device_kind(s.device_id)
        except ConfigError:
            violations.append(f"table {s.table_id}: unknown device {s.device_id!r}")
            continue
        if kind == "gpu" and hardware.device_index(s.device_id) >= len(platform.gpus):
            violations.append(f"table {s.table_id}: {s.device_id} does not exist on {platform.name}")
        if kind == "ps" and plan.strategy.kind != STRATEGY_REMOTE:
            violations.append(f"table {s.table_id}: parameter-server device under {plan.strategy.label()}")
        if kind == "ps" and hardware.device_index(s.device_id) >= plan.strategy.num_servers:
            violations.append(f"table {s.table_id}: {s.device_id} outside the {plan.strategy.num_servers} configured servers")
    for i, spec in enumerate(model.sparse):
        shards = sorted(by_table.get(i, []), key=lambda s: s.row_begin)
        if not shards:
            violations.append(f"table {i}: not placed")
            continue
        cursor = 0
        for s in shards:
            if s.row_begin != cursor:
                violations.append(f"table {i}: rows [{cursor}, {s.row_begin}) uncovered or overlapping")
                break
            if s.row_end <= s.row_begin:
                violations.append(f"table {i}: empty shard [{s.row_begin}, {s.row_end})")
                break
            cursor = s.row_end
        else:
            if cursor != spec.hash_size:
                violations.append(f"table {i}: rows [{cursor}, {spec.hash_size}) uncovered")
    capacities: dict[str, float] = {hardware.HOST_DEVICE: hardware.aggregate(platform, hardware.HOST_MEM)}
    for g, gpu in enumerate(platform.gpus):
        capacities[hardware.gpu_device(g)] = float(gpu.mem_capacity)
    if plan.strategy.kind == STRATEGY_REMOTE:
        per_server = hardware.aggregate(hardware.platform_preset("CPU"), hardware.HOST_MEM)
        for i in range(plan.strategy.num_servers):
            capacities[hardware.ps_device(i)] = per_server
    used: dict[str, int] = {}
    for s in plan.assignments:
        spec = model.sparse[s.table_id]
        used[s.device_id] = used.get(s.device_id, 0) + (
            (s.row_end - s.row_begin) * spec.embedding_dim * spec.bytes_per_element
        )
    for dev, total in sorted(used.items()):
        cap = capacities.get(dev)
        if cap is not None and total > cap:
            violations.append(f"{dev}: {total} bytes exceed capacity {int(cap)}")
    return violations


def plan_to_doc(plan: PlacementPlan) -> dict:
    return {
        "strategy": plan.strategy.label(),
        "assignments": [
            {"table": s.table_id, "rows": [s.row_begin, s.row_end], "device": s.device_id}
            for s in plan.assignments
        ],
        "device_usage": [
            {"device": u.device_id, "bytes": u.bytes_used, "load": u.load}
            for u in plan.device_usage
        ],
    }
