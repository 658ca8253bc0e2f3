"""Distributed-training roll-up: scales the single-trainer cost model to a
topology of trainers, parameter servers, and readers, with synchronization
cost and an asynchronous-update compute multiplier."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from . import costmodel, hardware, model as model_mod, placement
from .errors import ConfigError, InvalidTopologyError

SYNC_EASGD = "EASGD"
SYNC_FULLY = "FullySync"

PS_POWER_UNITS = 1.0  # one CPU-class server per parameter-server role


@dataclass(frozen=True)
class SyncConfig:
    method: str = SYNC_EASGD
    period: int = 16
    hogwild_threads: int = 1
    scaling_penalty: float = 0.02

    def __post_init__(self):
        if self.method not in (SYNC_EASGD, SYNC_FULLY):
            raise ConfigError(f"unknown sync method {self.method!r}")
        if self.period < 1:
            raise ConfigError("sync period must be >= 1")
        if self.hogwild_threads < 1:
            raise ConfigError("hogwild_threads must be >= 1")
        if self.scaling_penalty < 0:
            raise ConfigError("scaling_penalty must be >= 0")

    @property
    def effective_period(self) -> float:
        return 1.0 if self.method == SYNC_FULLY else float(self.period)


@dataclass(frozen=True)
class ClusterTopology:
    num_trainers: int = 1
    num_dense_ps: int = 0
    num_sparse_ps: int = 0
    num_readers: int = 0
    sync: SyncConfig = SyncConfig()

    def __post_init__(self):
        if self.num_trainers < 1:
            raise InvalidTopologyError("a cluster needs at least one trainer")
        for name in ("num_dense_ps", "num_sparse_ps", "num_readers"):
            if getattr(self, name) < 0:
                raise InvalidTopologyError(f"{name} must be >= 0")


SINGLE_TRAINER = ClusterTopology()


@dataclass(frozen=True)
class TrainingScenario:
    """A complete runnable configuration: what trains where, and how."""

    name: str
    model: model_mod.ModelConfig
    platform: hardware.PlatformSpec
    strategy: placement.PlacementStrategy
    topology: ClusterTopology = SINGLE_TRAINER
    ingest_bandwidth: float = math.inf


def _check_topology(strategy: placement.PlacementStrategy, topo: ClusterTopology):
    if strategy.kind == placement.STRATEGY_REMOTE:
        if topo.num_sparse_ps < 1:
            raise InvalidTopologyError("RemotePS placement needs num_sparse_ps >= 1")
        if strategy.num_servers > topo.num_sparse_ps:
            raise InvalidTopologyError(
                f"placement spans {strategy.num_servers} servers but the "
                f"topology provisions only {topo.num_sparse_ps}"
            )


def speedup(num_trainers: int, scaling_penalty: float) -> float:
    """Sublinear trainer scaling: N / (1 + sigma * (N - 1))."""
    return num_trainers / (1.0 + scaling_penalty * (num_trainers - 1))


def cluster_power_units(
    platform: hardware.PlatformSpec, topo: ClusterTopology
) -> float:
    """Trainers plus parameter servers; readers draw from a shared pool and
    are excluded."""
    if platform.power_units is None:
        return math.nan
    return (
        topo.num_trainers * platform.power_units
        + (topo.num_dense_ps + topo.num_sparse_ps) * PS_POWER_UNITS
    )


def cluster_throughput(
    model: model_mod.ModelConfig,
    platform: hardware.PlatformSpec,
    plan: placement.PlacementPlan,
    topo: ClusterTopology,
    coeffs: costmodel.CalibrationCoefficients = costmodel.DEFAULT_COEFFICIENTS,
    *,
    ingest_bandwidth: float = math.inf,
) -> costmodel.CostBreakdown:
    """Cluster-level breakdown: per-trainer stages and utilization, with
    throughput and power scaled across the topology.

    Parameter servers run on CPU-class hosts regardless of the trainer
    platform. Dense gradients are exchanged only when there is a peer to
    exchange them with (more than one trainer, or a dense parameter server).
    """
    _check_topology(plan.strategy, topo)
    sync_period = None
    if topo.num_trainers > 1 or topo.num_dense_ps > 0:
        sync_period = topo.sync.effective_period
    multiplier = float(min(topo.sync.hogwild_threads, platform.total_cores))
    single = costmodel.evaluate(
        model,
        platform,
        plan,
        coeffs,
        sync_period=sync_period,
        ingest_bandwidth=ingest_bandwidth,
        cpu_compute_multiplier=multiplier,
    )
    total_thr = single.throughput * speedup(topo.num_trainers, topo.sync.scaling_penalty)
    power = cluster_power_units(platform, topo)
    if math.isnan(power):
        eff = math.nan
    else:
        total_thr, eff = costmodel._power_split(total_thr, power)
    return costmodel.CostBreakdown(
        stages=single.stages,
        iteration_time=single.iteration_time,
        throughput=total_thr,
        power_units=power,
        power_efficiency=eff,
        utilization=single.utilization,
        batch_size=model.batch_size,
    )


def scenario_breakdown(
    scenario: TrainingScenario,
    coeffs: costmodel.CalibrationCoefficients = costmodel.DEFAULT_COEFFICIENTS,
) -> costmodel.CostBreakdown:
    plan = placement.plan_placement(scenario.model, scenario.platform, scenario.strategy)
    return cluster_throughput(
        scenario.model,
        scenario.platform,
        plan,
        scenario.topology,
        coeffs,
        ingest_bandwidth=scenario.ingest_bandwidth,
    )


def scenario_throughput(
    scenario: TrainingScenario,
    coeffs: costmodel.CalibrationCoefficients = costmodel.DEFAULT_COEFFICIENTS,
) -> float:
    return scenario_breakdown(scenario, coeffs).throughput


# ---------------------------------------------------------------------------
# parameter-server load inspection


@dataclass(frozen=True)
class PsLoad:
    server: str
    bytes_touched: float
    load_fraction: float
    nic_seconds: float


def ps_utilization(
    model: model_mod.ModelConfig,
    plan: placement.PlacementPlan,
    topo: ClusterTopology = SINGLE_TRAINER,
) -> list[PsLoad]:
    """Per-server relative load and NIC busy time for a RemotePS plan."""
    if plan.strategy.kind != placement.STRATEGY_REMOTE:
        raise ConfigError("ps_utilization applies to RemotePS placements only")
    _check_topology(plan.strategy, dataclasses.replace(
        topo, num_sparse_ps=max(topo.num_sparse_ps, plan.strategy.num_servers)
    ))
    nic = hardware.platform_preset("CPU").nic
    touched = {hardware.ps_device(i): 0.0 for i in range(plan.strategy.num_servers)}
    for shard in plan.assignments:
        if hardware.device_kind(shard.device_id) != "ps":
            continue
        spec = model.sparse[shard.table_id]
        frac = (shard.row_end - shard.row_begin) / spec.hash_size
        lookups = model_mod.lookups_per_iteration(spec, model.batch_size) * frac
        touched[shard.device_id] += lookups * spec.embedding_dim * spec.bytes_per_element
    peak = max(touched.values(), default=0.0)
    out = []
    for i in range(plan.strategy.num_servers):
        dev = hardware.ps_device(i)
        nbytes = touched[dev]
        out.append(
            PsLoad(
                server=dev,
                bytes_touched=nbytes,
                load_fraction=nbytes / peak if peak > 0 else 0.0,
                nic_seconds=2.0 * nbytes / nic.bandwidth,
            )
        )
    return out


# ---------------------------------------------------------------------------
# population sampling


def sample_population_utilization(
    pop_params: model_mod.SynthPopulationParams,
    platform: hardware.PlatformSpec,
    topo: ClusterTopology,
    runs: int,
    seed: int = 0,
) -> list[dict]:
    """Utilization samples across a synthetic model population.

    Placement follows the topology: RemotePS across the provisioned sparse
    servers when there are any, host memory otherwise. Samples whose tables
    exceed capacity are omitted; sample ids keep the draw index either way.
    """
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    if topo.num_sparse_ps > 0:
        strategy = placement.PlacementStrategy(
            kind=placement.STRATEGY_REMOTE, num_servers=topo.num_sparse_ps
        )
    else:
        strategy = placement.PlacementStrategy(kind=placement.STRATEGY_HOST)
    rows = []
    for i in range(runs):
        params = dataclasses.replace(pop_params, seed=seed + i)
        model = model_mod.generate_synthetic_model(params)
        try:
            plan = placement.plan_placement(model, platform, strategy)
            breakdown = cluster_throughput(model, platform, plan, topo)
        except placement.InfeasibleError:
            continue
        rows.append(
            {
                "sample_id": i,
                "cpu": breakdown.utilization["cpu"],
                "host_bw": breakdown.utilization["host_bw"],
                "gpu_bw": breakdown.utilization["gpu_bw"],
                "nic": breakdown.utilization["nic"],
            }
        )
    return rows


def utilization_samples_to_csv(rows: list[dict]) -> str:
    lines = ["sample_id,cpu,host_bw,nic"]
    for row in rows:
        lines.append(
            f"{row['sample_id']},{row['cpu']!r},{row['host_bw']!r},{row['nic']!r}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# serialization


def sync_to_doc(sync: SyncConfig) -> dict:
    return {
        "method": sync.method,
        "period": sync.period,
        "hogwild": sync.hogwild_threads,
        "sigma": sync.scaling_penalty,
    }


def sync_from_doc(doc: dict) -> SyncConfig:
    if not isinstance(doc, dict):
        raise ConfigError("sync must be an object")
    try:
        return SyncConfig(
            method=doc.get("method", SYNC_EASGD),
            period=int(doc.get("period", 16)),
            hogwild_threads=int(doc.get("hogwild", 1)),
            scaling_penalty=float(doc.get("sigma", 0.02)),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad sync config: {err}") from err


def topology_to_doc(topo: ClusterTopology) -> dict:
    return {
        "trainers": topo.num_trainers,
        "dense_ps": topo.num_dense_ps,
        "sparse_ps": topo.num_sparse_ps,
        "readers": topo.num_readers,
        "sync": sync_to_doc(topo.sync),
    }


def topology_from_doc(doc: dict) -> ClusterTopology:
    if not isinstance(doc, dict):
        raise ConfigError("topology must be an object")
    try:
        return ClusterTopology(
            num_trainers=int(doc.get("trainers", 1)),
            num_dense_ps=int(doc.get("dense_ps", 0)),
            num_sparse_ps=int(doc.get("sparse_ps", 0)),
            num_readers=int(doc.get("readers", 0)),
            sync=sync_from_doc(doc.get("sync", {})),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad topology: {err}") from err


# ---------------------------------------------------------------------------
# reference cluster configurations for the shipped model presets


def production_comparison_scenarios() -> dict[str, dict[str, TrainingScenario]]:
    """Paired CPU-cluster and GPU-trainer configurations for M1/M2/M3.

    The CPU side trains asynchronously across a parameter-server fleet at a
    small per-trainer batch; the GPU side is a single accelerated trainer
    (with remote sparse servers where the tables demand it).
    """
    cpu = hardware.platform_preset("CPU")
    big = hardware.platform_preset("BigBasin32")
    easgd = lambda h: SyncConfig(method=SYNC_EASGD, period=16, hogwild_threads=h)
    fully = SyncConfig(method=SYNC_FULLY)
    cpu_setups = {
        "M1": (6, 1, 7, 1),   # trainers, dense ps, sparse ps, hogwild threads
        "M2": (20, 2, 14, 1),
        "M3": (8, 1, 7, 4),
    }
    gpu_strategies = {
        "M1": placement.PlacementStrategy(kind=placement.STRATEGY_GPU),
        "M2": placement.PlacementStrategy(kind=placement.STRATEGY_GPU),
        "M3": placement.PlacementStrategy(
            kind=placement.STRATEGY_REMOTE, num_servers=8
        ),
    }
    gpu_sparse_ps = {"M1": 0, "M2": 0, "M3": 8}
    out: dict[str, dict[str, TrainingScenario]] = {}
    for name in model_mod.MODEL_PRESET_NAMES:
        preset = model_mod.production_preset(name)
        trainers, dense_ps, sparse_ps, hogwild = cpu_setups[name]
        cpu_scenario = TrainingScenario(
            name=f"{name}-cpu",
            model=model_mod.with_batch_size(preset, 200),
            platform=cpu,
            strategy=placement.PlacementStrategy(
                kind=placement.STRATEGY_REMOTE, num_servers=sparse_ps
            ),
            topology=ClusterTopology(
                num_trainers=trainers,
                num_dense_ps=dense_ps,
                num_sparse_ps=sparse_ps,
                sync=easgd(hogwild),
            ),
        )
        gpu_scenario = TrainingScenario(
            name=f"{name}-gpu",
            model=preset,
            platform=big,
            strategy=gpu_strategies[name],
            topology=ClusterTopology(
                num_trainers=1,
                num_dense_ps=1,
                num_sparse_ps=gpu_sparse_ps[name],
                sync=fully,
            ),
        )
        out[name] = {"cpu": cpu_scenario, "gpu": gpu_scenario}
    return out
