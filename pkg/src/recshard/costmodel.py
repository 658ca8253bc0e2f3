"""Per-iteration cost model: stage times for one trainer under a model,
platform, and placement plan, rolled up into throughput, power efficiency,
and resource utilization. Also hosts coefficient calibration."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

from . import hardware, model as model_mod, placement
from .errors import ConfigError

STAGE_ORDER = (
    "data_read",
    "emb_forward",
    "emb_backward",
    "comm_alltoall",
    "comm_ps",
    "host_device_copy",
    "dense_forward",
    "dense_backward",
    "interaction",
    "dense_sync",
)

RESOURCES = ("cpu", "host_bw", "gpu_bw", "nic")

CSV_COLUMNS = (
    "scenario_id",
    *STAGE_ORDER,
    "iteration_s",
    "throughput",
    "power_eff",
    "util_cpu",
    "util_host_bw",
    "util_gpu_bw",
    "util_nic",
)


@dataclass(frozen=True)
class CalibrationCoefficients:
    """Knobs mapping peak hardware numbers onto achieved performance."""

    compute_efficiency: float = 0.5
    overlap: float = 0.0
    backward_ratio_dense: float = 2.0
    backward_ratio_emb: float = 2.0
    host_processing_cost: float = 0.0
    per_op_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.compute_efficiency <= 1.0:
            raise ConfigError("compute_efficiency must lie in (0, 1]")
        if not 0.0 <= self.overlap <= 1.0:
            raise ConfigError("overlap must lie in [0, 1]")
        for name in ("backward_ratio_dense", "backward_ratio_emb",
                     "host_processing_cost", "per_op_scale"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


DEFAULT_COEFFICIENTS = CalibrationCoefficients()


def coefficients_to_doc(c: CalibrationCoefficients) -> dict:
    return {
        "compute_efficiency": c.compute_efficiency,
        "overlap": c.overlap,
        "backward_ratio_dense": c.backward_ratio_dense,
        "backward_ratio_emb": c.backward_ratio_emb,
        "host_processing_cost": c.host_processing_cost,
        "per_op_scale": c.per_op_scale,
    }


def coefficients_from_doc(doc: dict) -> CalibrationCoefficients:
    if not isinstance(doc, dict):
        raise ConfigError("coefficients must be an object")
    known = coefficients_to_doc(DEFAULT_COEFFICIENTS)
    unknown = set(doc) - set(known)
    if unknown:
        raise ConfigError(f"unknown coefficient fields: {sorted(unknown)}")
    try:
        return CalibrationCoefficients(**{k: float(v) for k, v in doc.items()})
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad coefficients: {err}") from err


def calibrated_coefficients() -> CalibrationCoefficients:
    """The shipped coefficient set, fitted to the M1 reference ratio."""
    import json
    from importlib import resources

    try:
        raw = resources.files("recshard.presets").joinpath("calibration.json").read_text()
    except FileNotFoundError as err:
        raise ConfigError("no shipped calibration found") from err
    return coefficients_from_doc(json.loads(raw))


@dataclass(frozen=True)
class CostBreakdown:
    stages: dict[str, float]
    iteration_time: float
    throughput: float
    power_units: float
    power_efficiency: float
    utilization: dict[str, float]
    batch_size: int


# ---------------------------------------------------------------------------
# stage times


def _device_channel(dev: str, platform: hardware.PlatformSpec):
    """Memory channel an embedding shard is served from: (resource,
    bandwidth, per-lookup overhead, parallel units)."""
    kind = hardware.device_kind(dev)
    if kind == "gpu":
        idx = hardware.device_index(dev)
        if idx >= len(platform.gpus):
            raise ConfigError(f"platform {platform.name} has no device {dev}")
        g = platform.gpus[idx]
        return ("gpu_bw", float(g.mem_bandwidth), g.per_lookup_overhead, 1)
    if kind == "ps":
        ps = hardware.platform_preset("CPU")
        return (
            "host_bw",
            hardware.aggregate(ps, hardware.HOST_BW),
            ps.cpu_sockets[0].per_lookup_overhead,
            len(ps.cpu_sockets),
        )
    return (
        "host_bw",
        hardware.aggregate(platform, hardware.HOST_BW),
        platform.cpu_sockets[0].per_lookup_overhead,
        len(platform.cpu_sockets),
    )


@dataclass
class _Components:
    stages: dict[str, float]
    busy: dict[str, float]


def _components(
    model: model_mod.ModelConfig,
    platform: hardware.PlatformSpec,
    plan: placement.PlacementPlan,
    coeffs: CalibrationCoefficients,
    sync_period: float | None,
    ingest_bandwidth: float,
    cpu_compute_multiplier: float,
) -> _Components:
    stages = {name: 0.0 for name in STAGE_ORDER}
    busy = {name: 0.0 for name in RESOURCES}
    batch = model.batch_size
    rho = coeffs.backward_ratio_emb

    # Embedding lookups, grouped by serving device. Devices run in parallel,
    # so the stage is the slowest device; GPU and host windows are tracked
    # separately for utilization attribution.
    dev_bytes: dict[str, float] = {}
    dev_lookups: dict[str, float] = {}
    gpu_frac: dict[int, dict[int, float]] = {}
    host_frac: dict[int, float] = {}
    remote_bytes = 0.0
    for shard in plan.assignments:
        spec = model.sparse[shard.table_id]
        frac = (shard.row_end - shard.row_begin) / spec.hash_size
        lookups = model_mod.lookups_per_iteration(spec, batch) * frac
        nbytes = lookups * spec.embedding_dim * spec.bytes_per_element
        dev_bytes[shard.device_id] = dev_bytes.get(shard.device_id, 0.0) + nbytes
        dev_lookups[shard.device_id] = dev_lookups.get(shard.device_id, 0.0) + lookups
        kind = hardware.device_kind(shard.device_id)
        if kind == "gpu":
            g = hardware.device_index(shard.device_id)
            gpu_frac.setdefault(shard.table_id, {})
            gpu_frac[shard.table_id][g] = gpu_frac[shard.table_id].get(g, 0.0) + frac
        elif kind == "ps":
            remote_bytes += nbytes
        else:
            host_frac[shard.table_id] = host_frac.get(shard.table_id, 0.0) + frac

    emb_gpu_f = emb_host_f = emb_gpu_b = emb_host_b = 0.0
    for dev, nbytes in dev_bytes.items():
        resource, bw, per_lookup, units = _device_channel(dev, platform)
        if bw <= 0:
            raise ConfigError(f"device {dev} has no memory bandwidth")
        overhead = dev_lookups[dev] * per_lookup / units
        fwd = nbytes / bw + overhead
        bwd = rho * nbytes / bw + overhead
        if resource == "gpu_bw":
            emb_gpu_f = max(emb_gpu_f, fwd)
            emb_gpu_b = max(emb_gpu_b, bwd)
        else:
            emb_host_f = max(emb_host_f, fwd)
            emb_host_b = max(emb_host_b, bwd)
    stages["emb_forward"] = max(emb_gpu_f, emb_host_f)
    stages["emb_backward"] = max(emb_gpu_b, emb_host_b)
    busy["gpu_bw"] += emb_gpu_f + emb_gpu_b
    busy["host_bw"] += emb_host_f + emb_host_b

    # Pooled-output all-to-all among the GPUs that hold shards. Each owner
    # pulls the portions of every table that live on other GPUs.
    owners = sorted({g for fr in gpu_frac.values() for g in fr})
    if len(owners) >= 2:
        link = hardware.effective_link(
            platform, hardware.gpu_device(owners[0]), hardware.gpu_device(owners[1])
        )
        if link.bandwidth <= 0:
            raise ConfigError("GPU interconnect has no bandwidth")
        exchanged = 0.0
        messages = 0
        for t, spec in enumerate(model.sparse):
            fr = gpu_frac.get(t, {})
            on_gpus = sum(fr.values())
            if on_gpus <= 0:
                continue
            pooled = batch * spec.embedding_dim * spec.bytes_per_element
            for g in owners:
                missing = on_gpus - fr.get(g, 0.0)
                if missing > 1e-12:
                    exchanged += pooled * missing
                    messages += 1
        alltoall = exchanged / link.bandwidth + messages * link.latency
        stages["comm_alltoall"] = alltoall
        if link.kind == hardware.LINK_HOST_STAGING:
            if platform.host_device_link.bandwidth <= 0:
                raise ConfigError("host-device link has no bandwidth")
            stages["host_device_copy"] += exchanged / platform.host_device_link.bandwidth
            busy["host_bw"] += alltoall
        else:
            busy["gpu_bw"] += alltoall

    # Remote parameter-server round trip: ids out, rows back, plus the
    # trainer-side CPU cost of staging that traffic.
    if remote_bytes > 0:
        if platform.nic.bandwidth <= 0:
            raise ConfigError("NIC has no bandwidth")
        wire = 2.0 * remote_bytes
        stages["comm_ps"] = (
            wire / platform.nic.bandwidth
            + platform.nic.latency
            + coeffs.host_processing_cost * wire / len(platform.cpu_sockets)
        )

    # Pooled outputs cross the host-device link for host- and PS-resident
    # tables when the dense stacks run on GPUs.
    if platform.gpus:
        copied = 0.0
        for t, spec in enumerate(model.sparse):
            f_host = host_frac.get(t, 0.0)
            if f_host > 0:
                copied += batch * spec.embedding_dim * spec.bytes_per_element * f_host
        if remote_bytes > 0:
            for shard in plan.assignments:
                if hardware.device_kind(shard.device_id) != "ps":
                    continue
                spec = model.sparse[shard.table_id]
                frac = (shard.row_end - shard.row_begin) / spec.hash_size
                copied += batch * spec.embedding_dim * spec.bytes_per_element * frac
        if copied > 0:
            if platform.host_device_link.bandwidth <= 0:
                raise ConfigError("host-device link has no bandwidth")
            stages["host_device_copy"] += (
                (1.0 + rho) * copied / platform.host_device_link.bandwidth
            )

    # Dense compute: GPUs when present, otherwise the CPU sockets (scaled by
    # the asynchronous-thread multiplier).
    if platform.gpus:
        peak = hardware.aggregate(platform, hardware.GPU_FLOPS)
        per_op = platform.gpus[0].per_op_overhead
    else:
        peak = hardware.aggregate(platform, hardware.CPU_FLOPS) * cpu_compute_multiplier
        per_op = platform.cpu_sockets[0].per_op_overhead
    compute = peak * coeffs.compute_efficiency
    if compute <= 0:
        raise ConfigError(f"platform {platform.name} has no usable compute")
    op_cost = per_op * coeffs.per_op_scale
    n_layers = len(model.bottom_mlp.layer_widths) + len(model.top_mlp.layer_widths)
    mlp_total = model_mod.mlp_flops(model.bottom_mlp, batch) + model_mod.mlp_flops(
        model.top_mlp, batch
    )
    inter_total = batch * model_mod.interaction_flops(model)
    stages["dense_forward"] = mlp_total / compute + n_layers * op_cost
    stages["interaction"] = inter_total / compute + op_cost
    stages["dense_backward"] = (
        coeffs.backward_ratio_dense * (mlp_total + inter_total) / compute
        + (n_layers + 1) * op_cost
    )

    # Dense gradient exchange, amortized over the synchronization period.
    if sync_period is not None:
        if sync_period < 1:
            raise ConfigError("sync period must be >= 1")
        if platform.nic.bandwidth <= 0:
            raise ConfigError("NIC has no bandwidth")
        params = model_mod.dense_param_count(model)
        stages["dense_sync"] = 2.0 * params * 4.0 / platform.nic.bandwidth / sync_period

    # Input pipeline; infinite reader bandwidth reads as free.
    if not ingest_bandwidth > 0:
        raise ConfigError("ingest bandwidth must be positive")
    if math.isfinite(ingest_bandwidth):
        stages["data_read"] = batch * model_mod.sample_bytes(model) / ingest_bandwidth

    busy["nic"] += stages["comm_ps"] + stages["dense_sync"] + stages["data_read"]
    busy["host_bw"] += stages["host_device_copy"]
    if not platform.gpus:
        busy["cpu"] += (
            stages["dense_forward"] + stages["dense_backward"] + stages["interaction"]
        )
    return _Components(stages=stages, busy=busy)


def stage_times(
    model: model_mod.ModelConfig,
    platform: hardware.PlatformSpec,
    plan: placement.PlacementPlan,
    coeffs: CalibrationCoefficients = DEFAULT_COEFFICIENTS,
    *,
    sync_period: float | None = None,
    ingest_bandwidth: float = math.inf,
    cpu_compute_multiplier: float = 1.0,
) -> dict[str, float]:
    """Seconds spent in each pipeline stage for one training iteration."""
    return _components(
        model, platform, plan, coeffs, sync_period, ingest_bandwidth,
        cpu_compute_multiplier,
    ).stages


def iteration_time(stages: dict[str, float], coeffs: CalibrationCoefficients) -> float:
    """Serial stage sum minus the overlap credit, floored at the slowest stage.

    The credit hides embedding work under dense compute (or vice versa), so
    at most min(emb, dense) can disappear.
    """
    total = sum(stages.values())
    emb = stages.get("emb_forward", 0.0) + stages.get("emb_backward", 0.0)
    dense = stages.get("dense_forward", 0.0) + stages.get("dense_backward", 0.0)
    credit = coeffs.overlap * min(emb, dense)
    return max(total - credit, max(stages.values(), default=0.0))


def _power_split(throughput: float, power: float) -> tuple[float, float]:
    """Report (throughput, efficiency) so efficiency * power returns the
    reported throughput bit-exactly.

    Rounding a quotient cannot always make the product land back on the
    original value (for power 3.0 about a third of all values are outside
    the image of the rounded multiply), so when no such quotient exists the
    reported throughput absorbs the residual: at most one ulp. Products that
    already round-trip are returned unchanged, which keeps the function
    idempotent for cluster roll-ups re-deriving efficiency at the same power.
    """
    q = throughput / power
    if not math.isfinite(q) or q * power == throughput:
        return throughput, q
    for direction in (math.inf, -math.inf):
        cand = q
        for _ in range(2):
            cand = math.nextafter(cand, direction)
            if cand * power == throughput:
                return throughput, cand
    return q * power, q


def evaluate(
    model: model_mod.ModelConfig,
    platform: hardware.PlatformSpec,
    plan: placement.PlacementPlan,
    coeffs: CalibrationCoefficients = DEFAULT_COEFFICIENTS,
    *,
    sync_period: float | None = None,
    ingest_bandwidth: float = math.inf,
    cpu_compute_multiplier: float = 1.0,
) -> CostBreakdown:
    """Full single-trainer evaluation of one scenario."""
    parts = _components(
        model, platform, plan, coeffs, sync_period, ingest_bandwidth,
        cpu_compute_multiplier,
    )
    iter_s = iteration_time(parts.stages, coeffs)
    if iter_s <= 0:
        raise ConfigError("iteration time collapsed to zero; check overheads")
    thr = model.batch_size / iter_s
    power = platform.power_units if platform.power_units is not None else math.nan
    if plan.strategy.kind == placement.STRATEGY_REMOTE:
        power += plan.strategy.num_servers * 1.0
    if math.isnan(power):
        eff = math.nan
    else:
        thr, eff = _power_split(thr, power)
    util = {
        name: min(1.0, parts.busy[name] / iter_s) for name in RESOURCES
    }
    return CostBreakdown(
        stages=parts.stages,
        iteration_time=iter_s,
        throughput=thr,
        power_units=power,
        power_efficiency=eff,
        utilization=util,
        batch_size=model.batch_size,
    )


def throughput(
    model: model_mod.ModelConfig,
    platform: hardware.PlatformSpec,
    plan: placement.PlacementPlan,
    coeffs: CalibrationCoefficients = DEFAULT_COEFFICIENTS,
    **kwargs,
) -> float:
    return evaluate(model, platform, plan, coeffs, **kwargs).throughput


def power_efficiency(
    model: model_mod.ModelConfig,
    platform: hardware.PlatformSpec,
    plan: placement.PlacementPlan,
    coeffs: CalibrationCoefficients = DEFAULT_COEFFICIENTS,
    **kwargs,
) -> float:
    return evaluate(model, platform, plan, coeffs, **kwargs).power_efficiency


def utilization(breakdown: CostBreakdown) -> dict[str, float]:
    return dict(breakdown.utilization)


# ---------------------------------------------------------------------------
# serialization


def _json_safe(x: float) -> float | None:
    return None if math.isnan(x) else x


def breakdown_to_doc(b: CostBreakdown) -> dict:
    return {
        "stages": {name: b.stages[name] for name in STAGE_ORDER},
        "iteration_time": b.iteration_time,
        "throughput": b.throughput,
        "power_units": _json_safe(b.power_units),
        "power_efficiency": _json_safe(b.power_efficiency),
        "utilization": {name: b.utilization[name] for name in RESOURCES},
        "batch_size": b.batch_size,
    }


def to_csv_row(scenario_id: str, b: CostBreakdown) -> list[str]:
    cells = [scenario_id]
    cells += [repr(b.stages[name]) for name in STAGE_ORDER]
    cells += [
        repr(b.iteration_time),
        repr(b.throughput),
        repr(b.power_efficiency),
        repr(b.utilization["cpu"]),
        repr(b.utilization["host_bw"]),
        repr(b.utilization["gpu_bw"]),
        repr(b.utilization["nic"]),
    ]
    return cells


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class CalibrationReference:
    """One measured relative-throughput datapoint: the ratio of two training
    scenarios (cluster.TrainingScenario), e.g. a GPU setup over a CPU setup."""

    name: str
    numerator: object
    denominator: object
    measured_ratio: float

    def __post_init__(self):
        if not self.measured_ratio > 0:
            raise ConfigError("measured_ratio must be positive")


GRID_AXES = ("compute_efficiency", "overlap", "per_op_scale", "host_processing_cost")


def predicted_ratio(ref: CalibrationReference, coeffs: CalibrationCoefficients) -> float:
    from . import cluster  # deferred: cluster builds on this module

    num = cluster.scenario_throughput(ref.numerator, coeffs)
    den = cluster.scenario_throughput(ref.denominator, coeffs)
    return num / den


def calibrate(
    refs: list[CalibrationReference],
    grid: dict[str, list[float]],
    base: CalibrationCoefficients = DEFAULT_COEFFICIENTS,
) -> CalibrationCoefficients:
    """Lexicographic grid search minimizing squared log-ratio error.

    Axes iterate in GRID_AXES order; the first strict minimum wins, so the
    result is independent of evaluation parallelism.
    """
    if not refs:
        raise ConfigError("calibrate needs at least one reference")
    unknown = set(grid) - set(GRID_AXES)
    if unknown:
        raise ConfigError(f"unknown grid axes: {sorted(unknown)}")
    axes = []
    for name in GRID_AXES:
        values = list(grid.get(name, [getattr(base, name)]))
        if not values:
            raise ConfigError(f"grid axis {name} is empty")
        axes.append(values)
    best: CalibrationCoefficients | None = None
    best_err = math.inf
    for eff, overlap, scale, hpc in itertools.product(*axes):
        coeffs = replace(
            base,
            compute_efficiency=eff,
            overlap=overlap,
            per_op_scale=scale,
            host_processing_cost=hpc,
        )
        err = 0.0
        for ref in refs:
            pred = predicted_ratio(ref, coeffs)
            err += (math.log(pred) - math.log(ref.measured_ratio)) ** 2
        if err < best_err:
            best_err = err
            best = coeffs
    assert best is not None
    return best
