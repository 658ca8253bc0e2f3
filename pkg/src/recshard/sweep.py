"""Declarative design-space sweeps: a base training scenario, a list of axes,
and a Cartesian evaluation that treats infeasible points as data. Includes
canned sweeps for the standard report figures."""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import cluster, costmodel, hardware, model as model_mod, placement
from .errors import ConfigError, InfeasibleError

AXIS_PATHS = (
    "batch_size",
    "sparse_count",
    "dense_count",
    "hash_size",
    "mlp",
    "placement",
    "num_trainers",
)

THREADS_ENV = "RECSHARD_THREADS"


@dataclass(frozen=True)
class SweepSpec:
    base: cluster.TrainingScenario
    axes: tuple[tuple[str, tuple], ...]
    seed: int = 0
    coefficients: costmodel.CalibrationCoefficients = costmodel.DEFAULT_COEFFICIENTS

    def __post_init__(self):
        if not self.axes:
            raise ConfigError("a sweep needs at least one axis")
        for path, values in self.axes:
            if path not in AXIS_PATHS:
                raise ConfigError(
                    f"unknown axis {path!r}; supported: {', '.join(AXIS_PATHS)}"
                )
            if not values:
                raise ConfigError(f"axis {path} has no values")


@dataclass(frozen=True)
class ScenarioResult:
    scenario_id: str
    axis_values: dict
    breakdown: costmodel.CostBreakdown | None
    error: str | None
    relative_throughput: float | None = None
    relative_power_eff: float | None = None


def _parse_mlp(text: str) -> tuple[int, ...]:
    """'512^3' -> three 512-wide layers."""
    width, sep, layers = str(text).partition("^")
    try:
        w = int(width)
        n = int(layers) if sep else 1
    except ValueError as err:
        raise ConfigError(f"bad MLP axis value {text!r}; expected 'width^layers'") from err
    if w < 1 or n < 1:
        raise ConfigError(f"bad MLP axis value {text!r}")
    return (w,) * n


def _rebuild(model: model_mod.ModelConfig, *, dense_count=None, sparse=None,
             bottom=None, top=None) -> model_mod.ModelConfig:
    return model_mod.build_model(
        dense_count=model.dense_count if dense_count is None else dense_count,
        sparse=model.sparse if sparse is None else sparse,
        bottom_widths=model.bottom_mlp.layer_widths if bottom is None else bottom,
        top_widths=model.top_mlp.layer_widths if top is None else top,
        interaction=model.interaction,
        batch_size=model.batch_size,
    )


def apply_axis(
    scenario: cluster.TrainingScenario, path: str, value
) -> cluster.TrainingScenario:
    """One sweep point: the base scenario with a single parameter replaced."""
    model = scenario.model
    if path == "batch_size":
        return dataclasses.replace(scenario, model=model_mod.with_batch_size(model, int(value)))
    if path == "sparse_count":
        n = int(value)
        if n < 1:
            raise ConfigError("sparse_count axis values must be >= 1")
        if not model.sparse:
            raise ConfigError("sparse_count axis needs a base model with sparse features")
        pattern = itertools.cycle(model.sparse)
        return dataclasses.replace(
            scenario, model=_rebuild(model, sparse=tuple(itertools.islice(pattern, n)))
        )
    if path == "dense_count":
        return dataclasses.replace(scenario, model=_rebuild(model, dense_count=int(value)))
    if path == "hash_size":
        sparse = tuple(
            dataclasses.replace(s, hash_size=int(value)) for s in model.sparse
        )
        return dataclasses.replace(scenario, model=dataclasses.replace(model, sparse=sparse))
    if path == "mlp":
        widths = _parse_mlp(value)
        return dataclasses.replace(scenario, model=_rebuild(model, bottom=widths, top=widths))
    if path == "placement":
        strategy = value if isinstance(value, placement.PlacementStrategy) else placement.parse_strategy(value)
        topo = scenario.topology
        if (
            strategy.kind == placement.STRATEGY_REMOTE
            and topo.num_sparse_ps < strategy.num_servers
        ):
            # The sweep varies the placement; provision servers to match.
            topo = dataclasses.replace(topo, num_sparse_ps=strategy.num_servers)
        return dataclasses.replace(scenario, strategy=strategy, topology=topo)
    if path == "num_trainers":
        topo = dataclasses.replace(scenario.topology, num_trainers=int(value))
        return dataclasses.replace(scenario, topology=topo)
    raise ConfigError(f"unknown axis {path!r}")


def _axis_label(path: str, value) -> str | int | float:
    if isinstance(value, placement.PlacementStrategy):
        return value.label()
    return value


def _max_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        configured = int(raw)
    except ValueError:
        configured = 0
    if configured >= 1:
        return configured
    return min(8, os.cpu_count() or 1)


def run_sweep(spec: SweepSpec) -> list[ScenarioResult]:
    """Evaluate the Cartesian product of the axes in lexicographic order.

    Infeasible points become error rows; results are ordered and valued
    independently of worker count.
    """
    names = [path for path, _ in spec.axes]
    combos = list(itertools.product(*(values for _, values in spec.axes)))

    def build(combo) -> cluster.TrainingScenario:
        scenario = spec.base
        for path, value in zip(names, combo):
            scenario = apply_axis(scenario, path, value)
        return scenario

    scenarios = [build(c) for c in combos]

    def evaluate(scenario: cluster.TrainingScenario):
        try:
            return cluster.scenario_breakdown(scenario, spec.coefficients), None
        except InfeasibleError as err:
            return None, str(err)

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        outcomes = list(pool.map(evaluate, scenarios))

    results = []
    base_thr = base_eff = None
    for idx, (combo, (breakdown, error)) in enumerate(zip(combos, outcomes)):
        rel_thr = rel_eff = None
        if breakdown is not None:
            if base_thr is None and idx == 0:
                base_thr = breakdown.throughput
                base_eff = breakdown.power_efficiency
            if base_thr:
                rel_thr = breakdown.throughput / base_thr
            if base_eff and not math.isnan(breakdown.power_efficiency):
                rel_eff = breakdown.power_efficiency / base_eff
        results.append(
            ScenarioResult(
                scenario_id=f"s{idx:04d}",
                axis_values={
                    path: _axis_label(path, value) for path, value in zip(names, combo)
                },
                breakdown=breakdown,
                error=error,
                relative_throughput=rel_thr,
                relative_power_eff=rel_eff,
            )
        )
    return results


# ---------------------------------------------------------------------------
# output renderings


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def results_to_csv(spec: SweepSpec, results: list[ScenarioResult]) -> str:
    names = [path for path, _ in spec.axes]
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writerow(
        ["scenario_id", *names, *costmodel.STAGE_ORDER, "iteration_s", "throughput",
         "power_eff", "util_cpu", "util_host_bw", "util_gpu_bw", "util_nic",
         "rel_throughput", "rel_power_eff", "error"]
    )
    for r in results:
        row = [r.scenario_id] + [_cell(r.axis_values[n]) for n in names]
        if r.breakdown is None:
            row += [""] * (len(costmodel.STAGE_ORDER) + 9)
        else:
            b = r.breakdown
            row += [repr(b.stages[s]) for s in costmodel.STAGE_ORDER]
            row += [
                repr(b.iteration_time),
                repr(b.throughput),
                _cell(None if math.isnan(b.power_efficiency) else b.power_efficiency),
                repr(b.utilization["cpu"]),
                repr(b.utilization["host_bw"]),
                repr(b.utilization["gpu_bw"]),
                repr(b.utilization["nic"]),
            ]
            row += [_cell(r.relative_throughput), _cell(r.relative_power_eff)]
        row.append(r.error or "")
        writer.writerow(row)
    return buf.getvalue()


def results_to_dat(spec: SweepSpec, results: list[ScenarioResult]) -> str:
    """Plot-friendly columns: axis values, throughput, relative throughput.

    Infeasible points keep their row with 'nan' measurements so line plots
    break visibly at the capacity cliff.
    """
    names = [path for path, _ in spec.axes]
    lines = ["# " + " ".join([*names, "throughput", "rel_throughput"])]
    for r in results:
        cells = [str(r.axis_values[n]) for n in names]
        if r.breakdown is None:
            cells += ["nan", "nan"]
        else:
            cells.append(repr(r.breakdown.throughput))
            cells.append(
                repr(r.relative_throughput) if r.relative_throughput is not None else "nan"
            )
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


def compare(results: list[ScenarioResult], baseline_id: str) -> dict[str, str]:
    """Ratio report against one scenario; markdown and CSV renderings."""
    by_id = {r.scenario_id: r for r in results}
    base = by_id.get(baseline_id)
    if base is None:
        raise ConfigError(f"unknown baseline scenario {baseline_id!r}")
    if base.breakdown is None:
        raise ConfigError(f"baseline scenario {baseline_id} was infeasible")
    md = [
        f"| scenario | throughput | vs {baseline_id} | power_eff | vs {baseline_id} |",
        "|---|---|---|---|---|",
    ]
    csv_lines = ["scenario_id,throughput,throughput_ratio,power_eff,power_eff_ratio"]
    for r in results:
        if r.breakdown is None:
            md.append(f"| {r.scenario_id} | infeasible | | | |")
            csv_lines.append(f"{r.scenario_id},,,,")
            continue
        thr_ratio = r.breakdown.throughput / base.breakdown.throughput
        eff = r.breakdown.power_efficiency
        base_eff = base.breakdown.power_efficiency
        if math.isnan(eff) or math.isnan(base_eff):
            eff_cell, eff_ratio_cell = "", ""
        else:
            eff_cell, eff_ratio_cell = repr(eff), repr(eff / base_eff)
        md.append(
            f"| {r.scenario_id} | {r.breakdown.throughput!r} | {thr_ratio!r} "
            f"| {eff_cell} | {eff_ratio_cell} |"
        )
        csv_lines.append(
            f"{r.scenario_id},{r.breakdown.throughput!r},{thr_ratio!r},{eff_cell},{eff_ratio_cell}"
        )
    return {"markdown": "\n".join(md) + "\n", "csv": "\n".join(csv_lines) + "\n"}


# ---------------------------------------------------------------------------
# canned figure sweeps

FIGURE_NAMES = ("fig8", "fig9", "fig10", "mlp", "fig12")

_POW2_BATCHES = tuple(100 * 2**i for i in range(8))          # 100 .. 12800
_POW2_HASHES = tuple(100_000 * 2**i for i in range(10))      # 1e5 .. 5.12e7
_MLP_POINTS = ("64^2", "128^2", "256^3", "512^3", "1024^3", "1024^4")
_DENSE_GRID = tuple(64 * 2**i for i in range(7))             # 64 .. 4096
_SPARSE_GRID = tuple(4 * 2**i for i in range(6))             # 4 .. 128


def _suite_scenario(platform_name: str) -> cluster.TrainingScenario:
    """The customizable test-suite model on one platform, with the placement
    and batch size that platform trains at."""
    on_gpu = platform_name != "CPU"
    model = model_mod.benchmark_model(batch_size=1600 if on_gpu else 200)
    if on_gpu:
        strategy = placement.PlacementStrategy(kind=placement.STRATEGY_GPU)
    else:
        strategy = placement.PlacementStrategy(kind=placement.STRATEGY_HOST)
    return cluster.TrainingScenario(
        name=f"suite-{platform_name.lower()}",
        model=model,
        platform=hardware.platform_preset(platform_name),
        strategy=strategy,
    )


def figure_sweeps(
    name: str,
    coefficients: costmodel.CalibrationCoefficients = costmodel.DEFAULT_COEFFICIENTS,
) -> dict[str, SweepSpec]:
    """The sweep specs behind one canned figure, keyed by output variant."""
    if name == "fig8":
        return {
            variant: SweepSpec(
                base=_suite_scenario(platform),
                axes=(("dense_count", _DENSE_GRID), ("sparse_count", _SPARSE_GRID)),
                coefficients=coefficients,
            )
            for variant, platform in (("cpu", "CPU"), ("gpu", "BigBasin32"))
        }
    if name == "fig9":
        return {
            variant: SweepSpec(
                base=_suite_scenario(platform),
                axes=(("batch_size", _POW2_BATCHES),),
                coefficients=coefficients,
            )
            for variant, platform in (("cpu", "CPU"), ("gpu", "BigBasin32"))
        }
    if name == "fig10":
        return {
            variant: SweepSpec(
                base=_suite_scenario(platform),
                axes=(("hash_size", _POW2_HASHES),),
                coefficients=coefficients,
            )
            for variant, platform in (("cpu", "CPU"), ("gpu", "BigBasin32"))
        }
    if name == "mlp":
        return {
            variant: SweepSpec(
                base=_suite_scenario(platform),
                axes=(("mlp", _MLP_POINTS),),
                coefficients=coefficients,
            )
            for variant, platform in (("cpu", "CPU"), ("gpu", "BigBasin32"))
        }
    if name == "fig12":
        strategies = ("GpuMemory/RowWise", "HostMemory", "RemotePS:8")
        out = {}
        for platform_name in ("BigBasin32", "ZionPrototype"):
            base = cluster.TrainingScenario(
                name=f"fig12-{platform_name.lower()}",
                model=model_mod.production_preset("M2"),
                platform=hardware.platform_preset(platform_name),
                strategy=placement.PlacementStrategy(kind=placement.STRATEGY_HOST),
            )
            out[platform_name.lower()] = SweepSpec(
                base=base,
                axes=(("placement", strategies),),
                coefficients=coefficients,
            )
        return out
    raise ConfigError(f"unknown figure {name!r}; available: {', '.join(FIGURE_NAMES)}")


def figure_files(
    name: str,
    coefficients: costmodel.CalibrationCoefficients = costmodel.DEFAULT_COEFFICIENTS,
) -> dict[str, str]:
    """Run one canned figure; file contents keyed by filename."""
    specs = figure_sweeps(name, coefficients)
    out = {}
    for variant, spec in sorted(specs.items()):
        results = run_sweep(spec)
        out[f"{name}_{variant}.csv"] = results_to_csv(spec, results)
        out[f"{name}_{variant}.dat"] = results_to_dat(spec, results)
    return out


def reproduce_figure(
    name: str,
    out_dir: str | Path,
    coefficients: costmodel.CalibrationCoefficients = costmodel.DEFAULT_COEFFICIENTS,
) -> list[Path]:
    """Run one canned figure and write its CSV and plot data files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for filename, content in sorted(figure_files(name, coefficients).items()):
        path = out / filename
        path.write_text(content)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# JSON sweep specs


def _model_from_ref(ref) -> model_mod.ModelConfig:
    if isinstance(ref, str):
        return model_mod.production_preset(ref)
    return model_mod.model_from_doc(ref)


def _platform_from_ref(ref) -> hardware.PlatformSpec:
    if isinstance(ref, str):
        return hardware.platform_preset(ref)
    return hardware.platform_from_doc(ref)


def coefficients_from_ref(ref) -> costmodel.CalibrationCoefficients:
    if ref is None or ref == "default":
        return costmodel.DEFAULT_COEFFICIENTS
    if ref == "calibrated":
        return costmodel.calibrated_coefficients()
    if isinstance(ref, str):
        raise ConfigError(f"unknown coefficients reference {ref!r}")
    return costmodel.coefficients_from_doc(ref)


def scenario_from_doc(doc: dict, name: str = "scenario") -> cluster.TrainingScenario:
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be an object")
    if "model" not in doc or "platform" not in doc:
        raise ConfigError("scenario needs 'model' and 'platform'")
    topology = cluster.topology_from_doc(doc.get("topology", {}))
    ingest = doc.get("ingest_bandwidth")
    return cluster.TrainingScenario(
        name=str(doc.get("name", name)),
        model=_model_from_ref(doc["model"]),
        platform=_platform_from_ref(doc["platform"]),
        strategy=placement.parse_strategy(doc.get("strategy", "HostMemory")),
        topology=topology,
        ingest_bandwidth=math.inf if ingest is None else float(ingest),
    )


def sweep_spec_from_doc(doc: dict) -> SweepSpec:
    if not isinstance(doc, dict):
        raise ConfigError("sweep spec must be an object")
    if "base" not in doc:
        raise ConfigError("sweep spec needs a 'base' scenario")
    axes_doc = doc.get("axes")
    if not isinstance(axes_doc, list) or not axes_doc:
        raise ConfigError("sweep spec needs a non-empty 'axes' list")
    axes = []
    for entry in axes_doc:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise ConfigError("each axis must be a [path, values] pair")
        path, values = entry
        if not isinstance(values, (list, tuple)):
            raise ConfigError(f"axis {path!r} values must be a list")
        axes.append((str(path), tuple(values)))
    return SweepSpec(
        base=scenario_from_doc(doc["base"], name="base"),
        axes=tuple(axes),
        seed=int(doc.get("seed", 0)),
        coefficients=coefficients_from_ref(doc.get("coefficients")),
    )
