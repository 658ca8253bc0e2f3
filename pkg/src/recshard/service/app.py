"""FastAPI app exposing the cost model.

Error mapping: configuration problems (bad documents, unknown presets,
oversized exact-search instances) return 400; capacity infeasibility returns
409 with the needed/available byte counts."""

from __future__ import annotations

import math

from fastapi import FastAPI
from fastapi.requests import Request
from fastapi.responses import JSONResponse

from .. import __version__, cluster, costmodel, hardware, model, placement, sweep
from ..errors import ConfigError, InfeasibleError, TooLargeError
from . import schemas


def _breakdown_response(b: costmodel.CostBreakdown) -> schemas.BreakdownResponse:
    doc = costmodel.breakdown_to_doc(b)
    return schemas.BreakdownResponse(**doc)


def create_app() -> FastAPI:
    app = FastAPI(title="recshard", version=__version__)

    @app.exception_handler(ConfigError)
    async def config_error(_: Request, exc: ConfigError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(TooLargeError)
    async def too_large(_: Request, exc: TooLargeError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(InfeasibleError)
    async def infeasible(_: Request, exc: InfeasibleError) -> JSONResponse:
        return JSONResponse(
            status_code=409,
            content={"error": str(exc), "needed": exc.needed, "available": exc.available},
        )

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "version": __version__}

    @app.get("/presets", response_model=schemas.PresetsResponse)
    def presets() -> schemas.PresetsResponse:
        coefficients = {
            "default": costmodel.coefficients_to_doc(costmodel.DEFAULT_COEFFICIENTS)
        }
        try:
            coefficients["calibrated"] = costmodel.coefficients_to_doc(
                costmodel.calibrated_coefficients()
            )
        except ConfigError:
            pass
        return schemas.PresetsResponse(
            models=list(model.MODEL_PRESET_NAMES),
            platforms=list(hardware.PLATFORM_PRESET_NAMES),
            figures=list(sweep.FIGURE_NAMES),
            coefficients=coefficients,
        )

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate(req: schemas.ScenarioRequest) -> schemas.SimulateResponse:
        scenario = sweep.scenario_from_doc(req.scenario_doc())
        coeffs = sweep.coefficients_from_ref(req.coefficients)
        plan = placement.plan_placement(
            scenario.model, scenario.platform, scenario.strategy
        )
        breakdown = cluster.cluster_throughput(
            scenario.model,
            scenario.platform,
            plan,
            scenario.topology,
            coeffs,
            ingest_bandwidth=scenario.ingest_bandwidth,
        )
        return schemas.SimulateResponse(
            name=scenario.name,
            breakdown=_breakdown_response(breakdown),
            plan=placement.plan_to_doc(plan),
            csv_row=costmodel.to_csv_row(scenario.name, breakdown),
        )

    @app.post("/shard", response_model=schemas.ShardResponse)
    def shard(req: schemas.ShardRequest) -> schemas.ShardResponse:
        tables = [
            placement.TableLoad(table_id=t.id, size=t.size, load=t.load)
            for t in req.tables
        ]
        devices = [
            (math.inf if d.capacity is None else float(d.capacity), d.id)
            for d in req.devices
        ]
        solve = (
            placement.shard_tables_lpt
            if req.algorithm == "lpt"
            else placement.shard_tables_exact
        )
        result = solve(tables, devices)
        return schemas.ShardResponse(
            algorithm=req.algorithm,
            assignment=result.assignment,
            device_loads=result.device_loads,
            device_bytes=result.device_bytes,
            makespan=result.makespan,
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def run_sweep(req: schemas.SweepRequest) -> schemas.SweepResponse:
        spec = sweep.sweep_spec_from_doc(req.spec)
        results = sweep.run_sweep(spec)
        rows = []
        for r in results:
            eff = r.breakdown.power_efficiency if r.breakdown else None
            rows.append(
                schemas.SweepRowResponse(
                    scenario_id=r.scenario_id,
                    axis_values=r.axis_values,
                    error=r.error,
                    throughput=r.breakdown.throughput if r.breakdown else None,
                    power_efficiency=None if eff is None or math.isnan(eff) else eff,
                    relative_throughput=r.relative_throughput,
                    relative_power_eff=r.relative_power_eff,
                )
            )
        return schemas.SweepResponse(
            rows=rows,
            csv=sweep.results_to_csv(spec, results),
            dat=sweep.results_to_dat(spec, results),
        )

    @app.post("/calibrate", response_model=schemas.CalibrateResponse)
    def calibrate(req: schemas.CalibrateRequest) -> schemas.CalibrateResponse:
        refs = [
            costmodel.CalibrationReference(
                name=r.name,
                numerator=sweep.scenario_from_doc(r.numerator, name=f"{r.name}-num"),
                denominator=sweep.scenario_from_doc(r.denominator, name=f"{r.name}-den"),
                measured_ratio=r.measured_ratio,
            )
            for r in req.refs
        ]
        fitted = costmodel.calibrate(refs, req.grid)
        ratios = {}
        residual = 0.0
        for ref in refs:
            pred = costmodel.predicted_ratio(ref, fitted)
            ratios[ref.name] = pred
            residual += (math.log(pred) - math.log(ref.measured_ratio)) ** 2
        return schemas.CalibrateResponse(
            coefficients=costmodel.coefficients_to_doc(fitted),
            predicted_ratios=ratios,
            residual=residual,
        )

    @app.post("/reproduce", response_model=schemas.ReproduceResponse)
    def reproduce(req: schemas.ReproduceRequest) -> schemas.ReproduceResponse:
        coeffs = sweep.coefficients_from_ref(req.coefficients)
        files = sweep.figure_files(req.figure, coeffs)
        return schemas.ReproduceResponse(figure=req.figure, files=files)

    return app


app = create_app()
