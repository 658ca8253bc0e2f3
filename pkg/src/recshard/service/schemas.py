"""Request/response models for the HTTP service.

Model, platform, strategy, and coefficient fields accept either a preset
name or an inline document, matching the JSON formats used by the CLI."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

# Several request schemas carry a field literally named "model" (the thing
# being simulated), which collides with pydantic's reserved namespace.
_cfg = ConfigDict(protected_namespaces=())


class ScenarioRequest(BaseModel):
    model_config = _cfg

    name: str = "scenario"
    model: str | dict
    platform: str | dict
    strategy: str | dict = "HostMemory"
    topology: dict | None = None
    ingest_bandwidth: float | None = None
    coefficients: str | dict | None = None

    def scenario_doc(self) -> dict:
        doc = {
            "name": self.name,
            "model": self.model,
            "platform": self.platform,
            "strategy": self.strategy,
        }
        if self.topology is not None:
            doc["topology"] = self.topology
        if self.ingest_bandwidth is not None:
            doc["ingest_bandwidth"] = self.ingest_bandwidth
        return doc


class BreakdownResponse(BaseModel):
    stages: dict[str, float]
    iteration_time: float
    throughput: float
    power_units: float | None
    power_efficiency: float | None
    utilization: dict[str, float]
    batch_size: int


class SimulateResponse(BaseModel):
    name: str
    breakdown: BreakdownResponse
    plan: dict
    csv_row: list[str]


class TableDoc(BaseModel):
    id: int
    size: float
    load: float


class DeviceDoc(BaseModel):
    id: str
    capacity: float | None = None  # null means uncapacitated


class ShardRequest(BaseModel):
    tables: list[TableDoc]
    devices: list[DeviceDoc]
    algorithm: str = Field(default="lpt", pattern="^(lpt|exact)$")


class ShardResponse(BaseModel):
    algorithm: str
    assignment: dict[int, str]
    device_loads: dict[str, float]
    device_bytes: dict[str, float]
    makespan: float


class SweepRequest(BaseModel):
    spec: dict


class SweepRowResponse(BaseModel):
    scenario_id: str
    axis_values: dict
    error: str | None
    throughput: float | None
    power_efficiency: float | None
    relative_throughput: float | None
    relative_power_eff: float | None


class SweepResponse(BaseModel):
    rows: list[SweepRowResponse]
    csv: str
    dat: str


class CalibrationRefRequest(BaseModel):
    name: str = "ref"
    numerator: dict
    denominator: dict
    measured_ratio: float


class CalibrateRequest(BaseModel):
    refs: list[CalibrationRefRequest]
    grid: dict[str, list[float]]


class CalibrateResponse(BaseModel):
    coefficients: dict[str, float]
    predicted_ratios: dict[str, float]
    residual: float


class ReproduceRequest(BaseModel):
    figure: str
    coefficients: str | dict | None = None


class ReproduceResponse(BaseModel):
    figure: str
    files: dict[str, str]


class PresetsResponse(BaseModel):
    models: list[str]
    platforms: list[str]
    figures: list[str]
    coefficients: dict[str, dict[str, float]]


class ErrorResponse(BaseModel):
    error: str
    needed: float | None = None
    available: float | None = None
