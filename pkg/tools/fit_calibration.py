"""Fit and freeze the shipped calibration coefficients.

Fits only the M1 reference ratio (single-trainer GPU setup over the
production CPU cluster, measured at 2.25x); M2 and M3 stay held out as
directional checks. Writes src/recshard/presets/calibration.json.

    python tools/fit_calibration.py
"""

from __future__ import annotations

import json
from pathlib import Path

from recshard import cluster, costmodel

PRESET_DIR = Path(__file__).resolve().parents[1] / "src" / "recshard" / "presets"

M1_MEASURED_RATIO = 2.25

GRID = {
    "compute_efficiency": [0.25, 0.5, 0.75, 1.0],
    "overlap": [0.0, 0.25, 0.5],
    "per_op_scale": [1.0, 2.0, 5.0, 10.0, 20.0, 50.0]
    + [float(x) for x in range(80, 401, 20)]
    + [500.0, 700.0, 1000.0],
    "host_processing_cost": [0.0, 1e-10, 1e-9],
}


def main() -> None:
    pairs = cluster.production_comparison_scenarios()
    refs = [
        costmodel.CalibrationReference(
            name="M1",
            numerator=pairs["M1"]["gpu"],
            denominator=pairs["M1"]["cpu"],
            measured_ratio=M1_MEASURED_RATIO,
        )
    ]
    fitted = costmodel.calibrate(refs, GRID)
    print("fitted:", costmodel.coefficients_to_doc(fitted))
    print("M1 ratio:", costmodel.predicted_ratio(refs[0], fitted))
    for name in ("M2", "M3"):
        ref = costmodel.CalibrationReference(
            name=name,
            numerator=pairs[name]["gpu"],
            denominator=pairs[name]["cpu"],
            measured_ratio=1.0,
        )
        g = cluster.scenario_breakdown(pairs[name]["gpu"], fitted)
        c = cluster.scenario_breakdown(pairs[name]["cpu"], fitted)
        print(
            f"{name} held-out: thr ratio {costmodel.predicted_ratio(ref, fitted):.4f}"
            f"  power-eff ratio {g.power_efficiency / c.power_efficiency:.4f}"
        )
    path = PRESET_DIR / "calibration.json"
    path.write_text(
        json.dumps(costmodel.coefficients_to_doc(fitted), indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
