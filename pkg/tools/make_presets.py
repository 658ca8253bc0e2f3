"""Regenerate the committed production model presets.

Each preset freezes a table population with diverse hash sizes (log-normal
draws rescaled so the total row count is exact) around the reported per-model
means, with the reported feature counts, pooling, MLP shapes, and optimal
batch sizes. Run from the repo root after an editable install:

    python tools/make_presets.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

PRESET_DIR = Path(__file__).resolve().parents[1] / "src" / "recshard" / "presets"

TARGETS = {
    "m1": dict(
        tables=30, mean_rows=5_700_000, pooling=28.0, dense=800,
        bottom=[512], top=[512, 512, 512], batch=1600, seed=101,
    ),
    "m2": dict(
        tables=13, mean_rows=7_300_000, pooling=17.0, dense=504,
        bottom=[1024], top=[1024, 1024, 512], batch=3200, seed=102,
    ),
    "m3": dict(
        tables=127, mean_rows=3_700_000, pooling=49.0, dense=809,
        bottom=[512], top=[512, 256, 512, 256, 512], batch=800, seed=103,
    ),
}

EMBEDDING_DIM = 64
TRUNCATION = 512
HASH_SIGMA = 0.8


def diverse_rows(tables: int, mean_rows: int, seed: int) -> list[int]:
    """Log-normal hash sizes rescaled so the total row count is exact."""
    rng = np.random.default_rng(seed)
    draws = rng.lognormal(0.0, HASH_SIGMA, tables)
    total = tables * mean_rows
    rows = np.maximum(1, np.rint(draws * (total / draws.sum())).astype(np.int64))
    rows[int(np.argmax(rows))] += total - int(rows.sum())
    assert int(rows.sum()) == total and rows.min() >= 1
    return [int(r) for r in rows]


def build_doc(spec: dict) -> dict:
    rows = diverse_rows(spec["tables"], spec["mean_rows"], spec["seed"])
    return {
        "dense_count": spec["dense"],
        "sparse": [
            {
                "hash_size": r,
                "dim": EMBEDDING_DIM,
                "pooling": spec["pooling"],
                "truncation": TRUNCATION,
            }
            for r in rows
        ],
        "bottom_mlp": spec["bottom"],
        "top_mlp": spec["top"],
        "interaction": {"kind": "DotPairwise", "projection_dim": EMBEDDING_DIM},
        "batch_size": spec["batch"],
    }


def verify(docs: dict[str, dict]) -> None:
    """The committed presets must land in the placement regimes the reports
    rely on: M2 on one GPU, M1 forced onto two, M3 served remotely."""
    from recshard import hardware, model, placement

    big = hardware.platform_preset("BigBasin32")
    gpu_cap = float(big.gpus[0].mem_capacity)
    table_wise = placement.PlacementStrategy(kind=placement.STRATEGY_GPU)

    m1 = model.model_from_doc(docs["m1"])
    m2 = model.model_from_doc(docs["m2"])
    m3 = model.model_from_doc(docs["m3"])

    assert model.total_embedding_bytes(m2) <= gpu_cap
    assert gpu_cap < model.total_embedding_bytes(m1) <= 2 * gpu_cap

    plan1 = placement.plan_placement(m1, big, table_wise)
    assert len(plan1.device_usage) == 2, "m1 must spread across exactly two GPUs"
    plan2 = placement.plan_placement(m2, big, table_wise)
    assert len(plan2.device_usage) == 1, "m2 must fit on one GPU"

    remote = placement.PlacementStrategy(kind=placement.STRATEGY_REMOTE, num_servers=8)
    placement.plan_placement(m3, big, remote)
    cpu_remote = placement.PlacementStrategy(kind=placement.STRATEGY_REMOTE, num_servers=7)
    placement.plan_placement(m3, hardware.platform_preset("CPU"), cpu_remote)


def main() -> None:
    docs = {name: build_doc(spec) for name, spec in TARGETS.items()}
    verify(docs)
    PRESET_DIR.mkdir(parents=True, exist_ok=True)
    for name, doc in docs.items():
        path = PRESET_DIR / f"{name}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
