"""Sweep mechanics: axis application, ordering, renderings, canned figures,
and the JSON spec loader."""

import math

import pytest

from conftest import make_model, make_table
from recshard import cluster, costmodel, hardware, placement, sweep
from recshard.errors import ConfigError

GIB = 2**30


def base_scenario(tables=2, batch=100, platform="CPU", strategy="HostMemory"):
    cfg = make_model(
        tables=tuple(make_table(hash_size=1000 * (i + 1)) for i in range(tables)),
        batch=batch,
    )
    return cluster.TrainingScenario(
        name="base",
        model=cfg,
        platform=hardware.platform_preset(platform),
        strategy=placement.parse_strategy(strategy),
    )


class TestApplyAxis:
    def test_batch_size(self):
        s = sweep.apply_axis(base_scenario(), "batch_size", 800)
        assert s.model.batch_size == 800

    def test_hash_size_hits_every_table(self):
        s = sweep.apply_axis(base_scenario(), "hash_size", 777)
        assert all(t.hash_size == 777 for t in s.model.sparse)

    def test_sparse_count_cycles_base_tables(self):
        s = sweep.apply_axis(base_scenario(tables=2), "sparse_count", 5)
        sizes = [t.hash_size for t in s.model.sparse]
        assert sizes == [1000, 2000, 1000, 2000, 1000]

    def test_dense_count_rebuilds_mlp_input(self):
        s = sweep.apply_axis(base_scenario(), "dense_count", 64)
        assert s.model.dense_count == 64
        assert s.model.bottom_mlp.input_dim == 64

    def test_mlp_sets_both_stacks(self):
        s = sweep.apply_axis(base_scenario(), "mlp", "512^3")
        assert s.model.bottom_mlp.layer_widths == (512,) * 3
        assert s.model.top_mlp.layer_widths == (512,) * 3

    def test_mlp_rejects_garbage(self):
        with pytest.raises(ConfigError):
            sweep.apply_axis(base_scenario(), "mlp", "wide")

    def test_placement_provisions_sparse_servers(self):
        s = sweep.apply_axis(base_scenario(), "placement", "RemotePS:4")
        assert s.strategy.num_servers == 4
        assert s.topology.num_sparse_ps == 4

    def test_num_trainers(self):
        s = sweep.apply_axis(base_scenario(), "num_trainers", 8)
        assert s.topology.num_trainers == 8

    def test_unknown_axis(self):
        with pytest.raises(ConfigError):
            sweep.SweepSpec(base=base_scenario(), axes=(("gpu_count", (1, 2)),))


class TestRunSweep:
    def spec(self, **kwargs):
        return sweep.SweepSpec(
            base=base_scenario(),
            axes=(("batch_size", (100, 200)), ("dense_count", (16, 32))),
            **kwargs,
        )

    def test_lexicographic_order_and_ids(self):
        results = sweep.run_sweep(self.spec())
        assert [r.scenario_id for r in results] == ["s0000", "s0001", "s0002", "s0003"]
        assert [r.axis_values for r in results] == [
            {"batch_size": 100, "dense_count": 16},
            {"batch_size": 100, "dense_count": 32},
            {"batch_size": 200, "dense_count": 16},
            {"batch_size": 200, "dense_count": 32},
        ]

    def test_relatives_are_against_first_point(self):
        results = sweep.run_sweep(self.spec())
        assert results[0].relative_throughput == 1.0
        for r in results:
            assert r.relative_throughput == r.breakdown.throughput / results[0].breakdown.throughput

    def test_infeasible_points_become_error_rows(self, gpu_platform):
        base = base_scenario(platform="BigBasin32", strategy="GpuMemory")
        spec = sweep.SweepSpec(
            base=base, axes=(("hash_size", (1000, 100 * GIB // 256)),)
        )
        results = sweep.run_sweep(spec)
        assert results[0].error is None
        assert results[1].breakdown is None
        assert "exceed" in results[1].error

    def test_worker_count_does_not_change_results(self, monkeypatch):
        spec = self.spec()
        monkeypatch.setenv(sweep.THREADS_ENV, "1")
        serial = sweep.results_to_csv(spec, sweep.run_sweep(spec))
        monkeypatch.setenv(sweep.THREADS_ENV, "4")
        parallel = sweep.results_to_csv(spec, sweep.run_sweep(spec))
        assert serial == parallel


class TestRenderings:
    def results(self):
        base = base_scenario(platform="BigBasin32", strategy="GpuMemory")
        spec = sweep.SweepSpec(base=base, axes=(("hash_size", (1000, 100 * GIB // 256)),))
        return spec, sweep.run_sweep(spec)

    def test_csv_layout(self):
        spec, results = self.results()
        lines = sweep.results_to_csv(spec, results).splitlines()
        header = lines[0].split(",")
        assert header[:2] == ["scenario_id", "hash_size"]
        assert header[-1] == "error"
        assert len(lines) == 3
        feasible = lines[1].split(",")
        assert feasible[-1] == ""
        infeasible = lines[2].split(",")
        assert infeasible[2:-1] == [""] * (len(header) - 3)
        assert "exceed" in infeasible[-1]

    def test_dat_marks_infeasible_as_nan(self):
        spec, results = self.results()
        lines = sweep.results_to_dat(spec, results).splitlines()
        assert lines[0] == "# hash_size throughput rel_throughput"
        assert lines[2].split() == [str(100 * GIB // 256), "nan", "nan"]

    def test_compare(self):
        spec, results = self.results()
        report = sweep.compare(results, "s0000")
        assert "| s0000 |" in report["markdown"]
        assert report["csv"].splitlines()[1].split(",")[2] == "1.0"
        with pytest.raises(ConfigError):
            sweep.compare(results, "s9999")
        with pytest.raises(ConfigError):
            sweep.compare(results, "s0001")  # infeasible baseline


class TestFigures:
    def test_unknown_figure(self):
        with pytest.raises(ConfigError):
            sweep.figure_sweeps("fig99")

    def test_fig9_axes(self):
        specs = sweep.figure_sweeps("fig9")
        assert set(specs) == {"cpu", "gpu"}
        (path, values), = specs["cpu"].axes
        assert path == "batch_size"
        assert values == tuple(100 * 2**i for i in range(8))
        assert specs["cpu"].base.platform.name == "CPU"
        assert specs["gpu"].base.platform.name == "BigBasin32"

    def test_fig9_saturation_points(self):
        # regression anchors for the batch-saturation curves
        for variant, expected_b90 in (("cpu", 100), ("gpu", 3200)):
            spec = sweep.figure_sweeps("fig9")[variant]
            thr = [r.breakdown.throughput for r in sweep.run_sweep(spec)]
            asymptote = thr[-1]
            batches = [v for v in spec.axes[0][1]]
            b90 = next(b for b, t in zip(batches, thr) if t >= 0.9 * asymptote)
            assert b90 == expected_b90

    def test_fig12_uses_m2(self):
        specs = sweep.figure_sweeps("fig12")
        assert set(specs) == {"bigbasin32", "zionprototype"}
        assert len(specs["bigbasin32"].base.model.sparse) == 13

    def test_reproduce_writes_files(self, tmp_path):
        paths = sweep.reproduce_figure("fig9", tmp_path)
        names = sorted(p.name for p in paths)
        assert names == ["fig9_cpu.csv", "fig9_cpu.dat", "fig9_gpu.csv", "fig9_gpu.dat"]
        for p in paths:
            assert p.read_text()


class TestDocLoading:
    def test_scenario_from_doc_presets(self):
        s = sweep.scenario_from_doc(
            {"model": "M2", "platform": "BigBasin32", "strategy": "GpuMemory"}
        )
        assert s.model.batch_size == 3200
        assert s.platform.name == "BigBasin32"
        assert s.ingest_bandwidth == math.inf

    def test_scenario_needs_model_and_platform(self):
        with pytest.raises(ConfigError):
            sweep.scenario_from_doc({"platform": "CPU"})
        with pytest.raises(ConfigError):
            sweep.scenario_from_doc({"model": "M1"})

    def test_sweep_spec_from_doc(self):
        spec = sweep.sweep_spec_from_doc(
            {
                "base": {"model": "M2", "platform": "CPU"},
                "axes": [["batch_size", [100, 200]]],
                "coefficients": "calibrated",
            }
        )
        assert spec.axes == (("batch_size", (100, 200)),)
        assert spec.coefficients == costmodel.calibrated_coefficients()

    def test_sweep_spec_rejects_malformed_axes(self):
        base = {"model": "M2", "platform": "CPU"}
        with pytest.raises(ConfigError):
            sweep.sweep_spec_from_doc({"base": base, "axes": []})
        with pytest.raises(ConfigError):
            sweep.sweep_spec_from_doc({"base": base, "axes": [["batch_size"]]})
        with pytest.raises(ConfigError):
            sweep.sweep_spec_from_doc({"axes": [["batch_size", [1]]]})

    def test_coefficients_from_ref(self):
        assert sweep.coefficients_from_ref(None) == costmodel.DEFAULT_COEFFICIENTS
        assert sweep.coefficients_from_ref("default") == costmodel.DEFAULT_COEFFICIENTS
        assert sweep.coefficients_from_ref({"overlap": 0.5}).overlap == 0.5
        with pytest.raises(ConfigError):
            sweep.coefficients_from_ref("tuned")
