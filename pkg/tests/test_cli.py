"""CLI behaviour through the in-process service client.

Exit code contract: 0 ok, 1 config error, 2 infeasible, 3 transport/internal.
"""

import json

import pytest

from conftest import make_model, make_table
from recshard import cli
from recshard.costmodel import CSV_COLUMNS
from recshard.model import model_to_doc


def write_json(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def oversized_config(tmp_path):
    doc = model_to_doc(make_model(tables=(make_table(hash_size=200_000_000),)))
    return write_json(
        tmp_path,
        "big.json",
        {"model": doc, "platform": "BigBasin32", "strategy": "GpuMemory"},
    )


class TestPresets:
    def test_list(self, capsys):
        assert cli.main(["presets", "list"]) == 0
        out = capsys.readouterr().out
        assert "models:    M1 M2 M3" in out
        assert "platforms:" in out
        assert "calibrated" in out


class TestSimulate:
    CONFIG = {"model": "M2", "platform": "BigBasin32", "strategy": "GpuMemory"}

    def test_json_to_stdout(self, tmp_path, capsys):
        config = write_json(tmp_path, "cfg.json", self.CONFIG)
        assert cli.main(["simulate", "--config", config]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["breakdown"]["throughput"] > 0
        assert data["plan"]["strategy"] == "GpuMemory/TableWise"

    def test_csv_out(self, tmp_path, capsys):
        config = write_json(tmp_path, "cfg.json", self.CONFIG)
        out = tmp_path / "row.csv"
        assert cli.main(["simulate", "--config", config, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 2
        assert "wrote" in capsys.readouterr().out

    def test_infeasible_exits_2(self, tmp_path, capsys):
        rc = cli.main(["simulate", "--config", oversized_config(tmp_path)])
        assert rc == cli.EXIT_INFEASIBLE
        assert "infeasible:" in capsys.readouterr().err

    def test_unknown_preset_exits_1(self, tmp_path, capsys):
        config = write_json(tmp_path, "cfg.json", {"model": "M9", "platform": "CPU"})
        assert cli.main(["simulate", "--config", config]) == cli.EXIT_CONFIG
        assert "config error:" in capsys.readouterr().err

    def test_invalid_json_exits_1(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        assert cli.main(["simulate", "--config", str(path)]) == cli.EXIT_CONFIG
        assert "not valid JSON" in capsys.readouterr().err

    def test_missing_file_exits_1(self, tmp_path, capsys):
        assert cli.main(["simulate", "--config", str(tmp_path / "nope.json")]) == 1
        assert "cannot read" in capsys.readouterr().err

    def test_non_object_config_exits_1(self, tmp_path, capsys):
        config = write_json(tmp_path, "cfg.json", [1, 2])
        assert cli.main(["simulate", "--config", config]) == cli.EXIT_CONFIG
        assert "JSON object" in capsys.readouterr().err


class TestSweep:
    def test_writes_outputs(self, tmp_path, capsys):
        spec = write_json(
            tmp_path,
            "spec.json",
            {
                "base": {"model": "M2", "platform": "CPU"},
                "axes": [["batch_size", [100, 200]]],
            },
        )
        out = tmp_path / "out"
        assert cli.main(["sweep", "--spec", spec, "--out", str(out)]) == 0
        assert (out / "results.csv").read_text().startswith("scenario_id,batch_size")
        assert (out / "results.dat").read_text().startswith("# batch_size")
        assert "2 scenarios, 0 infeasible" in capsys.readouterr().out


class TestShard:
    def files(self, tmp_path, caps=None):
        tables = [
            {"id": i, "size": s, "load": s} for i, s in enumerate((10, 7, 5, 3))
        ]
        devices = [{"id": "a", "capacity": caps}, {"id": "b", "capacity": caps}]
        return (
            write_json(tmp_path, "tables.json", tables),
            write_json(tmp_path, "devices.json", devices),
        )

    def test_lpt_assignment(self, tmp_path, capsys):
        tables, devices = self.files(tmp_path)
        rc = cli.main(["shard", "--tables", tables, "--devices", devices])
        assert rc == 0
        data = json.loads(capsys.readouterr().out)
        assert data["assignment"] == {"0": "a", "1": "b", "2": "b", "3": "a"}
        assert data["makespan"] == 13.0

    def test_capacity_infeasible_exits_2(self, tmp_path, capsys):
        tables, devices = self.files(tmp_path, caps=8)
        rc = cli.main(["shard", "--tables", tables, "--devices", devices])
        assert rc == cli.EXIT_INFEASIBLE
        assert "infeasible:" in capsys.readouterr().err

    def test_bad_strategy_choice_exits_1(self, tmp_path):
        tables, devices = self.files(tmp_path)
        with pytest.raises(SystemExit) as exc:
            cli.main(
                ["shard", "--tables", tables, "--devices", devices, "--strategy", "greedy"]
            )
        assert exc.value.code == cli.EXIT_CONFIG


class TestCalibrate:
    def test_prints_fit(self, tmp_path, capsys):
        doc = model_to_doc(make_model(tables=(make_table(),)))
        refs = write_json(
            tmp_path,
            "refs.json",
            [
                {
                    "name": "r",
                    "numerator": {
                        "model": doc,
                        "platform": "BigBasin32",
                        "strategy": "GpuMemory",
                    },
                    "denominator": {"model": doc, "platform": "CPU"},
                    "measured_ratio": 2.0,
                }
            ],
        )
        grid = write_json(tmp_path, "grid.json", {"per_op_scale": [1.0, 5.0]})
        assert cli.main(["calibrate", "--refs", refs, "--grid", grid]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["coefficients"]["per_op_scale"] in (1.0, 5.0)


class TestReproduce:
    def test_writes_figure_files(self, tmp_path, capsys):
        out = tmp_path / "figs"
        assert cli.main(["reproduce", "--figure", "fig9", "--out", str(out)]) == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["fig9_cpu.csv", "fig9_cpu.dat", "fig9_gpu.csv", "fig9_gpu.dat"]
        assert capsys.readouterr().out.count("wrote") == 4

    def test_unknown_figure_exits_1(self, tmp_path, capsys):
        rc = cli.main(["reproduce", "--figure", "fig99", "--out", str(tmp_path)])
        assert rc == cli.EXIT_CONFIG


class TestUsageErrors:
    def test_no_command(self):
        with pytest.raises(SystemExit) as exc:
            cli.main([])
        assert exc.value.code == cli.EXIT_CONFIG

    def test_dead_server_exits_3(self, capsys):
        rc = cli.main(["--server", "http://127.0.0.1:9", "presets", "list"])
        assert rc == cli.EXIT_INTERNAL
        assert "transport error" in capsys.readouterr().err
