import csv
import json
import math
import subprocess
import sys

import pytest

from cortexnoc import cli
from cortexnoc import config as cfgmod
from cortexnoc.accel import Divergence, VerifyReport
from cortexnoc.config import ExperimentConfig
from cortexnoc.errors import ConfigError

MINI = ["--set", "dims=2x2", "--set", "columns=64", "--set", "series=2", "--set", "reps=2"]


def run_cli(tmp_path, *args, name="t"):
    return cli.main([*args, *MINI, "--out", str(tmp_path), "--name", name])


def body(path):
    return [l for l in path.read_text().splitlines() if not l.startswith("#")]


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig(dims=(8, 4), coalescing=False, density=0.05, name="x")
        assert cfgmod.parse_text(cfg.dumps()) == cfg

    def test_comments_and_blank_lines(self):
        cfg = cfgmod.parse_text("# hello\n\nmode = sequential  # inline\nzones=4\n")
        assert cfg.mode == "sequential" and cfg.zones == 4

    @pytest.mark.parametrize("text,field", [("bogus = 1", "bogus"), ("columns = many", "columns"),
                                            ("dims = 4", "dims"), ("learning = maybe", "learning")])
    def test_errors_name_field(self, text, field):
        with pytest.raises(ConfigError) as ei:
            cfgmod.parse_text(text)
        assert ei.value.field == field

    @pytest.mark.parametrize("kw,field", [(dict(mode="fast"), "mode"), (dict(zones=3), "zones"),
                                          (dict(levels=200), "levels"),
                                          (dict(workload="csv"), "csv_path"),
                                          (dict(dims=(0, 4)), "dims")])
    def test_validate(self, kw, field):
        with pytest.raises(ConfigError) as ei:
            ExperimentConfig(**kw).validate()
        assert ei.value.field == field

    def test_paper_preset(self):
        cfg = cfgmod.paper()
        assert cfg.dims == (16, 16) and cfg.columns == 2025 and cfg.cells == 32
        assert cfg.cortex().n_win() == 40

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            cfgmod.load(tmp_path / "none.cfg")


class TestRun:
    def test_outputs_embed_config(self, tmp_path, capsys):
        assert run_cli(tmp_path, "run") == 0
        csv_path, json_path = tmp_path / "t.csv", tmp_path / "t.json"
        header = [l for l in csv_path.read_text().splitlines() if l.startswith("#")]
        assert "# dims = 2x2" in header and "# columns = 64" in header
        assert len(header) == len(ExperimentConfig().items())
        summary = json.loads(json_path.read_text())
        assert summary["config"]["dims"] == "2x2"
        assert summary["epochs"] == 2 * 2 * 20
        assert body(csv_path)[0].split(",") == cli.EPOCH_COLUMNS
        assert "wrote" in capsys.readouterr().out

    def test_reproducible_bytes(self, tmp_path):
        run_cli(tmp_path, "run", name="a")
        run_cli(tmp_path, "run", name="b")
        assert body(tmp_path / "a.csv") == body(tmp_path / "b.csv")
        ja = json.loads((tmp_path / "a.json").read_text())
        jb = json.loads((tmp_path / "b.json").read_text())
        ja["config"].pop("name"), jb["config"].pop("name")
        assert ja == jb

    def test_means_recompute_from_csv(self, tmp_path):
        run_cli(tmp_path, "run", "--set", "zones=2", "--set", "dims=4x2")
        summary = json.loads((tmp_path / "t.json").read_text())
        cfg, rows = cli.read_epoch_csv(tmp_path / "t.csv")
        assert cfg["zones"] == "2"
        for col in cli.MEAN_COLUMNS:
            vals = [r[col] for r in rows]
            assert math.fsum(vals) / len(vals) == summary["means"][col]
        assert {r["zone"] for r in rows} == {0, 1}

    def test_learning_summary(self, tmp_path):
        run_cli(tmp_path, "run")
        learning = json.loads((tmp_path / "t.json").read_text())["learning"]
        assert learning["series"] == 2 and len(learning["reps_to_learn"]) == 2

    def test_config_file_and_override(self, tmp_path):
        f = tmp_path / "exp.cfg"
        f.write_text("mode = sequential\ncoalescing = false\n")
        assert run_cli(tmp_path, "run", str(f), "--set", "coalescing=true") == 0
        cfg, _ = cli.read_epoch_csv(tmp_path / "t.csv")
        assert cfg["mode"] == "sequential" and cfg["coalescing"] == "true"

    def test_csv_workload(self, tmp_path):
        data = tmp_path / "d.csv"
        data.write_text("t,value\n" + "".join(f"{i},{i % 7}\n" for i in range(40)))
        assert run_cli(tmp_path, "run", "--set", "workload=csv", "--set", f"csv_path={data}") == 0
        assert json.loads((tmp_path / "t.json").read_text())["epochs"] == 80


class TestExitCodes:
    def test_bad_key(self, tmp_path, capsys):
        assert run_cli(tmp_path, "run", "--set", "colums=5") == 1
        assert "colums" in capsys.readouterr().err

    def test_invalid_value_names_field(self, tmp_path, capsys):
        assert run_cli(tmp_path, "run", "--set", "zones=3") == 1
        assert "[zones]" in capsys.readouterr().err

    def test_fault_writes_trace(self, tmp_path, capsys):
        code = run_cli(tmp_path, "run", "--set", "watchdog_cycles=1", "--set", "trace=true")
        assert code == 2
        err = capsys.readouterr().err
        assert "trace written to" in err
        trace = (tmp_path / "t.trace").read_text().splitlines()
        assert trace[0].startswith("fault: watchdog") and len(trace) > 2

    def test_verify_ok(self, tmp_path, capsys):
        assert run_cli(tmp_path, "verify") == 0
        eq = json.loads((tmp_path / "t.json").read_text())["equivalence"]
        assert eq == {"checked": True, "divergences": 0, "first": None}
        assert "equivalent" in capsys.readouterr().out

    def test_verify_divergence(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr(cli, "verify_against_reference",
                            lambda a, r: VerifyReport(len(a), [Divergence(3, "anomaly", 0.5, 0.0)]))
        assert run_cli(tmp_path, "verify") == 2
        assert "DIVERGED" in capsys.readouterr().out

    def test_verify_rejects_zones(self, tmp_path):
        assert run_cli(tmp_path, "verify", "--set", "zones=2", "--set", "dims=4x2") == 1

    def test_module_entry_point(self, tmp_path):
        p = subprocess.run([sys.executable, "-m", "cortexnoc", "run", "--set", "colums=1"],
                           capture_output=True, text=True, cwd=tmp_path)
        assert p.returncode == 1 and "config error" in p.stderr

    def test_help_lists_keys(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["run", "--help"])
        assert "link_width = 16" in capsys.readouterr().out


class TestSweep:
    def read(self, path):
        with open(path) as fh:
            return list(csv.DictReader(l for l in fh if not l.startswith("#")))

    def test_two_points(self, tmp_path):
        assert run_cli(tmp_path, "sweep", "--axis", "link_width=8,32", name="s") == 0
        rows = self.read(tmp_path / "s_sweep.csv")
        assert [r["link_width"] for r in rows] == ["8", "32"]
        assert all(r["status"] == "ok" for r in rows)
        assert (tmp_path / "s_link_width-8.csv").exists()

    def test_row_count_is_product(self, tmp_path):
        run_cli(tmp_path, "sweep", "--axis", "opt=seq,pipe", "--axis", "dims=2x2,4x2",
                "--set", "series=1", "--set", "reps=1", name="p")
        assert len(self.read(tmp_path / "p_sweep.csv")) == 4

    def test_failed_point_recorded(self, tmp_path):
        assert run_cli(tmp_path, "sweep", "--axis", "zones=1,3", name="f") == 0
        rows = self.read(tmp_path / "f_sweep.csv")
        assert [r["status"] for r in rows] == ["ok", "failed"]
        assert "zones" in rows[1]["error"]

    def test_optimizations_monotone(self, tmp_path):
        run_cli(tmp_path, "sweep", "--axis", "opt=seq,coal,pipe", "--set", "dims=4x4",
                "--set", "columns=512", "--set", "series=1", name="o")
        cyc = [float(r["cycles_per_epoch"]) for r in self.read(tmp_path / "o_sweep.csv")]
        assert cyc[0] >= cyc[1] >= cyc[2]

    def test_bad_axis(self, tmp_path):
        assert run_cli(tmp_path, "sweep", "--axis", "opt=warp") == 1
        assert run_cli(tmp_path, "sweep", "--axis", "novalues") == 1
