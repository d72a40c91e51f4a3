import json

import numpy as np
import pytest

from fedfair import cli
from fedfair.errors import ConfigError

MINIMAL = """\
k = 2
t_rounds = 1
method = fedavg
setting = cross_silo
"""

SMALL_RUN = """\
# small but complete experiment
k = 4
t_rounds = 3
method = aaggff-s
setting = cross_silo
b = 10
lr = 0.2
seed = 5
cdf.kind = weibull
data.input_dim = 4
data.num_classes = 3
data.samples_per_client_mean = 40
data.dirichlet_concentration = 0.5
"""

DEVICE_RUN = """\
k = 8
t_rounds = 3
method = aaggff-d
setting = cross_device
c = 0.4
b = 10
lr = 0.2
seed = 5
data.input_dim = 4
data.num_classes = 3
data.samples_per_client_mean = 40
"""


def write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseConfig:
    def test_minimal_single_run(self, tmp_path):
        suite = cli.parse_config(write_config(tmp_path, MINIMAL))
        assert len(suite.configs) == 1
        cfg = suite.configs[0]
        assert cfg.k == 2 and cfg.t_rounds == 1 and cfg.method == "fedavg"

    def test_method_setting_mismatch_rejected(self, tmp_path):
        bad = MINIMAL.replace("method = fedavg", "method = aaggff-d")
        with pytest.raises(ConfigError, match="method"):
            cli.parse_config(write_config(tmp_path, bad))

    def test_c_zero_rejected_with_field_message(self, tmp_path):
        bad = MINIMAL + "c = 0\n"
        with pytest.raises(ConfigError, match=r"c: c must be in \(0,1\]"):
            cli.parse_config(write_config(tmp_path, bad))

    def test_missing_required_field_named(self, tmp_path):
        with pytest.raises(ConfigError, match="t_rounds"):
            cli.parse_config(write_config(tmp_path, "k = 2\nmethod = fedavg\nsetting = cross_silo\n"))

    def test_unknown_field_named(self, tmp_path):
        with pytest.raises(ConfigError, match="frobnicate"):
            cli.parse_config(write_config(tmp_path, MINIMAL + "frobnicate = 1\n"))

    def test_bad_enum_named(self, tmp_path):
        with pytest.raises(ConfigError, match="cdf.kind"):
            cli.parse_config(write_config(tmp_path, MINIMAL + "cdf.kind = cauchy\n"))

    def test_bad_number_named(self, tmp_path):
        with pytest.raises(ConfigError, match="lr"):
            cli.parse_config(write_config(tmp_path, MINIMAL + "lr = fast\n"))

    def test_seeds_expand_to_runs(self, tmp_path):
        suite = cli.parse_config(write_config(tmp_path, MINIMAL + "seeds = 1,2,3\n"))
        assert [cfg.seed for cfg in suite.configs] == [1, 2, 3]

    def test_cli_seeds_override_file(self, tmp_path):
        suite = cli.parse_config(write_config(tmp_path, MINIMAL + "seeds = 1,2\n"), seeds=[9])
        assert [cfg.seed for cfg in suite.configs] == [9]

    def test_duplicate_seed_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="seeds"):
            cli.parse_config(write_config(tmp_path, MINIMAL + "seeds = 4,4\n"))

    def test_duplicate_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="duplicate"):
            cli.parse_config(write_config(tmp_path, MINIMAL + "k = 3\n"))

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        text = "# header\n\n" + MINIMAL + "   # trailing comment line\n"
        assert len(cli.parse_config(write_config(tmp_path, text)).configs) == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="no such file"):
            cli.parse_config(tmp_path / "absent.cfg")


class TestRunSuite:
    def test_single_run_emits_four_files_plus_csv(self, tmp_path):
        out = tmp_path / "out"
        code = cli.main(["run", str(write_config(tmp_path, SMALL_RUN)), "--out", str(out)])
        assert code == 0
        run_files = sorted(p.name for p in (out / "runs").iterdir())
        assert run_files == [
            "aaggff_s_seed5.cumobj.dat",
            "aaggff_s_seed5.entropy.dat",
            "aaggff_s_seed5.rounds.jsonl",
            "aaggff_s_seed5.summary.json",
        ]
        assert (out / "suite.csv").exists()

    def test_round_log_shape(self, tmp_path):
        out = tmp_path / "out"
        cli.main(["run", str(write_config(tmp_path, SMALL_RUN)), "--out", str(out)])
        lines = [json.loads(l) for l in (out / "runs/aaggff_s_seed5.rounds.jsonl").read_text().splitlines()]
        assert lines[0]["type"] == "meta" and lines[0]["schema"] == cli.SCHEMA_VERSION
        rounds = [l for l in lines if l["type"] == "round"]
        assert len(rounds) == 3
        assert lines[-1]["type"] == "client_eval"
        assert len(lines[-1]["accuracy"]) == 4
        for r in rounds:
            assert set(r) == {
                "type", "round", "sampled", "losses", "response",
                "response_estimated", "decision_prev", "decision", "decision_loss",
            }

    def test_rerun_byte_identical_log(self, tmp_path):
        cfg_path = write_config(tmp_path, SMALL_RUN)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cli.main(["run", str(cfg_path), "--out", str(out1)])
        cli.main(["run", str(cfg_path), "--out", str(out2)])
        log1 = (out1 / "runs/aaggff_s_seed5.rounds.jsonl").read_bytes()
        log2 = (out2 / "runs/aaggff_s_seed5.rounds.jsonl").read_bytes()
        assert log1 == log2

    def test_three_seeds_three_csv_rows(self, tmp_path):
        out = tmp_path / "out"
        code = cli.main(
            ["run", str(write_config(tmp_path, SMALL_RUN)), "--out", str(out), "--seeds", "1,2,3"]
        )
        assert code == 0
        rows = (out / "suite.csv").read_text().splitlines()
        assert rows[0] == ",".join(cli.CSV_COLUMNS)
        assert len(rows) == 4

    def test_summary_recomputable_from_log(self, tmp_path):
        out = tmp_path / "out"
        cli.main(["run", str(write_config(tmp_path, DEVICE_RUN, "dev.cfg")), "--out", str(out)])
        log_path = out / "runs/aaggff_d_seed5.rounds.jsonl"
        lines = [json.loads(l) for l in log_path.read_text().splitlines()]
        recomputed = cli.summary_from_log(lines)
        stored = json.loads((out / "runs/aaggff_d_seed5.summary.json").read_text())
        assert stored == json.loads(json.dumps(recomputed))

    def test_device_summary_flags_estimated_regret_and_bound(self, tmp_path):
        out = tmp_path / "out"
        cli.main(["run", str(write_config(tmp_path, DEVICE_RUN, "dev.cfg")), "--out", str(out)])
        summary = json.loads((out / "runs/aaggff_d_seed5.summary.json").read_text())
        assert summary["regret_responses_estimated"] is True
        assert summary["regret_bound"] is not None
        assert summary["bound_satisfied"] in (True, False)

    def test_plot_files_two_columns(self, tmp_path):
        out = tmp_path / "out"
        cli.main(["run", str(write_config(tmp_path, SMALL_RUN)), "--out", str(out)])
        for name in ("cumobj", "entropy"):
            lines = (out / f"runs/aaggff_s_seed5.{name}.dat").read_text().splitlines()
            assert lines[0].startswith("# fedfair schema=1")
            assert len(lines) == 4
            for row in lines[1:]:
                round_idx, value = row.split()
                assert int(round_idx) >= 1
                assert np.isfinite(float(value))

    def test_validate_only_writes_nothing(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli.main(
            ["run", str(write_config(tmp_path, SMALL_RUN)), "--out", str(out), "--validate-only"]
        )
        assert code == 0
        assert "1 run(s) validated" in capsys.readouterr().out
        assert not out.exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = write_config(tmp_path, MINIMAL + "c = 0\n")
        assert cli.main(["run", str(bad)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_run_failure_exit_code_and_summary(self, tmp_path):
        # A batch size larger than any client's sample count fails generation.
        text = SMALL_RUN.replace("b = 10", "b = 500")
        out = tmp_path / "out"
        code = cli.main(["run", str(write_config(tmp_path, text)), "--out", str(out)])
        assert code == 2
        summary = json.loads((out / "runs/aaggff_s_seed5.summary.json").read_text())
        assert summary["error"]
        csv_text = (out / "suite.csv").read_text()
        assert "failed" in csv_text

    def test_jobs_parallel_identical_output(self, tmp_path):
        cfg_path = write_config(tmp_path, SMALL_RUN)
        out1, out8 = tmp_path / "j1", tmp_path / "j8"
        cli.main(["run", str(cfg_path), "--out", str(out1), "--seeds", "1,2", "--jobs", "1"])
        cli.main(["run", str(cfg_path), "--out", str(out8), "--seeds", "1,2", "--jobs", "8"])
        for seed in (1, 2):
            a = (out1 / f"runs/aaggff_s_seed{seed}.rounds.jsonl").read_bytes()
            b = (out8 / f"runs/aaggff_s_seed{seed}.rounds.jsonl").read_bytes()
            assert a == b
