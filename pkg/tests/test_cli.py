"""End-to-end CLI tests on a desk-scale configuration."""
import json

import pytest

from mlcv.cli import main


@pytest.fixture()
def config_path(tmp_path):
    config = {
        "benchmark": {
            "K": 21,
            "T": 0.5,
            "nu_min": 0.001,
            "nu_max": 0.009,
            "levels": {"nodes": [15, 30, 60, 120], "costs": [0.125, 0.25, 0.5, 1.0]},
        },
        "methods": ["MC", "MLMC"],
        "budgets": [60, 120],
        "replicates": 3,
        "surrogates": {
            "doe_sizes": [40, 30, 20, 12],
            "p_max": 1,
            "max_terms": 6,
            "pool": 50,
            "test_size": 50,
            "anneal_iterations": 20,
        },
        "master_seed": 11,
        "n_init": 5,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


class TestBuildSurrogates:
    def test_writes_models_and_quality(self, config_path, tmp_path, capsys):
        out = tmp_path / "surr"
        assert main(["build-surrogates", str(config_path), "--out", str(out)]) == 0
        for name in ("level0", "level1", "level2", "level3", "diff1", "diff2", "diff3"):
            assert (out / f"{name}.json").exists()
        assert (out / "quality.csv").exists()
        text = capsys.readouterr().out
        assert "construction cost" in text

    def test_models_round_trip(self, config_path, tmp_path):
        from mlcv.pce import PcSurrogate

        out = tmp_path / "surr"
        main(["build-surrogates", str(config_path), "--out", str(out)])
        model = PcSurrogate.load(out / "level0.json")
        assert model.n_terms >= 1


class TestEstimate:
    def test_mc_run_writes_record(self, config_path, tmp_path, capsys):
        record = tmp_path / "run.json"
        code = main([
            "estimate", str(config_path),
            "--method", "MC", "--budget", "80", "--out", str(record),
        ])
        assert code == 0
        data = json.loads(record.read_text())
        assert data["method"] == "MC"
        assert data["consumed"] == 80.0
        assert "estimate" in capsys.readouterr().out

    def test_mlmc_with_prebuilt_surrogates(self, config_path, tmp_path):
        surr = tmp_path / "surr"
        main(["build-surrogates", str(config_path), "--out", str(surr)])
        record = tmp_path / "run.json"
        code = main([
            "estimate", str(config_path),
            "--method", "MLMC-MLCV[0]", "--budget", "100",
            "--surrogates", str(surr), "--out", str(record),
        ])
        assert code == 0
        data = json.loads(record.read_text())
        assert len(data["trace"]) >= 1
        assert len(data["levels"]) == 4

    def test_seed_override_changes_estimate(self, config_path, tmp_path):
        outs = []
        for seed in (1, 2):
            record = tmp_path / f"run{seed}.json"
            main([
                "estimate", str(config_path), "--method", "MC",
                "--budget", "40", "--seed", str(seed), "--out", str(record),
            ])
            outs.append(json.loads(record.read_text())["estimate"])
        assert outs[0] != outs[1]


class TestCampaignCommand:
    def test_writes_report_files(self, config_path, tmp_path):
        out = tmp_path / "camp"
        assert main(["campaign", str(config_path), "--out", str(out)]) == 0
        csv = (out / "campaign.csv").read_text()
        assert csv.splitlines()[0] == "method,budget,total_cost,rmse,mean,sd,replicates,status"
        assert len(csv.strip().splitlines()) == 1 + 4


class TestTablesCommand:
    def test_writes_correlations_and_quantities(self, config_path, tmp_path):
        out = tmp_path / "tables"
        code = main([
            "tables", str(config_path), "--out", str(out), "--sample-size", "100",
        ])
        assert code == 0
        corr = (out / "correlations.csv").read_text().splitlines()
        assert corr[0].startswith("name,Y0,Y1,Y2,Y3")
        assert (out / "level_quantities.csv").exists()


class TestAllocationCommand:
    def test_reads_traces(self, config_path, tmp_path, capsys):
        record = tmp_path / "run.json"
        main(["estimate", str(config_path), "--method", "MLMC", "--budget", "100", "--out", str(record)])
        capsys.readouterr()
        code = main(["allocation", str(config_path), str(record)])
        assert code == 0
        text = capsys.readouterr().out
        assert text.startswith("method,level,n_median")


class TestErrors:
    def test_missing_config(self, capsys):
        assert main(["campaign", "/nonexistent/config.json", "--out", "x"]) == 1
        err = capsys.readouterr().err
        record = json.loads(err)
        assert record["error"] == "FileNotFoundError"

    def test_malformed_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"budgets": [100, 50]}')
        assert main(["campaign", str(bad), "--out", str(tmp_path / "o")]) == 1
        record = json.loads(capsys.readouterr().err)
        assert record["error"] == "ConfigError"


class TestVarianceStatisticCli:
    def test_estimate_variance(self, config_path, tmp_path):
        record = tmp_path / "var.json"
        code = main([
            "estimate", str(config_path), "--method", "MLMC",
            "--budget", "100", "--statistic", "variance", "--out", str(record),
        ])
        assert code == 0
        data = json.loads(record.read_text())
        assert data["statistic"] == "variance"
