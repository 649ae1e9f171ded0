import json
from pathlib import Path

import pytest

from frsf.cli import main


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    rc = run(
        [
            "simulate", "--n", 60, "--lambdas", "2.0,0.5", "--gamma", "1.0,0",
            "--sigma2", "0.05", "--scheme", "dense", "--dense-step", "0.1",
            "--lambda0", "0.5", "--noise-covariates", 1, "--seed", 31,
            "--out-dir", out,
        ]
    )
    assert rc == 0
    return out


class TestSimulate:
    def test_writes_three_files(self, sim_dir):
        assert (sim_dir / "observations.csv").exists()
        assert (sim_dir / "subjects.csv").exists()
        assert (sim_dir / "ground_truth.csv").exists()

    def test_deterministic_rerun(self, sim_dir, tmp_path):
        rc = run(
            [
                "simulate", "--n", 60, "--lambdas", "2.0,0.5", "--gamma", "1.0,0",
                "--sigma2", "0.05", "--scheme", "dense", "--dense-step", "0.1",
                "--lambda0", "0.5", "--noise-covariates", 1, "--seed", 31,
                "--out-dir", tmp_path,
            ]
        )
        assert rc == 0
        for name in ("observations.csv", "subjects.csv", "ground_truth.csv"):
            assert (tmp_path / name).read_bytes() == (sim_dir / name).read_bytes()


class TestFit:
    def test_fit_writes_model(self, sim_dir, tmp_path):
        model = tmp_path / "model.json"
        rc = run(
            [
                "fit", "--obs", sim_dir / "observations.csv",
                "--subjects", sim_dir / "subjects.csv",
                "--h", 0.1, "--ntrees", 10, "--seed", 3, "--out", model,
            ]
        )
        assert rc == 0
        doc = json.loads(model.read_text())
        assert set(doc) >= {"config", "model", "forest", "frame"}
        assert doc["model"]["smoothing"]["kernel"] == "epanechnikov"

    def test_missing_file_exit_2(self, tmp_path):
        rc = run(["fit", "--obs", tmp_path / "nope.csv", "--subjects", tmp_path / "nope2.csv"])
        assert rc == 2

    def test_bad_h_exit_2(self, sim_dir, tmp_path):
        rc = run(
            [
                "fit", "--obs", sim_dir / "observations.csv",
                "--subjects", sim_dir / "subjects.csv",
                "--h", 50.0, "--out", tmp_path / "m.json",
            ]
        )
        assert rc == 2

    def test_byte_identical_rerun(self, sim_dir, tmp_path):
        args = [
            "fit", "--obs", sim_dir / "observations.csv",
            "--subjects", sim_dir / "subjects.csv",
            "--h", 0.1, "--ntrees", 8, "--seed", 5,
        ]
        rc1 = run(args + ["--out", tmp_path / "m1.json"])
        rc2 = run(args + ["--out", tmp_path / "m2.json"])
        assert rc1 == rc2 == 0
        assert (tmp_path / "m1.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


class TestEval:
    def test_eval_outputs(self, sim_dir, tmp_path):
        rc = run(
            [
                "eval", "--obs", sim_dir / "observations.csv",
                "--subjects", sim_dir / "subjects.csv",
                "--h", 0.1, "--ntrees", 8, "--seed", 2,
                "--train-frac", 0.8, "--repeats", 2,
                "--arms", "std,cfd:0.1", "--out-dir", tmp_path,
            ]
        )
        assert rc == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert set(report["arms"]) == {"std", "cfd_h0.1"}
        for arm in report["arms"].values():
            assert len(arm["repeats"]) == 2
            assert "crps" in arm["summary"] and "rpe" in arm["summary"]
            # reports carry the resolved smoothing setup for auditability
            resolved = arm["repeats"][0]["resolved_config"]
            assert resolved["kernel"] == "epanechnikov"
            assert resolved["bw_mean"] > 0
        brier = (tmp_path / "brier.csv").read_text().splitlines()
        assert brier[0] == "arm,repeat,t,bs"
        assert len(brier) > 2
        curve = (tmp_path / "error_curve.csv").read_text().splitlines()
        assert curve[0] == "arm,repeat,n_trees,oob_error"
        metrics = (tmp_path / "metrics.csv").read_text().splitlines()
        assert metrics[0] == "arm,repeat,metric,value"
        assert any(line.startswith("std,0,crps,") for line in metrics)

    def test_fraction_enters_split_seed(self, sim_dir, tmp_path):
        import numpy as np

        from frsf.cli import _stratified_split

        events = np.array([0, 1] * 20)
        a = _stratified_split(events, 0.5, np.random.default_rng((7, 500000, 0)))
        b = _stratified_split(events, 0.8, np.random.default_rng((7, 800000, 0)))
        assert a.size != b.size or not np.array_equal(a, b[: a.size])

    def test_bad_fraction_exit_2(self, sim_dir, tmp_path):
        rc = run(
            [
                "eval", "--obs", sim_dir / "observations.csv",
                "--subjects", sim_dir / "subjects.csv",
                "--train-frac", 1.5, "--out-dir", tmp_path,
            ]
        )
        assert rc == 2

    def test_unknown_arm_exit_2(self, sim_dir, tmp_path):
        rc = run(
            [
                "eval", "--obs", sim_dir / "observations.csv",
                "--subjects", sim_dir / "subjects.csv",
                "--arms", "bogus", "--out-dir", tmp_path,
            ]
        )
        assert rc == 2


@pytest.fixture(scope="module")
def model_path(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "model.json"
    rc = run(
        [
            "fit", "--obs", sim_dir / "observations.csv",
            "--subjects", sim_dir / "subjects.csv",
            "--h", 0.1, "--ntrees", 10, "--seed", 3, "--out", out,
        ]
    )
    assert rc == 0
    return out


class TestVimpPredict:

    def test_vimp_csv(self, model_path, tmp_path):
        out = tmp_path / "vimp.csv"
        rc = run(["vimp", "--model", model_path, "--repeats", 3, "--seed", 1, "--out", out])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "feature,importance,relative_importance"
        imps = [float(l.split(",")[1]) for l in lines[1:]]
        assert imps == sorted(imps, reverse=True)

    def test_vimp_missing_model_exit_2(self, tmp_path):
        rc = run(["vimp", "--model", tmp_path / "none.json", "--out", tmp_path / "v.csv"])
        assert rc == 2

    def test_predict_self(self, model_path, sim_dir, tmp_path):
        out = tmp_path / "pred.csv"
        rc = run(
            [
                "predict", "--model", model_path,
                "--obs", sim_dir / "observations.csv",
                "--subjects", sim_dir / "subjects.csv",
                "--out", out,
            ]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "subject_id,mortality,t,survival"
        assert len(lines) > 60
        assert "np.float" not in out.read_text()
        sid, m, t, s = lines[1].split(",")
        assert float(m) >= 0 and 0 <= float(s) <= 1

    def test_predict_schema_mismatch_exit_2(self, model_path, sim_dir, tmp_path):
        subj = (sim_dir / "subjects.csv").read_text().splitlines()
        subj[0] = subj[0].replace("noise1", "unseen_covariate")
        bad = tmp_path / "subjects_bad.csv"
        bad.write_text("\n".join(subj) + "\n")
        rc = run(
            [
                "predict", "--model", model_path,
                "--obs", sim_dir / "observations.csv",
                "--subjects", bad, "--out", tmp_path / "p.csv",
            ]
        )
        assert rc == 2

    def test_predict_empty_subjects(self, model_path, sim_dir, tmp_path):
        bad = tmp_path / "empty_subjects.csv"
        bad.write_text("subject_id,event_time,event,noise1\n")
        empty_obs = tmp_path / "empty_obs.csv"
        empty_obs.write_text("subject_id,time,value\n")
        out = tmp_path / "pred.csv"
        rc = run(
            ["predict", "--model", model_path, "--obs", empty_obs, "--subjects", bad, "--out", out]
        )
        assert rc == 0
        assert out.read_text().splitlines() == ["subject_id,mortality,t,survival"]


class TestConfigFile:
    def test_config_defaults_and_flag_override(self, sim_dir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"ntrees": 6, "seed": 9, "h": 0.1}))
        m1 = tmp_path / "m1.json"
        rc = run(
            [
                "--config", cfg, "fit", "--obs", sim_dir / "observations.csv",
                "--subjects", sim_dir / "subjects.csv", "--out", m1,
            ]
        )
        assert rc == 0
        doc = json.loads(m1.read_text())
        assert doc["config"]["n_trees"] == 6 and doc["config"]["seed"] == 9
        m2 = tmp_path / "m2.json"
        rc = run(
            [
                "--config", cfg, "fit", "--obs", sim_dir / "observations.csv",
                "--subjects", sim_dir / "subjects.csv", "--ntrees", 4, "--out", m2,
            ]
        )
        assert rc == 0
        assert json.loads(m2.read_text())["config"]["n_trees"] == 4
