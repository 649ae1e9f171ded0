import json

import numpy as np
import pytest

from frsf.data import Dataset, Observation, SubjectSeries
from frsf.exceptions import SchemaError
from frsf.fpca import FunctionalPCA, build_grid
from frsf.pipeline import FunctionalSurvivalForest, step_gridded
from frsf.simulate import SimConfig, gen_dataset


@pytest.fixture(scope="module")
def sim_data():
    cfg = SimConfig(
        n_subjects=80,
        lambdas=(2.0, 0.5),
        gamma=(1.0, 0.0),
        sigma2=0.05,
        scheme="dense",
        dense_step=0.1,
        lambda0=0.5,
        n_noise_covariates=1,
        seed=21,
    )
    return gen_dataset(cfg)


@pytest.fixture(scope="module")
def fitted(sim_data):
    ds, _ = sim_data
    return FunctionalSurvivalForest(grid_step=0.1, n_trees=20, seed=5).fit(ds)


class TestStepGridded:
    def test_carry_forward_and_backfill(self):
        s = SubjectSeries(
            "s", (Observation(0.2, 1.0), Observation(0.6, 3.0)), 0.9, True
        )
        g = build_grid((0.0, 1.0), 0.25)
        out = step_gridded(s, g)
        # nodes 0, .25, .5, .75 <= 0.9; node 0 backfills to first obs
        assert out.n_nodes == 4
        assert np.allclose(out.values, [1.0, 1.0, 1.0, 3.0])


class TestFunctionalPCATransformer:
    def test_fit_transform_shapes(self, sim_data):
        ds, _ = sim_data
        from frsf.basis import fit_cfd

        curves = [fit_cfd(s, domain_start=0.0) for s in ds.subjects]
        fp = FunctionalPCA(grid_step=0.1, fve=0.9, domain=ds.domain)
        scores = fp.fit_transform(curves)
        assert scores.shape == (80, fp.model_.p)
        recon = fp.inverse_transform(scores[:3])
        assert recon.shape == (3, fp.model_.grid.nodes.size)

    def test_get_params_clone(self):
        from sklearn.base import clone

        fp = FunctionalPCA(grid_step=0.2, fve=0.9)
        assert clone(fp).get_params()["grid_step"] == 0.2


class TestFitPredict:
    def test_feature_frame_layout(self, sim_data, fitted):
        ds, _ = sim_data
        est = fitted
        p = est.model_.p
        assert est.frame_.names[:p] == tuple(f"PC{k+1}" for k in range(p))
        assert est.frame_.names[p:] == ("noise1",)
        assert est.frame_.X.shape == (80, p + 1)

    def test_predict_training_matches_inbag_ensemble(self, sim_data, fitted):
        ds, _ = sim_data
        est = fitted
        from frsf.forest import ensemble_chf_ib, predict_mortality

        mort = est.predict(ds)
        want = [
            predict_mortality(
                ensemble_chf_ib(est.forest_, est.frame_.X[i]), est.forest_.event_times
            )
            for i in range(5)
        ]
        assert np.allclose(mort[:5], want, atol=1e-12)

    def test_covariate_schema_mismatch(self, sim_data, fitted):
        ds, _ = sim_data
        bad_subjects = tuple(
            SubjectSeries(s.subject_id, s.observations, s.event_time, s.event, {"other": 1.0})
            for s in ds.subjects
        )
        bad = Dataset(bad_subjects, ds.domain, ("other",))
        with pytest.raises(SchemaError):
            fitted.predict(bad)

    def test_survival_functions_valid(self, sim_data, fitted):
        ds, _ = sim_data
        fns = fitted.predict_survival_function(ds)
        for fn in fns[:5]:
            assert np.all(fn.values <= 1 + 1e-12) and np.all(fn.values >= -1e-12)
            assert np.all(np.diff(fn.values) <= 1e-12)


class TestOobReport:
    def test_report_fields(self, fitted):
        rep = fitted.oob_report(config={"note": 1})
        assert 0.0 <= rep.oob_cindex <= 1.0
        assert rep.rpe == pytest.approx(1 - rep.oob_cindex)
        assert rep.crps >= 0.0
        assert rep.config["note"] == 1
        assert rep.config["p"] == fitted.model_.p
        assert "bw_mean" in rep.config

    def test_error_curve_length(self, fitted):
        curve = fitted.oob_error_curve()
        assert len(curve) == 20
        assert curve[0][0] == 1 and curve[-1][0] == 20


class TestPersistence:
    def test_round_trip_predictions_identical(self, sim_data, fitted):
        ds, _ = sim_data
        blob = json.dumps(fitted.to_dict(), sort_keys=True)
        back = FunctionalSurvivalForest.from_dict(json.loads(blob))
        assert np.array_equal(fitted.predict(ds), back.predict(ds))
        assert json.dumps(back.to_dict(), sort_keys=True) == blob

    def test_std_mode_round_trip(self, sim_data):
        ds, _ = sim_data
        est = FunctionalSurvivalForest(grid_step=0.1, curve_mode="std", n_trees=10, seed=7).fit(ds)
        back = FunctionalSurvivalForest.from_dict(json.loads(json.dumps(est.to_dict())))
        assert np.array_equal(est.predict(ds), back.predict(ds))
        assert back.curves_ is None


class TestDeterminism:
    def test_same_seed_same_model(self, sim_data):
        ds, _ = sim_data
        a = FunctionalSurvivalForest(grid_step=0.1, n_trees=8, seed=3).fit(ds)
        b = FunctionalSurvivalForest(grid_step=0.1, n_trees=8, seed=3).fit(ds)
        assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)

    def test_different_seed_different_forest(self, sim_data):
        ds, _ = sim_data
        a = FunctionalSurvivalForest(grid_step=0.1, n_trees=8, seed=3).fit(ds)
        b = FunctionalSurvivalForest(grid_step=0.1, n_trees=8, seed=4).fit(ds)
        assert json.dumps(a.forest_.to_dict()) != json.dumps(b.forest_.to_dict())
