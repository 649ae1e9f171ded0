import pytest

from frsf.data import (
    Dataset,
    Observation,
    SubjectSeries,
    assemble_dataset,
    load_dataset,
    observations_to_csv,
    parse_observations,
    parse_subjects,
    subjects_to_csv,
)
from frsf.exceptions import (
    CensoringConsistencyError,
    CsvParseError,
    MissingSeriesError,
    SchemaError,
    ValidationError,
)

OBS = "subject_id,time,value\n"
SUBJ = "subject_id,event_time,event,age,charlson,gender\n"


class TestParseObservations:
    def test_single_row(self):
        out = parse_observations(OBS + "s1,0,7\n")
        assert out == {"s1": [Observation(0.0, 7.0)]}

    def test_rows_sorted_by_time(self):
        out = parse_observations(OBS + "s1,2,5\ns1,1,3\n")
        assert [o.time for o in out["s1"]] == [1.0, 2.0]

    def test_malformed_row_names_line(self):
        with pytest.raises(CsvParseError) as exc:
            parse_observations(OBS + "s1,0,abc\n")
        assert exc.value.line == 2

    def test_duplicate_time_rejected(self):
        with pytest.raises(ValidationError):
            parse_observations(OBS + "s1,1,2\ns1,1,3\n")

    def test_bad_header(self):
        with pytest.raises(SchemaError):
            parse_observations("id,t,y\ns1,0,1\n")

    def test_empty_file(self):
        with pytest.raises(SchemaError):
            parse_observations("")


class TestParseSubjects:
    def test_direct_field_mapping(self):
        out, names = parse_subjects(SUBJ + "s1,10,1,63,2,1\n")
        assert names == ("age", "charlson", "gender")
        et, ev, covs = out["s1"]
        assert et == 10.0 and ev is True
        assert covs == {"age": 63.0, "charlson": 2.0, "gender": 1.0}

    def test_event_out_of_range(self):
        with pytest.raises(ValidationError):
            parse_subjects(SUBJ + "s1,10,2,63,2,1\n")

    def test_empty_file_schema_error(self):
        with pytest.raises(SchemaError):
            parse_subjects("")

    def test_missing_covariate_cell(self):
        with pytest.raises(ValidationError):
            parse_subjects(SUBJ + "s1,10,1,63,,1\n")

    def test_no_covariates_allowed(self):
        out, names = parse_subjects("subject_id,event_time,event\ns1,4,0\n")
        assert names == ()
        assert out["s1"] == (4.0, False, {})


class TestAssemble:
    def _subjects(self, et=3.0):
        return {"s1": (et, True, {"age": 60.0})}

    def test_accepts_consistent(self):
        obs = {"s1": [Observation(1.0, 2.0), Observation(2.0, 3.0)]}
        ds = assemble_dataset(obs, self._subjects())
        assert ds.n == 1
        assert ds.subjects[0].n_obs == 2

    def test_rejects_observation_after_event(self):
        obs = {"s1": [Observation(1.0, 2.0), Observation(4.0, 3.0)]}
        with pytest.raises(CensoringConsistencyError):
            assemble_dataset(obs, self._subjects())

    def test_sofa_like_follow_up_length(self):
        obs = {"s1": [Observation(0.0, 2.0)]}
        ds = assemble_dataset(obs, {"s1": (173.0, False, {})}, domain=(0.0, 173.0))
        assert ds.follow_up_length == 173.0

    def test_missing_series(self):
        with pytest.raises(MissingSeriesError):
            assemble_dataset({}, self._subjects())

    def test_unknown_observation_subject(self):
        obs = {"s1": [Observation(1.0, 2.0)], "sX": [Observation(0.0, 0.0)]}
        with pytest.raises(ValidationError):
            assemble_dataset(obs, self._subjects())

    def test_default_domain(self):
        obs = {"s1": [Observation(1.0, 2.0), Observation(2.0, 3.0)]}
        ds = assemble_dataset(obs, self._subjects(et=5.0))
        assert ds.domain == (1.0, 5.0)

    def test_covariate_mismatch_rejected(self):
        obs = {
            "s1": [Observation(1.0, 2.0)],
            "s2": [Observation(1.0, 2.0)],
        }
        subj = {"s1": (3.0, True, {"age": 60.0}), "s2": (3.0, True, {"bmi": 22.0})}
        with pytest.raises(ValidationError):
            assemble_dataset(obs, subj)


class TestInvariants:
    def test_strictly_increasing_times_enforced(self):
        with pytest.raises(ValidationError):
            SubjectSeries("s1", (Observation(1.0, 0.0), Observation(1.0, 1.0)), 2.0, True)

    def test_event_time_within_domain(self):
        s = SubjectSeries("s1", (Observation(0.0, 1.0),), 5.0, True)
        with pytest.raises(ValidationError):
            Dataset((s,), domain=(0.0, 4.0), covariate_names=())

    def test_duplicate_ids_rejected(self):
        s = SubjectSeries("s1", (Observation(0.0, 1.0),), 1.0, True)
        with pytest.raises(ValidationError):
            Dataset((s, s), domain=(0.0, 2.0), covariate_names=())


class TestRoundTrip:
    def test_serialize_parse_identical(self):
        obs_text = OBS + "s1,0,7.25\ns1,1.5,3\ns2,0.5,-1.0\n"
        subj_text = SUBJ + "s1,10,1,63,2,1\ns2,2.5,0,41.5,0,0\n"
        ds = load_dataset(obs_text, subj_text)
        ds2 = load_dataset(observations_to_csv(ds), subjects_to_csv(ds), domain=ds.domain)
        assert ds2 == ds
