import numpy as np
import pytest

from frsf.exceptions import DegenerateSplitError, EmptySampleError, ValidationError
from frsf.survival import (
    StepFunction,
    group_counts,
    kaplan_meier,
    logrank_stat,
    nelson_aalen,
    risk_table,
)


def km_oracle(times, events, t):
    """Product over distinct event times <= t, by direct enumeration."""
    times = np.asarray(times, float)
    events = np.asarray(events, int)
    s = 1.0
    for ut in sorted(set(times[events == 1])):
        if ut > t:
            break
        d = np.sum((times == ut) & (events == 1))
        r = np.sum(times >= ut)
        s *= 1.0 - d / r
    return s


def na_oracle(times, events, t):
    """Sum over distinct event times <= t, by direct enumeration."""
    times = np.asarray(times, float)
    events = np.asarray(events, int)
    h = 0.0
    for ut in sorted(set(times[events == 1])):
        if ut > t:
            break
        d = np.sum((times == ut) & (events == 1))
        r = np.sum(times >= ut)
        h += d / r
    return h


def logrank_oracle(left_times, left_events, right_times, right_events):
    """Direct evaluation of the standardized two-group statistic."""
    lt = np.asarray(left_times, float)
    le = np.asarray(left_events, int)
    at = np.concatenate([lt, np.asarray(right_times, float)])
    ae = np.concatenate([le, np.asarray(right_events, int)])
    num = 0.0
    var = 0.0
    for ut in sorted(set(at[ae == 1])):
        d = np.sum((at == ut) & (ae == 1))
        r = np.sum(at >= ut)
        d1 = np.sum((lt == ut) & (le == 1))
        r1 = np.sum(lt >= ut)
        num += d1 - r1 * d / r
        if r > 1:
            var += (r1 / r) * (1 - r1 / r) * ((r - d) / (r - 1)) * d
    if var <= 0:
        return 0.0
    return abs(num) / np.sqrt(var)


class TestRiskTable:
    def test_hand_case(self):
        rt = risk_table([1, 2, 3], [1, 0, 1])
        assert rt.event_times.tolist() == [1, 3]
        assert rt.d.tolist() == [1, 1]
        assert rt.r.tolist() == [3, 1]

    def test_all_censored(self):
        rt = risk_table([1, 2, 3], [0, 0, 0])
        assert rt.event_times.size == 0

    def test_all_events_same_time(self):
        rt = risk_table([2.0] * 5, [1] * 5)
        assert rt.d.tolist() == [5]
        assert rt.r.tolist() == [5]

    def test_empty_raises(self):
        with pytest.raises(EmptySampleError):
            risk_table([], [])

    def test_bad_indicator(self):
        with pytest.raises(ValidationError):
            risk_table([1.0], [2])

    def test_censored_at_event_time_at_risk(self):
        # censoring at an event time stays in the risk set at that time
        rt = risk_table([5, 5, 8], [1, 0, 1])
        assert rt.r.tolist() == [3, 1]


class TestKaplanMeierNelsonAalen:
    def test_no_events(self):
        sf = kaplan_meier(risk_table([1, 2], [0, 0]))
        assert sf(0.5) == 1.0 and sf(10.0) == 1.0
        ch = nelson_aalen(risk_table([1, 2], [0, 0]))
        assert ch(10.0) == 0.0

    def test_hand_case(self):
        rt = risk_table([1, 2, 3], [1, 0, 1])
        sf = kaplan_meier(rt)
        assert sf(0.99) == 1.0
        assert sf(1.0) == pytest.approx(2 / 3, abs=1e-15)
        assert sf(2.5) == pytest.approx(2 / 3, abs=1e-15)
        assert sf(3.0) == pytest.approx(0.0, abs=1e-15)
        ch = nelson_aalen(rt)
        assert ch(1.0) == pytest.approx(1 / 3, abs=1e-15)
        assert ch(3.0) == pytest.approx(4 / 3, abs=1e-15)

    def test_single_subject(self):
        rt = risk_table([5.0], [1])
        sf = kaplan_meier(rt)
        assert sf(4.999) == 1.0 and sf(5.0) == 0.0

    def test_random_samples_match_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = rng.integers(1, 13)
            times = np.round(rng.uniform(0, 10, n), 1)
            events = rng.integers(0, 2, n)
            rt = risk_table(times, events)
            sf = kaplan_meier(rt)
            ch = nelson_aalen(rt)
            for t in np.concatenate([times, [0.0, 11.0]]):
                assert sf(t) == pytest.approx(km_oracle(times, events, t), abs=1e-12)
                assert ch(t) == pytest.approx(na_oracle(times, events, t), abs=1e-12)

    def test_monotonicity_and_range(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = rng.integers(2, 30)
            times = rng.exponential(5, n)
            events = rng.integers(0, 2, n)
            rt = risk_table(times, events)
            km = kaplan_meier(rt).values
            na = nelson_aalen(rt).values
            if km.size:
                assert np.all(np.diff(km) <= 1e-15)
                assert np.all((km >= -1e-15) & (km <= 1 + 1e-15))
                assert np.all(np.diff(na) >= -1e-15)
                assert np.all(na >= 0)

    def test_no_censoring_km_is_one_minus_ecdf(self):
        rng = np.random.default_rng(3)
        times = rng.uniform(0, 1, 40)
        rt = risk_table(times, np.ones(40, dtype=int))
        sf = kaplan_meier(rt)
        for t in np.linspace(0, 1, 23):
            assert sf(t) == pytest.approx(np.mean(times > t), abs=1e-12)

    def test_exp_minus_na_dominates_km(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = rng.integers(2, 25)
            times = rng.exponential(2, n)
            events = rng.integers(0, 2, n)
            rt = risk_table(times, events)
            if rt.event_times.size == 0:
                continue
            km = kaplan_meier(rt)
            na = nelson_aalen(rt)
            for t in times:
                assert np.exp(-na(t)) >= km(t) - 1e-12


class TestLogrank:
    def test_balanced_events_zero(self):
        # one event in each group at the same time: expected = observed
        left = ([1.0, 5.0], [1, 0])
        right = ([1.0, 5.0], [1, 0])
        assert logrank_stat(left, right) == pytest.approx(0.0, abs=1e-14)

    def test_single_time_hand_case(self):
        left = ([1.0] * 5, [1] * 5)
        right = ([2.0] * 5, [0] * 5)
        got = logrank_stat(left, right)
        want = logrank_oracle(*left, *right)
        assert got == pytest.approx(want, abs=1e-12)
        assert got > 0

    def test_symmetry_under_label_swap(self):
        rng = np.random.default_rng(19)
        for _ in range(30):
            lt = rng.exponential(1, 8)
            le = rng.integers(0, 2, 8)
            rt_ = rng.exponential(2, 6)
            re_ = rng.integers(0, 2, 6)
            if le.sum() + re_.sum() == 0:
                continue
            a = logrank_stat((lt, le), (rt_, re_))
            b = logrank_stat((rt_, re_), (lt, le))
            assert a == pytest.approx(b, abs=1e-12)

    def test_empty_group_raises(self):
        with pytest.raises(DegenerateSplitError):
            logrank_stat(([], []), ([1.0], [1]))

    def test_matches_oracle_random(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            nl = rng.integers(1, 12)
            nr = rng.integers(1, 12)
            lt = np.round(rng.uniform(0, 5, nl), 1)
            le = rng.integers(0, 2, nl)
            rt_ = np.round(rng.uniform(0, 5, nr), 1)
            re_ = rng.integers(0, 2, nr)
            got = logrank_stat((lt, le), (rt_, re_))
            want = logrank_oracle(lt, le, rt_, re_)
            assert got == pytest.approx(want, abs=1e-10)

    def test_single_at_risk_time_skipped(self):
        # last event has r=1; must not divide by zero
        left = ([1.0, 3.0], [1, 1])
        right = ([2.0], [0])
        got = logrank_stat(left, right)
        assert np.isfinite(got)
        assert got == pytest.approx(logrank_oracle(*left, *right), abs=1e-12)

    def test_matches_scipy_logrank(self):
        from scipy import stats

        rng = np.random.default_rng(7)
        compared = 0
        for _ in range(60):
            n1, n2 = rng.integers(5, 40, 2)
            t1 = rng.exponential(1.0, n1)
            c1 = rng.uniform(0, 2, n1)
            t2 = rng.exponential(1.5, n2)
            c2 = rng.uniform(0, 2, n2)
            x1, d1 = np.minimum(t1, c1), t1 <= c1
            x2, d2 = np.minimum(t2, c2), t2 <= c2
            if d1.sum() + d2.sum() == 0:
                continue
            ours = logrank_stat((x1, d1.astype(int)), (x2, d2.astype(int)))
            a = stats.CensoredData(uncensored=x1[d1], right=x1[~d1])
            b = stats.CensoredData(uncensored=x2[d2], right=x2[~d2])
            assert ours == pytest.approx(abs(stats.logrank(a, b).statistic), abs=1e-12)
            compared += 1
        assert compared >= 50


class TestGroupCounts:
    def test_matches_direct_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = rng.integers(1, 20)
            times = np.round(rng.uniform(0, 4, n), 1)
            events = rng.integers(0, 2, n)
            evt = np.unique(np.round(rng.uniform(0, 4, 6), 1))
            d1, r1 = group_counts(evt, times, events)
            for k, ut in enumerate(evt):
                assert d1[k] == np.sum((times == ut) & (events == 1))
                assert r1[k] == np.sum(times >= ut)


class TestStepFunction:
    def test_left_value_and_steps(self):
        f = StepFunction(np.array([1.0, 2.0]), np.array([0.5, 0.25]), left_value=1.0)
        assert f(0.0) == 1.0
        assert f(1.0) == 0.5
        assert f(1.5) == 0.5
        assert f(2.0) == 0.25
        assert np.allclose(f(np.array([0.0, 1.0, 3.0])), [1.0, 0.5, 0.25])

    def test_before_gives_left_limit(self):
        f = StepFunction(np.array([1.0, 2.0]), np.array([0.5, 0.25]), left_value=1.0)
        assert f.before(1.0) == 1.0
        assert f.before(2.0) == 0.5
        assert f.before(5.0) == 0.25
