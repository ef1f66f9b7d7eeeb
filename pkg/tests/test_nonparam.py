"""Nonparametric estimators checked against hand-computed examples."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recurtools import (
    DegenerateArmError,
    EmptyInputError,
    RecurrentEventTable,
    cmf,
    cmf_score,
    cmf_test,
    kaplan_meier,
    nelson_aalen,
)

from conftest import random_event_table


class TestNelsonAalen:
    def test_figure_example(self, figure_first_event_data):
        na = nelson_aalen(*figure_first_event_data)
        np.testing.assert_array_equal(na.jump_times, [2.0, 7.0, 9.0])
        assert na(9.0) == pytest.approx(1 / 5 + 1 / 4 + 1 / 3, abs=1e-15)
        assert na(25.0) == na(9.0)  # flat past the last event

    def test_right_continuity(self, figure_first_event_data):
        na = nelson_aalen(*figure_first_event_data)
        assert na(2.0) == pytest.approx(0.2)
        assert na(1.999) == 0.0
        assert na(0.0) == 0.0

    def test_single_subject(self):
        na = nelson_aalen([3.0], [1])
        assert na(3.0) == 1.0

    def test_no_events_is_zero(self):
        na = nelson_aalen([4.0, 8.0], [0, 0])
        assert na(100.0) == 0.0
        assert len(na.jump_times) == 0

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            nelson_aalen([], [])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            nelson_aalen([1.0, 2.0], [1])


class TestKaplanMeier:
    def test_figure_example(self, figure_first_event_data):
        km = kaplan_meier(*figure_first_event_data)
        assert km(9.0) == pytest.approx((4 / 5) * (3 / 4) * (2 / 3), rel=1e-15)
        assert km(1.0) == 1.0
        assert km(2.0) == pytest.approx(0.8)

    def test_no_events_is_one(self):
        km = kaplan_meier([4.0, 8.0], [0, 0])
        assert km(100.0) == 1.0

    def test_product_integral_of_hazard(self, figure_first_event_data):
        """KM equals the product over jumps of one minus the hazard increment."""
        time, event = figure_first_event_data
        na = nelson_aalen(time, event)
        km = kaplan_meier(time, event)
        increments = np.diff(na.values, prepend=0.0)
        np.testing.assert_allclose(km.values, np.cumprod(1.0 - increments),
                                   rtol=1e-12)

    def test_vectorized_evaluation(self, figure_first_event_data):
        km = kaplan_meier(*figure_first_event_data)
        out = km(np.array([0.0, 2.0, 9.0, 30.0]))
        np.testing.assert_allclose(out, [1.0, 0.8, 0.4, 0.4], rtol=1e-12)


class TestConfidenceBand:
    def test_band_brackets_estimate(self, figure_first_event_data):
        na = nelson_aalen(*figure_first_event_data)
        low, high = na.confidence_band()
        assert np.all(low <= na.values + 1e-15)
        assert np.all(na.values <= high + 1e-15)
        assert np.all(low >= 0.0)

    def test_wider_at_higher_level(self, figure_first_event_data):
        na = nelson_aalen(*figure_first_event_data)
        low95, high95 = na.confidence_band(0.95)
        low99, high99 = na.confidence_band(0.99)
        assert np.all(low99 <= low95)
        assert np.all(high95 <= high99)


class TestMeanCumulativeFunction:
    def test_figure_example(self, recurrent_figure_table):
        mu = cmf(recurrent_figure_table)
        np.testing.assert_array_equal(mu.jump_times, [2, 5, 7, 9, 11, 16])
        assert mu(16.0) == pytest.approx(1.25, abs=1e-12)
        assert mu(13.0) == pytest.approx(1.0, abs=1e-12)
        assert mu(1.0) == 0.0

    def test_single_subject_counts_events(self):
        table = RecurrentEventTable.from_subject_events([("A", 0, [2.0, 5.0], 13.0)])
        mu = cmf(table)
        assert mu(5.0) == 2.0
        assert mu(2.0) == 1.0
        assert mu(13.0) == 2.0

    def test_matches_nelson_aalen_on_first_events(self, figure_first_event_data):
        """With at most one event per subject the mean function is the
        cumulative hazard estimate."""
        time, event = figure_first_event_data
        subjects = [(f"S{i}", 0, [t] if e else [], t)
                    for i, (t, e) in enumerate(zip(time, event))]
        mu = cmf(RecurrentEventTable.from_subject_events(subjects))
        na = nelson_aalen(time, event)
        np.testing.assert_array_equal(mu.jump_times, na.jump_times)
        np.testing.assert_allclose(mu.values, na.values, rtol=1e-12)

    def test_subject_order_invariance(self):
        rng = np.random.default_rng(7)
        base = random_event_table(rng, n_subjects=25)
        subjects = [(sid, int(base.arm[base.subject_id == sid][0]),
                     list(base.tstop[(base.subject_id == sid) & (base.event == 1)]),
                     float(base.tstop[base.subject_id == sid].max()))
                    for sid in dict.fromkeys(base.subject_id)]
        shuffled = RecurrentEventTable.from_subject_events(subjects[::-1])
        a, b = cmf(RecurrentEventTable.from_subject_events(subjects)), cmf(shuffled)
        np.testing.assert_array_equal(a.jump_times, b.jump_times)
        np.testing.assert_array_equal(a.values, b.values)


class TestScoreTest:
    @pytest.fixture
    def two_subject_table(self):
        return RecurrentEventTable.from_subject_events([
            ("A", 0, [5.0], 10.0),
            ("B", 1, [], 10.0),
        ])

    def test_pseudo_score_value(self, two_subject_table):
        w, v = cmf_score(two_subject_table)
        assert w == pytest.approx(-0.5, abs=1e-15)
        assert v == 0.0

    def test_degenerate_variance_gives_nan(self, two_subject_table):
        stat, p = cmf_test(two_subject_table)
        assert np.isnan(stat) and np.isnan(p)

    def test_identical_arms(self, recurrent_figure_table):
        """Mirroring every pattern into the other arm zeroes the score."""
        t = recurrent_figure_table
        subjects = []
        for arm in (0, 1):
            for sid in dict.fromkeys(t.subject_id):
                events = list(t.tstop[(t.subject_id == sid) & (t.event == 1)])
                censor = float(t.tstop[t.subject_id == sid].max())
                subjects.append((f"{sid}/{arm}", arm, events, censor))
        stat, p = cmf_test(RecurrentEventTable.from_subject_events(subjects))
        assert stat == 0.0
        assert p == 1.0

    def test_detects_rate_difference(self):
        rng = np.random.default_rng(11)
        subjects = []
        for i in range(120):
            arm = i % 2
            rate = 0.25 if arm == 0 else 0.05
            times = np.cumsum(rng.exponential(1.0 / rate, size=12))
            subjects.append((f"S{i}", arm, list(times[times < 20.0]), 20.0))
        stat, p = cmf_test(RecurrentEventTable.from_subject_events(subjects))
        assert stat > 0.0
        assert p < 0.01

    def test_single_arm_rejected(self):
        table = RecurrentEventTable.from_subject_events([
            ("A", 0, [5.0], 10.0),
            ("B", 0, [], 10.0),
        ])
        with pytest.raises(DegenerateArmError):
            cmf_score(table)
        with pytest.raises(DegenerateArmError):
            cmf_test(table)

    def test_tau_truncation(self):
        """Events past tau must not influence the comparison."""
        full = RecurrentEventTable.from_subject_events([
            ("A", 0, [5.0, 18.0], 20.0),
            ("B", 1, [6.0], 20.0),
        ])
        w_tau, v_tau = cmf_score(full, tau=10.0)
        truncated = RecurrentEventTable.from_subject_events([
            ("A", 0, [5.0], 10.0),
            ("B", 1, [6.0], 10.0),
        ])
        w_ref, v_ref = cmf_score(truncated)
        assert w_tau == pytest.approx(w_ref, abs=1e-14)
        assert v_tau == pytest.approx(v_ref, abs=1e-14)


# ---------------------------------------------------------------------------
# properties


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_km_product_integral_identity_random(seed):
    rng = np.random.default_rng(seed)
    n = 30
    time = rng.exponential(10.0, size=n).round(1) + 0.1
    event = rng.integers(0, 2, size=n)
    if not event.any():
        event[0] = 1
    na = nelson_aalen(time, event)
    km = kaplan_meier(time, event)
    np.testing.assert_array_equal(na.jump_times, km.jump_times)
    increments = np.diff(na.values, prepend=0.0)
    np.testing.assert_allclose(km.values, np.cumprod(1.0 - increments),
                               rtol=1e-10, atol=1e-14)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_cmf_is_nondecreasing(seed):
    table = random_event_table(np.random.default_rng(seed))
    mu = cmf(table)
    assert np.all(np.diff(mu.values) >= 0.0)
    assert mu.initial == 0.0
