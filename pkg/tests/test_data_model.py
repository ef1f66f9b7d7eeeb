import numpy as np
import pandas as pd
import pytest

from recurtools import (
    EDSS_GRID,
    DataError,
    EDSSPanel,
    EmptyInputError,
    RecurrentEventTable,
    ScenarioConfig,
    read_edss_csv,
    read_recurrent_csv,
    read_wlw_csv,
    score_to_state,
    state_to_score,
    to_wlw,
    validate_table,
    validate_wlw,
    write_edss_csv,
    write_recurrent_csv,
    write_wlw_csv,
)


class TestScoreMapping:
    def test_grid(self):
        assert EDSS_GRID[0] == 2.0
        assert EDSS_GRID[-1] == 7.5
        assert len(EDSS_GRID) == 12

    def test_state_to_score_endpoints(self):
        assert state_to_score(1) == 2.0
        assert state_to_score(2) == 2.5
        assert state_to_score(12) == 7.5

    def test_round_trip_over_grid(self):
        states = np.arange(1, 13)
        np.testing.assert_array_equal(score_to_state(state_to_score(states)), states)
        np.testing.assert_allclose(state_to_score(states), EDSS_GRID)

    def test_low_scores_clamp_to_state_one(self):
        assert score_to_state(0.0) == 1
        assert score_to_state(1.5) == 1


class TestFromSubjectEvents:
    def test_two_row_subject(self):
        t = RecurrentEventTable.from_subject_events([("X", 1, [5.0], 20.0)])
        np.testing.assert_array_equal(t.tstart, [0.0, 5.0])
        np.testing.assert_array_equal(t.tstop, [5.0, 20.0])
        np.testing.assert_array_equal(t.event, [1, 0])
        np.testing.assert_array_equal(t.sevent, [1, 2])
        np.testing.assert_array_equal(t.nevents, [1, 1])

    def test_event_at_censoring_absorbs_final_row(self):
        t = RecurrentEventTable.from_subject_events([("X", 0, [7.0], 7.0)])
        assert len(t) == 1
        assert t.event[0] == 1

    def test_event_free_subject(self):
        t = RecurrentEventTable.from_subject_events([("X", 0, [], 10.0)])
        assert len(t) == 1
        assert t.event[0] == 0
        assert t.nevents[0] == 0

    def test_rejects_unordered_times(self):
        with pytest.raises(DataError):
            RecurrentEventTable.from_subject_events([("X", 0, [5.0, 3.0], 10.0)])

    def test_rejects_event_past_censoring(self):
        with pytest.raises(DataError):
            RecurrentEventTable.from_subject_events([("X", 0, [12.0], 10.0)])

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            RecurrentEventTable.from_subject_events([])


def test_tgap_identity(recurrent_figure_table):
    np.testing.assert_array_equal(
        recurrent_figure_table.tgap,
        recurrent_figure_table.tstop - recurrent_figure_table.tstart,
    )


def test_subject_codes_first_appearance_order():
    t = RecurrentEventTable.from_subject_events([
        ("zeta", 0, [], 5.0), ("alpha", 1, [1.0], 5.0), ("mid", 0, [], 5.0),
    ])
    codes, ids = t.subject_codes()
    assert list(ids) == ["zeta", "alpha", "mid"]
    np.testing.assert_array_equal(codes, [0, 1, 1, 2])


def test_first_event_rows_is_idempotent(recurrent_figure_table):
    first = recurrent_figure_table.first_event_rows()
    assert len(first) == 5
    np.testing.assert_array_equal(first.sevent, np.ones(5))
    again = first.first_event_rows()
    np.testing.assert_array_equal(again.tstop, first.tstop)


def test_subject_counts(recurrent_figure_table):
    ids, arm, count, exposure = recurrent_figure_table.subject_counts()
    assert list(ids) == ["A", "B", "C", "D", "E"]
    np.testing.assert_array_equal(count, [2, 3, 0, 0, 1])
    np.testing.assert_array_equal(exposure, [13.0, 25.0, 21.0, 25.0, 25.0])
    np.testing.assert_array_equal(arm, [1, 1, 0, 0, 0])


class TestWLWConversion:
    def test_three_event_subject(self):
        t = RecurrentEventTable.from_subject_events([("B", 1, [7.0, 11.0, 16.0], 25.0)])
        w = to_wlw(t, k=4)
        np.testing.assert_array_equal(w.tstop, [7.0, 11.0, 16.0, 25.0])
        np.testing.assert_array_equal(w.event, [1, 1, 1, 0])
        np.testing.assert_array_equal(w.sevent, [1, 2, 3, 4])

    def test_event_free_subject_repeats_censoring(self):
        t = RecurrentEventTable.from_subject_events([("C", 0, [], 21.0)])
        w = to_wlw(t, k=3)
        np.testing.assert_array_equal(w.tstop, [21.0, 21.0, 21.0])
        np.testing.assert_array_equal(w.event, [0, 0, 0])

    def test_truncates_past_k(self):
        t = RecurrentEventTable.from_subject_events([("X", 0, [1, 2, 3, 4, 5], 9.0)])
        w = to_wlw(t, k=3)
        np.testing.assert_array_equal(w.tstop, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(w.event, [1, 1, 1])

    def test_rank_one_rows_reproduce_first_event_data(self, recurrent_figure_table):
        w = to_wlw(recurrent_figure_table, k=4)
        rank1 = w.sevent == 1
        first = recurrent_figure_table.first_event_rows()
        np.testing.assert_array_equal(w.tstop[rank1], first.tstop)
        np.testing.assert_array_equal(w.event[rank1], first.event)

    def test_k_rows_per_subject(self, recurrent_figure_table):
        w = to_wlw(recurrent_figure_table, k=4)
        assert len(w) == 4 * recurrent_figure_table.n_subjects
        assert validate_wlw(w).ok


class TestValidateTable:
    def _raw(self, tstart, tstop, event, sevent=None, nevents=None):
        n = len(tstart)
        ev = np.asarray(event)
        return RecurrentEventTable(
            np.array(["U1"] * n, dtype=object), np.zeros(n, dtype=int),
            np.asarray(tstart, dtype=float), np.asarray(tstop, dtype=float), ev,
            np.asarray(sevent) if sevent is not None else np.arange(1, n + 1),
            np.asarray(nevents) if nevents is not None else np.full(n, ev.sum()),
        )

    def test_well_formed_passes(self):
        report = validate_table(self._raw([0, 5], [5, 20], [1, 0]))
        assert report.ok, report

    def test_gap_between_rows_flagged(self):
        report = validate_table(self._raw([0, 4], [5, 20], [1, 0]))
        assert not report.ok
        assert any("tstart" in v for v in report.violations)

    def test_degenerate_interval_flagged(self):
        report = validate_table(self._raw([0], [0], [0]))
        assert not report.ok

    def test_event_only_on_last_row_rule(self):
        # censoring row in the middle of a subject's history is invalid
        report = validate_table(self._raw([0, 5], [5, 20], [0, 1]))
        assert not report.ok

    def test_arm_outside_binary_flagged(self):
        t = RecurrentEventTable(
            np.array(["U1"], dtype=object), np.array([2]), np.array([0.0]),
            np.array([5.0]), np.array([1]), np.array([1]), np.array([1]))
        assert not validate_table(t).ok


class TestCsvRoundTrip:
    def test_recurrent_exact(self, tmp_path, recurrent_figure_table):
        path = tmp_path / "t.csv"
        write_recurrent_csv(recurrent_figure_table, path)
        back = read_recurrent_csv(path)
        np.testing.assert_array_equal(back.subject_id.astype(str),
                                      recurrent_figure_table.subject_id.astype(str))
        np.testing.assert_array_equal(back.tstop, recurrent_figure_table.tstop)
        np.testing.assert_array_equal(back.event, recurrent_figure_table.event)

    def test_recurrent_preserves_float_bits(self, tmp_path):
        t = RecurrentEventTable.from_subject_events([("X", 0, [2 / 7, 1 / 3], 0.9)])
        path = tmp_path / "t.csv"
        write_recurrent_csv(t, path)
        back = read_recurrent_csv(path)
        assert back.tstop[0] == 2 / 7  # bitwise, thanks to 17-digit formatting
        assert back.tstop[1] == 1 / 3

    def test_wlw_round_trip(self, tmp_path, recurrent_figure_table):
        w = to_wlw(recurrent_figure_table, k=4)
        path = tmp_path / "w.csv"
        write_wlw_csv(w, path)
        back = read_wlw_csv(path)
        np.testing.assert_array_equal(back.tstop, w.tstop)
        assert back.k == 4

    def test_edss_round_trip(self, tmp_path):
        panels = [EDSSPanel("P1", 0, np.array([1, 85, 169]), np.array([2.0, 3.0, 3.0])),
                  EDSSPanel("P2", 1, np.array([1, 85]), np.array([6.0, 6.5]))]
        path = tmp_path / "e.csv"
        write_edss_csv(panels, path)
        back = read_edss_csv(path)
        assert len(back) == 2
        np.testing.assert_array_equal(back[0].visit_days, panels[0].visit_days)
        np.testing.assert_array_equal(back[1].scores, panels[1].scores)

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("USUBJID,ARMCD,TSTART\nA,0,0\n")
        with pytest.raises(DataError):
            read_recurrent_csv(path)

    def test_unknown_extra_column_rejected(self, tmp_path, recurrent_figure_table):
        path = tmp_path / "t.csv"
        write_recurrent_csv(recurrent_figure_table, path)
        df = pd.read_csv(path)
        df["MYSTERY"] = 1
        df.to_csv(path, index=False)
        with pytest.raises(DataError):
            read_recurrent_csv(path)

    def test_paramcd_metadata_column_ignored(self, tmp_path, recurrent_figure_table):
        path = tmp_path / "t.csv"
        write_recurrent_csv(recurrent_figure_table, path)
        df = pd.read_csv(path)
        df["PARAMCD"] = "CDP12"
        df.to_csv(path, index=False)
        back = read_recurrent_csv(path)
        assert len(back) == len(recurrent_figure_table)

    def test_tgap_inconsistency_rejected(self, tmp_path, recurrent_figure_table):
        path = tmp_path / "t.csv"
        write_recurrent_csv(recurrent_figure_table, path)
        df = pd.read_csv(path)
        df.loc[0, "TGAP"] = df.loc[0, "TGAP"] + 1.0
        df.to_csv(path, index=False)
        with pytest.raises(DataError):
            read_recurrent_csv(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("USUBJID,ARMCD,TSTART,TSTOP,TGAP,EVENT,SEVENT,NEVENTS\n")
        with pytest.raises(EmptyInputError):
            read_recurrent_csv(path)


class TestScenarioConfig:
    def test_defaults(self):
        cfg = ScenarioConfig()
        assert cfg.setup == "S1"
        assert cfg.n_first_events == 246
        assert cfg.horizon == 1513.0
        assert cfg.true_beta == pytest.approx(np.log(0.7))

    def test_s2_horizon_and_unknown_truth(self):
        cfg = ScenarioConfig(setup="S2")
        assert cfg.horizon == 673.0
        assert cfg.true_beta is None

    def test_flat_dict_round_trip(self):
        cfg = ScenarioConfig(setup="S2", n=400, effect=0.8, phi=0.15,
                             event_timing="ONSET", name="roundtrip")
        back = ScenarioConfig.from_flat_dict(cfg.to_flat_dict())
        assert back == cfg

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            ScenarioConfig(setup="S3")
        with pytest.raises(ValueError):
            ScenarioConfig(phi=-0.1)
        with pytest.raises(ValueError):
            ScenarioConfig(n=100, n_first_events=200)
        with pytest.raises(ValueError):
            ScenarioConfig.from_flat_dict({"not_a_field": "1"})

    def test_baseline_probs_must_sum_to_one(self):
        with pytest.raises(ValueError):
            ScenarioConfig(setup="S2", baseline_probs=np.full(12, 0.05))


def test_tables_are_immutable(recurrent_figure_table):
    with pytest.raises((ValueError, AttributeError)):
        recurrent_figure_table.tstop[0] = 99.0
