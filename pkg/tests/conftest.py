"""Shared fixtures: small hand-checkable datasets used across test modules."""
import numpy as np
import pytest

from recurtools import EDSSPanel, RecurrentEventTable


@pytest.fixture
def three_subject_table() -> RecurrentEventTable:
    """Three subjects, one event each: log PL is beta - log(2x+1) - log(x+1)."""
    return RecurrentEventTable.from_subject_events([
        ("A", 1, [1.0], 1.0),
        ("B", 0, [2.0], 2.0),
        ("C", 1, [3.0], 3.0),
    ])


@pytest.fixture
def figure_first_event_data():
    """Events at 2, 7, 9 and censorings at 21, 25."""
    time = np.array([2.0, 7.0, 9.0, 21.0, 25.0])
    event = np.array([1, 1, 1, 0, 0])
    return time, event


@pytest.fixture
def recurrent_figure_table() -> RecurrentEventTable:
    """Five subjects with 0-3 events each; mean function hits 1.25 at day 16."""
    return RecurrentEventTable.from_subject_events([
        ("A", 1, [2.0, 5.0], 13.0),
        ("B", 1, [7.0, 11.0, 16.0], 25.0),
        ("C", 0, [], 21.0),
        ("D", 0, [], 25.0),
        ("E", 0, [9.0], 25.0),
    ])


VISIT_GRID = np.array([1, 85, 169, 253, 337, 421, 505, 589, 673, 757])


def make_panel(scores, subject_id="P1", arm=0, days=None) -> EDSSPanel:
    days = VISIT_GRID[: len(scores)] if days is None else np.asarray(days)
    return EDSSPanel(subject_id, arm, days, np.asarray(scores, dtype=float))


def random_event_table(rng: np.random.Generator, n_subjects: int = 30,
                       rate: float = 0.1) -> RecurrentEventTable:
    """Random well-formed recurrent table for equality/robustness properties."""
    subjects = []
    for i in range(n_subjects):
        censor = float(rng.uniform(5.0, 40.0))
        gaps = rng.exponential(1.0 / rate, size=8)
        times = np.cumsum(gaps)
        times = times[times < censor]
        subjects.append((f"S{i:03d}", int(i % 2), list(times), censor))
    return RecurrentEventTable.from_subject_events(subjects)
