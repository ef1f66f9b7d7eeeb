"""Recurrent confirmed-disability-progression (CDP) derivation.

A CDP event needs two ingredients: an initial disability progression (IDP) —
a visit whose score exceeds the current reference by the required increase —
and a confirmation visit at least the confirmation period later, with every
assessment in between also at or above the threshold.  Four definition
variants arise from two switches:

* event timing: the event is dated at the IDP visit (``ONSET``) or at the
  confirmation visit (``CONFIRMATION``);
* reference handling: the reference score stays at baseline between events
  (``FIXED``) or additionally rolls down to a sustained improvement
  (``ROVING``).

After each event the reference moves up to the IDP score, so a subject can
accumulate several events over one panel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import EDSSPanel, RecurrentEventTable
from .errors import PanelTooShortError

# Study weeks are nominal: 12 weeks count as 84 days, but 24 weeks as 161,
# one day after week 23, not 168.
_WEEKS_TO_DAYS = {12: 84, 24: 161}


@dataclass(frozen=True)
class EndpointConfig:
    """Switches selecting one of the CDP definition variants."""

    event_timing: str = "CONFIRMATION"
    confirm_weeks: int = 12
    reference: str = "FIXED"
    roving_period_weeks: int = 24

    def __post_init__(self):
        if self.event_timing not in ("ONSET", "CONFIRMATION"):
            raise ValueError(f"unknown event_timing {self.event_timing!r}")
        if self.confirm_weeks not in _WEEKS_TO_DAYS:
            raise ValueError("confirm_weeks must be 12 or 24")
        if self.reference not in ("FIXED", "ROVING"):
            raise ValueError(f"unknown reference {self.reference!r}")
        if self.reference == "ROVING" and self.roving_period_weeks not in _WEEKS_TO_DAYS:
            raise ValueError("roving_period_weeks must be 12 or 24")

    @property
    def confirm_days(self) -> int:
        return _WEEKS_TO_DAYS[self.confirm_weeks]

    @property
    def roving_days(self) -> int:
        return _WEEKS_TO_DAYS[self.roving_period_weeks]

    def label(self) -> str:
        tag = f"CDP{self.confirm_weeks}-{self.event_timing.lower()}"
        if self.reference == "ROVING":
            tag += f"-roving{self.roving_period_weeks}"
        return tag


@dataclass
class ReferenceState:
    """Current comparison score and the visit where it was set."""

    reference_score: float
    reference_index: int


def required_increase(reference: float) -> float:
    """Score step that counts as progression from the given reference."""
    return 0.5 if reference > 5.5 else 1.0


def derive_cdp(panel: EDSSPanel, cfg: EndpointConfig) -> np.ndarray:
    """Flag the CDP events in one subject's panel.

    Returns a 0/1 array aligned with ``panel.visit_days``; entry 1 marks a CDP
    event dated at that visit under ``cfg.event_timing``.

    The scan keeps a single pending IDP.  While one is pending, visits that
    hold the threshold advance toward confirmation and a visit that drops
    below it cancels the IDP; the cancelling visit is then reconsidered as a
    fresh starting point.  Once an event registers, the reference moves to the
    IDP score and scanning resumes at the IDP visit (``ONSET``) or at the
    confirmation visit (``CONFIRMATION``) so that the stretch already walked
    is re-judged against the new reference.  With a ``ROVING`` reference, a
    sustained drop — the same lowered score held over the roving period —
    pulls the reference down to the current score between events.
    """
    days = panel.visit_days
    scores = panel.scores
    n = len(days)
    if n < 1:
        raise PanelTooShortError(f"subject {panel.subject_id}: empty panel")
    flags = np.zeros(n, dtype=np.int64)
    ref = ReferenceState(float(scores[0]), 0)
    pending: int | None = None
    run_start: int | None = None  # start of a candidate lowered-reference run
    roving = cfg.reference == "ROVING"

    i = 1
    while i < n:
        inc = required_increase(ref.reference_score)
        chg = scores[i] - ref.reference_score
        if pending is None:
            if chg >= inc:
                pending = i
                run_start = None
                i += 1
                continue
            if roving:
                if chg < 0:
                    if run_start is None or scores[i] != scores[run_start]:
                        run_start = i
                    elif days[i] - days[run_start] >= cfg.roving_days:
                        ref = ReferenceState(float(scores[i]), i)
                        run_start = None
                else:
                    run_start = None
            i += 1
            continue
        if chg >= inc:
            if days[i] - days[pending] < cfg.confirm_days:
                i += 1
                continue
            onset = cfg.event_timing == "ONSET"
            flags[pending if onset else i] = 1
            ref = ReferenceState(float(scores[pending]), pending)
            # Re-judge the confirmed stretch against the raised reference:
            # the very visit we resume at may open the next IDP.
            i = pending if onset else i
            pending = None
            run_start = None
            continue
        # threshold lost before confirmation — drop the IDP and reconsider
        # this same visit with a clear slate
        pending = None

    return flags


def panel_to_event_table(panel: EDSSPanel, cfg: EndpointConfig) -> RecurrentEventTable:
    """Counting-process rows for one subject's derived CDP events.

    Censoring is the last visit day; an event on the final visit absorbs the
    censoring row.
    """
    flags = derive_cdp(panel, cfg)
    event_days = panel.visit_days[flags == 1].astype(float)
    censor = float(panel.visit_days[-1])
    return RecurrentEventTable.from_subject_events(
        [(panel.subject_id, panel.arm, event_days, censor, panel.frailty)]
    )
